#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iaasim/clock.hpp"
#include "iaasim/sharing.hpp"

namespace iaasim {

/** Network attachment point: an inbound and an outbound spreader.  Incoming
 *  traffic shares s_in, outgoing shares s_out, so full-duplex links contend
 *  per direction exactly like CPU cores contend on a machine. */
class NetworkNode {
public:
  NetworkNode(SharingKernel& kernel, double in_bytes_per_s, double out_bytes_per_s,
              std::string name);

  NetworkNode(const NetworkNode&) = delete;
  NetworkNode& operator=(const NetworkNode&) = delete;

  const std::string& name() const { return name_; }
  ResourceSpreader& input() { return input_; }
  ResourceSpreader& output() { return output_; }
  const ResourceSpreader& input() const { return input_; }
  const ResourceSpreader& output() const { return output_; }

  /** One-way latency in ticks towards `to`.  Transfers to nodes without an
   *  entry are refused; a node reaches itself with zero latency. */
  void set_latency_to(const NetworkNode& to, Tick ticks) { latency_[&to] = ticks; }
  std::optional<Tick> latency_to(const NetworkNode& to) const;

private:
  std::string name_;
  ResourceSpreader input_;
  ResourceSpreader output_;
  std::unordered_map<const NetworkNode*, Tick> latency_;
};

struct StorageObject {
  std::string id;
  double size_bytes = 0.0;
};

struct TransferOptions {
  /** Ceiling in bytes per tick for this transfer (intermediary hook). */
  double per_tick_limit = std::numeric_limits<double>::infinity();
  /** Store the copy under this id at the destination (defaults to source id). */
  std::string target_id;
};

/** Object store with a fixed capacity and its own network node.
 *
 *  Space accounting is pessimistic: a transfer reserves its full size at
 *  initiation and either commits (object appears) or releases (cancel) later,
 *  so concurrent transfers can never oversubscribe the disk.
 */
class Repository {
public:
  using TransferHandler = std::function<void(ConsumptionOutcome)>;

  Repository(SharingKernel& kernel, double capacity_bytes, double net_in_bytes_per_s,
             double net_out_bytes_per_s, std::string name);

  Repository(const Repository&) = delete;
  Repository& operator=(const Repository&) = delete;

  const std::string& name() const { return name_; }
  NetworkNode& node() { return node_; }
  const NetworkNode& node() const { return node_; }

  double capacity_bytes() const { return capacity_; }
  double used_bytes() const { return used_; }           // committed objects
  double reserved_bytes() const { return reserved_; }   // in-flight transfers
  double free_bytes() const { return capacity_ - used_ - reserved_; }

  /** Add an object that is simply already here (no transfer).  Throws when it
   *  would not fit or the id is taken. */
  void register_object(const StorageObject& object);

  /** Drop an object.  False when the id is unknown. */
  bool deregister_object(const std::string& id);

  const StorageObject* lookup(const std::string& id) const;
  std::vector<StorageObject> contents() const;

  /** Move a copy of `object_id` into `destination` over the network.  Latency
   *  holds the consumption on the kernel's null spreaders before the bytes
   *  start moving; destination space is reserved immediately either way.
   *  Returns the driving consumption (cancel it to abort the transfer). */
  ConsumptionPtr transfer_to(Repository& destination, const std::string& object_id,
                             TransferOptions options = {}, TransferHandler handler = nullptr);

  /** Serialize `object` into this repository through the node's own loopback
   *  (memory snapshots).  Reserves space immediately. */
  ConsumptionPtr store_stream(const StorageObject& object, TransferHandler handler = nullptr);

  /** Stream a stored object back out through the loopback without moving it
   *  (memory snapshot restore).  No space accounting changes. */
  ConsumptionPtr read_stream(const std::string& object_id, TransferHandler handler = nullptr);

  /** Transfers and streams currently leaving this repository. */
  std::size_t live_outbound() const { return live_outbound_; }

private:
  ConsumptionPtr start_transfer(Repository& destination, const StorageObject& object,
                                ResourceSpreader& out, ResourceSpreader& in, Tick latency,
                                TransferOptions options, TransferHandler handler);

  SharingKernel& kernel_;
  std::string name_;
  double capacity_;
  double used_ = 0.0;
  double reserved_ = 0.0;
  std::size_t live_outbound_ = 0;
  NetworkNode node_;
  std::unordered_map<std::string, StorageObject> objects_;
};

} // namespace iaasim
