#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iaasim/machine.hpp"

namespace iaasim {

class IaaSService;

/** One request for `count` identical VMs, served all-or-nothing. */
struct VMRequest {
  enum class Status { queued, scheduled, rejected };

  std::uint64_t id = 0;
  VMImage image;
  ResourceVector per_vm;
  std::size_t count = 1;
  /** Where the image bytes come from.  Null restricts placement to machines
   *  whose repository already holds the image (pre-staged operation). */
  Repository* image_source = nullptr;
  Status status = Status::queued;
  Tick submitted = 0;
  std::vector<VMPtr> vms;
  /** Fires once, when the request turns scheduled or rejected. */
  std::function<void(VMRequest&)> on_decision;
};

using VMRequestPtr = std::shared_ptr<VMRequest>;

/** Picks queued requests and places their VMs. */
class VMScheduler {
public:
  virtual ~VMScheduler() = default;
  virtual std::string name() const = 0;
  /** Work through the queue; true when anything was scheduled or rejected. */
  virtual bool dispatch(IaaSService& service) = 0;
};

/** Serve in arrival order; an unservable head blocks everything behind it. */
class FirstFitVMScheduler : public VMScheduler {
public:
  std::string name() const override { return "first-fit"; }
  bool dispatch(IaaSService& service) override;
};

/** Serve what fits right now, reject the rest; the queue never holds work. */
class NonQueuingVMScheduler : public VMScheduler {
public:
  std::string name() const override { return "non-queuing"; }
  bool dispatch(IaaSService& service) override;
};

/** Reorder the queue so the smallest requests go first, then serve like
 *  first-fit.  Ties break by memory, then arrival. */
class SmallestFirstVMScheduler : public VMScheduler {
public:
  std::string name() const override { return "smallest-first"; }
  bool dispatch(IaaSService& service) override;
};

/** Decides which machines are powered. */
class PMScheduler {
public:
  virtual ~PMScheduler() = default;
  virtual std::string name() const = 0;
  virtual void react(IaaSService& service) = 0;
  /** The machine is about to be removed; drop any state referring to it. */
  virtual void forget(PhysicalMachine&) {}
};

/** Keep every machine switched on at all times. */
class AlwaysOnPMScheduler : public PMScheduler {
public:
  std::string name() const override { return "always-on"; }
  void react(IaaSService& service) override;
};

/** Turn machines on only when the queue needs them (fewest that cover the
 *  servable prefix of the queue, in registration order) and switch them off
 *  again once they sat idle for a grace period. */
class OnDemandPMScheduler : public PMScheduler {
public:
  explicit OnDemandPMScheduler(Tick grace_ticks) : grace_(grace_ticks) {}
  ~OnDemandPMScheduler() override;

  std::string name() const override { return "on-demand"; }
  void react(IaaSService& service) override;
  void forget(PhysicalMachine& pm) override;

private:
  void consider_shutdown(IaaSService& service, PhysicalMachine& pm);

  Tick grace_;
  SimClock* clock_ = nullptr;
  std::unordered_map<PhysicalMachine*, DeferredEvent> shutdown_timers_;
};

/** Orchestrates machines, repositories, VM requests and the two scheduler
 *  policies.  Every capacity change (allocation released, machine state
 *  flipped, VM gone) re-runs the schedulers until the system settles. */
class IaaSService {
public:
  IaaSService(SharingKernel& kernel, std::unique_ptr<VMScheduler> vm_scheduler,
              std::unique_ptr<PMScheduler> pm_scheduler);
  ~IaaSService();

  IaaSService(const IaaSService&) = delete;
  IaaSService& operator=(const IaaSService&) = delete;

  SharingKernel& kernel() const { return kernel_; }

  PhysicalMachine& register_pm(PhysicalMachine::Config config);

  /** Remove a machine.  With load on it this throws unless forcible, which
   *  destroys the hosted VMs abruptly (each emits its destroyed-state
   *  notification) and cancels outstanding allocations; the machine object is
   *  reclaimed one tick after its repository quiesces. */
  void deregister_pm(PhysicalMachine& pm, bool forcible = false);

  /** Add a service-level store (the first one becomes the default image
   *  source for requests that do not name one). */
  Repository& register_repository(double capacity_bytes, double net_in_bytes_per_s,
                                  double net_out_bytes_per_s, std::string name);

  /** Remove a service-level store.  Pending transfers make this illegal. */
  void deregister_repository(Repository& repo);

  /** Queue a request for `count` identical VMs.  A single VM has to fit some
   *  registered machine's total capacity or the request is refused up front
   *  with UnfitError; counts the park cannot satisfy at once simply stay
   *  queued until capacity appears. */
  VMRequestPtr request_vms(VMImage image, const ResourceVector& per_vm, std::size_t count = 1,
                           Repository* image_source = nullptr,
                           std::function<void(VMRequest&)> on_decision = nullptr);

  /** Turn a queued request away (non-queuing policy); fires the decision
   *  callback and the queue-change channel. */
  void reject(VMRequest& request);

  /** Tear a VM down and give its capacity back. */
  void terminate_vm(const VMPtr& vm, bool kill_tasks = true);

  /** Change a running VM's share atomically; false when it does not fit. */
  bool resize_vm(const VMPtr& vm, const ResourceVector& resources);

  std::vector<std::unique_ptr<PhysicalMachine>>& machines() { return machines_; }
  const std::vector<std::unique_ptr<PhysicalMachine>>& machines() const { return machines_; }
  const std::vector<std::unique_ptr<Repository>>& repositories() const { return repositories_; }
  std::deque<VMRequestPtr>& queue() { return queue_; }
  const std::deque<VMRequestPtr>& queue() const { return queue_; }
  const std::vector<VMPtr>& vms() const { return vms_; }

  struct CloudState {
    std::size_t machines = 0;
    std::size_t machines_running = 0;
    std::size_t machines_switching = 0;
    std::size_t machines_off = 0;
    std::size_t vms = 0;
    std::size_t vms_running = 0;
    std::size_t queued_requests = 0;
    double total_capacity_units_per_s = 0.0;
    double running_capacity_units_per_s = 0.0;
    double free_cores = 0.0;
    double free_memory_bytes = 0.0;
    std::string vm_scheduler;
    std::string pm_scheduler;
  };
  CloudState query_state() const;

  /** Could `count` copies of per_vm run side by side on an empty park? */
  bool ever_servable(const ResourceVector& per_vm, std::size_t count) const;

  /** Place every VM of the request right now, or change nothing.  Meant for
   *  VM schedulers; the request must still be in the queue's custody. */
  bool try_serve(VMRequest& request);

  /** Re-run the schedulers until nothing changes.  Safe to call from inside
   *  handlers; nested calls fold into the running loop. */
  void trigger();

  using VMEventHandler = std::function<void(VirtualMachine&, VMState, VMState)>;
  std::uint64_t on_vm_event(VMEventHandler handler);
  void remove_vm_event_handler(std::uint64_t token);

  /** Fires with the signed processing delta (units/s) whenever a machine
   *  enters or leaves the running state, or a running machine is removed. */
  using CapacityHandler = std::function<void(PhysicalMachine&, double delta_units_per_s)>;
  std::uint64_t on_capacity_change(CapacityHandler handler);
  void remove_capacity_handler(std::uint64_t token);

  /** Fires on enqueue and on every request decision (scheduled/rejected). */
  using QueueHandler = std::function<void(const VMRequest&)>;
  std::uint64_t on_queue_change(QueueHandler handler);
  void remove_queue_handler(std::uint64_t token);

  /** Fires whenever any registered machine gives capacity back. */
  using ReleaseHandler = std::function<void(PhysicalMachine&)>;
  std::uint64_t on_allocation_release(ReleaseHandler handler);
  void remove_release_handler(std::uint64_t token);

private:
  void note_vm_state(VirtualMachine& vm, VMState prev, VMState next);
  void note_capacity(PhysicalMachine& pm, double delta_units_per_s);
  void note_queue(const VMRequest& request);
  void note_release(PhysicalMachine& pm);
  void drain_sweep();
  void reap_machine(PhysicalMachine* pm);
  void arm_reap_flush();

  SharingKernel& kernel_;
  SimClock& clock_;
  std::unique_ptr<VMScheduler> vm_scheduler_;
  std::unique_ptr<PMScheduler> pm_scheduler_;
  // Machines before VMs: teardown destroys guests while their hosts live.
  std::vector<std::unique_ptr<PhysicalMachine>> machines_;
  std::vector<std::unique_ptr<Repository>> repositories_;
  std::deque<VMRequestPtr> queue_;
  std::vector<VMPtr> vms_;
  // Destroyed VMs and drained machines are held here until the next tick so
  // the destroy call stack never frees the object under its own feet.
  std::vector<VMPtr> vm_reap_;
  std::vector<std::unique_ptr<PhysicalMachine>> machine_reap_;
  bool reap_flush_armed_ = false;
  std::unordered_set<PhysicalMachine*> draining_;
  std::vector<std::pair<std::uint64_t, VMEventHandler>> vm_event_handlers_;
  std::vector<std::pair<std::uint64_t, CapacityHandler>> capacity_handlers_;
  std::vector<std::pair<std::uint64_t, QueueHandler>> queue_handlers_;
  std::vector<std::pair<std::uint64_t, ReleaseHandler>> release_handlers_;
  std::uint64_t next_request_id_ = 1;
  std::uint64_t next_vm_serial_ = 1;
  std::uint64_t next_token_ = 1;
  bool in_trigger_ = false;
  bool retrigger_ = false;
  bool suppress_triggers_ = false;
};

} // namespace iaasim
