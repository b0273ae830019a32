#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "iaasim/clock.hpp"
#include "iaasim/progress.hpp"

namespace iaasim {

class ResourceSpreader;
class InfluenceGroup;
class SharingKernel;
class SchedulingLogic;

enum class SpreaderRole { provider, consumer };

enum class ConsumptionOutcome { completed, cancelled };

/** A piece of work exchanged between one provider and one consumer spreader.
 *
 *  State is the triple (p_u, p_r, p_l): units produced but not yet consumed,
 *  units not yet produced, and the per-tick ceiling either side may move.
 *  The kernel advances registered consumptions whenever their influence group
 *  reaches a processing point; progress between processing points is linear at
 *  the last assigned shares.
 */
class ResourceConsumption {
public:
  using Handler = std::function<void(ResourceConsumption&, ConsumptionOutcome)>;

  std::uint64_t id() const { return id_; }
  double under_processing() const { return state_.under_processing; }
  double remaining() const { return state_.remaining; }
  double per_tick_limit() const { return limit_; }
  double initial_total() const { return initial_total_; }
  double produced_total() const { return produced_total_; }
  double consumed_total() const { return consumed_total_; }

  bool registered() const { return registered_; }
  bool finished() const { return finished_; }
  bool completed() const { return finished_ && completed_; }
  bool cancelled() const { return finished_ && !completed_; }

  ResourceSpreader* provider() const { return provider_; }
  ResourceSpreader* consumer() const { return consumer_; }

  /** Units per tick granted by the current schedule; meaningful only while
   *  share_assigned(). */
  double provider_share() const { return provider_share_; }
  double consumer_share() const { return consumer_share_; }
  bool share_assigned() const { return share_assigned_; }

  /** Completion handler; fires exactly once, with completed or cancelled. */
  void on_finish(Handler h) { handler_ = std::move(h); }

  /** Rescale the per-tick ceiling (intermediary hook).  Takes effect at the
   *  next processing point of the owning group. */
  void set_per_tick_limit(double limit);

private:
  friend class SharingKernel;
  friend class InfluenceGroup;
  friend class MaxMinFairness;
  friend class EqualSplit;
  friend double apply_provider_step(ResourceConsumption&);
  friend double apply_consumer_step(ResourceConsumption&);

  ResourceConsumption(SharingKernel& kernel, std::uint64_t id, double total, double limit);

  SharingKernel& kernel_;
  std::uint64_t id_;
  progress::State state_;
  double limit_;
  double initial_total_;
  double completion_eps_;
  double produced_total_ = 0.0;
  double consumed_total_ = 0.0;
  double provider_share_ = 0.0;
  double consumer_share_ = 0.0;
  bool share_assigned_ = false;
  bool registered_ = false;
  bool finished_ = false;
  bool completed_ = false;
  bool cancel_requested_ = false;
  bool deregister_requested_ = false;
  ResourceSpreader* provider_ = nullptr;
  ResourceSpreader* consumer_ = nullptr;
  ResourceSpreader* migrate_provider_ = nullptr; // pending retarget, consumed at settle
  ResourceSpreader* migrate_consumer_ = nullptr;
  Handler handler_;
};

using ConsumptionPtr = std::shared_ptr<ResourceConsumption>;

/** One side of the sharing model: something that can produce into or drain
 *  from consumptions at up to per_tick_capacity * processing_factor units per
 *  tick, split across all of its registered consumptions by the kernel's
 *  scheduling logic.
 */
class ResourceSpreader {
public:
  ResourceSpreader(SharingKernel& kernel, SpreaderRole role, double per_tick_capacity,
                   std::string name = {});
  ~ResourceSpreader();

  ResourceSpreader(const ResourceSpreader&) = delete;
  ResourceSpreader& operator=(const ResourceSpreader&) = delete;

  std::uint64_t id() const { return id_; }
  SpreaderRole role() const { return role_; }
  const std::string& name() const { return name_; }
  SharingKernel& kernel() const { return kernel_; }

  double per_tick_capacity() const { return capacity_; }
  double processing_factor() const { return factor_; }
  double effective_capacity() const { return capacity_ * factor_; }

  /** Change nominal capacity; the owning group resettles and reschedules. */
  void set_per_tick_capacity(double capacity);
  /** Scale capacity (power states, DVFS); 0 stops all progress through here. */
  void set_processing_factor(double factor);

  const std::vector<ConsumptionPtr>& consumptions() const { return consumptions_; }

  /** Units moved through this spreader since construction (produced for
   *  providers, consumed for consumers).  Monotonic; energy reads deltas. */
  double processed_total() const { return processed_; }

  /** Integral of effective capacity over time, in unit-ticks up to now.
   *  processed delta / capacity-integral delta is the average utilisation. */
  double capacity_integral() const;

  InfluenceGroup* group() const { return group_; }

private:
  friend class SharingKernel;
  friend double apply_provider_step(ResourceConsumption&);
  friend double apply_consumer_step(ResourceConsumption&);

  void fold_capacity_integral();

  SharingKernel& kernel_;
  std::uint64_t id_;
  SpreaderRole role_;
  std::string name_;
  double capacity_;
  double factor_ = 1.0;
  double processed_ = 0.0;
  double integral_ = 0.0;
  Tick integral_folded_at_ = 0;
  std::vector<ConsumptionPtr> consumptions_;
  InfluenceGroup* group_ = nullptr;
};

/** Connected component of spreaders linked through registered consumptions.
 *  The unit of scheduling: groups settle, reschedule and subscribe to the
 *  clock independently of each other. */
class InfluenceGroup {
public:
  std::uint64_t id() const { return id_; }
  const std::vector<ResourceSpreader*>& members() const { return members_; }
  Tick last_settled() const { return last_settled_; }

  /** Ticks from the last schedule to the earliest completion; kNoTick when no
   *  registered consumption can complete at the current rates. */
  Tick next_completion() const { return next_completion_; }
  bool has_subscription() const { return sub_ != 0; }

private:
  friend class SharingKernel;

  explicit InfluenceGroup(std::uint64_t id) : id_(id) {}

  std::uint64_t id_;
  std::vector<ResourceSpreader*> members_;
  Tick last_settled_ = 0;
  Tick next_completion_ = kNoTick;
  SubscriptionId sub_ = 0;
  std::size_t registry_index_ = 0;
  std::size_t pending_requests_ = 0; // cancel/deregister/migrate waiting for settle
  bool lost_any_ = false;            // membership may have shrunk since last maintenance
  bool queued_ = false;
  bool disposed_ = false;
};

/** Strategy that turns a settled influence group into per-consumption shares. */
class SchedulingLogic {
public:
  virtual ~SchedulingLogic() = default;
  virtual std::string_view name() const = 0;
  /** Assign provider_share_/consumer_share_ of every live consumption. */
  virtual void assign(const InfluenceGroup& group) const = 0;
};

/** Progressive filling: all unfrozen consumptions rise together, freezing at
 *  their p_l or when an incident spreader saturates.  Both shares equal, so no
 *  backlog builds up between well-matched spreaders. */
class MaxMinFairness final : public SchedulingLogic {
public:
  std::string_view name() const override { return "max-min"; }
  void assign(const InfluenceGroup& group) const override;
};

/** Each spreader splits its capacity evenly over its own consumptions,
 *  ignoring the other side; cross-spreader bottlenecks leak backlog and
 *  headroom is not redistributed.  Kept as the cheap baseline. */
class EqualSplit final : public SchedulingLogic {
public:
  std::string_view name() const override { return "equal-split"; }
  void assign(const InfluenceGroup& group) const override;
};

const SchedulingLogic& max_min_fairness();
const SchedulingLogic& equal_split();

/** Owner of the sharing machinery: consumption lifecycle, influence-group
 *  partition maintenance, settling and scheduling.
 *
 *  Every mutating entry point funnels through one work loop, so handlers
 *  fired during settling may freely register, cancel or migrate consumptions;
 *  the loop picks the affected groups up before returning to the caller.
 */
class SharingKernel {
public:
  explicit SharingKernel(SimClock& clock, const SchedulingLogic& logic = max_min_fairness());
  ~SharingKernel();

  SharingKernel(const SharingKernel&) = delete;
  SharingKernel& operator=(const SharingKernel&) = delete;

  SimClock& clock() const { return clock_; }

  const SchedulingLogic& scheduling_logic() const { return *logic_; }
  void set_scheduling_logic(const SchedulingLogic& logic) { logic_ = &logic; }

  /** New unregistered consumption.  total >= 0; limit > 0 (may be +inf). */
  ConsumptionPtr create_consumption(double total, double per_tick_limit);

  /** Attach to a provider/consumer pair and start sharing at the current tick. */
  void register_consumption(const ConsumptionPtr& c, ResourceSpreader& provider,
                            ResourceSpreader& consumer);

  /** Terminal removal; the handler fires with cancelled.  Progress made up to
   *  the current tick still counts.  No-op on finished consumptions. */
  void cancel(const ConsumptionPtr& c);

  /** Pause: detach keeping p_u/p_r, without firing the handler.  The
   *  consumption may be registered again later (suspend/resume). */
  void deregister(const ConsumptionPtr& c);

  /** Atomically retarget a registered consumption to a new spreader pair,
   *  keeping in-flight state (latency staging, VM migration). */
  void migrate(const ConsumptionPtr& c, ResourceSpreader& provider, ResourceSpreader& consumer);

  /** Zero-capacity endpoints for staged consumptions (latency holding pen). */
  ResourceSpreader& null_provider() { return *null_provider_; }
  ResourceSpreader& null_consumer() { return *null_consumer_; }

  /** Settle and reschedule the group after a capacity/factor/limit change. */
  void notify_capacity_changed(ResourceSpreader& s);

  /** Connected component of s over current consumptions, recomputed from
   *  scratch, sorted by id.  Oracle for the incremental partition. */
  std::vector<ResourceSpreader*> direct_group(const ResourceSpreader& s) const;

  std::vector<InfluenceGroup*> groups() const;

  /** Throws InternalError when the incremental partition disagrees with
   *  direct_group or endpoint bookkeeping is inconsistent.  Test hook. */
  void validate_partitions() const;

  /** Dump share assignments after every reschedule (diagnostics). */
  void set_share_dump(std::ostream* os) { share_dump_ = os; }

private:
  friend class ResourceSpreader;
  friend class ResourceConsumption;

  InfluenceGroup* create_group();
  void dispose_group(InfluenceGroup* g);
  void enqueue(InfluenceGroup* g);
  void touch(ResourceSpreader& s);
  void process();
  void settle_group(InfluenceGroup& g, bool force = false);
  void maintain_group(InfluenceGroup* g, std::vector<InfluenceGroup*>& out);
  void reschedule_group(InfluenceGroup& g);
  void attach(const ConsumptionPtr& c, ResourceSpreader& provider, ResourceSpreader& consumer);
  void detach_endpoints(const ConsumptionPtr& c);
  void detach_spreader(ResourceSpreader& s);

  SimClock& clock_;
  const SchedulingLogic* logic_;
  std::uint64_t next_consumption_id_ = 1;
  std::uint64_t next_spreader_id_ = 1;
  std::uint64_t next_group_id_ = 1;
  std::vector<std::unique_ptr<InfluenceGroup>> groups_;
  std::vector<std::unique_ptr<InfluenceGroup>> graveyard_;
  std::deque<InfluenceGroup*> dirty_;
  bool processing_ = false;
  std::ostream* share_dump_ = nullptr;
  // Declared last: they deregister from the kernel on destruction.
  std::unique_ptr<ResourceSpreader> null_provider_;
  std::unique_ptr<ResourceSpreader> null_consumer_;
};

/** One reference tick of the provider update using the assigned share:
 *  moves min(p_r, min(share, p_l)) into p_u.  Returns the amount moved.
 *  Diagnostic surface; the kernel's own settling covers registered work. */
double apply_provider_step(ResourceConsumption& c);

/** One reference tick of the consumer update: drains min(p_u, min(share, p_l)).
 *  Returns the amount drained. */
double apply_consumer_step(ResourceConsumption& c);

} // namespace iaasim
