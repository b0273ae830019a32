#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iaasim/clock.hpp"
#include "iaasim/energy.hpp"
#include "iaasim/network.hpp"
#include "iaasim/power.hpp"
#include "iaasim/sharing.hpp"

namespace iaasim {

class PhysicalMachine;
class VirtualMachine;
using VMPtr = std::shared_ptr<VirtualMachine>;

/** Compute capacity as the paper's triple: core count, per-core processing
 *  rate (units per second) and memory in bytes. */
struct ResourceVector {
  double cores = 0.0;
  double per_core = 0.0;
  double memory = 0.0;

  double total_processing() const { return cores * per_core; } // units per second

  bool fits_within(const ResourceVector& outer) const {
    return cores <= outer.cores && per_core <= outer.per_core && memory <= outer.memory;
  }
};

/** A slice of a machine promised to a future VM.  Unbound allocations expire
 *  and give the capacity back; binding to a VM disarms the expiry. */
class ResourceAllocation {
public:
  const ResourceVector& resources() const { return resources_; }
  PhysicalMachine* host() const { return host_; }
  bool bound() const { return bound_; }
  bool released() const { return released_; }

private:
  friend class PhysicalMachine;
  friend class VirtualMachine;

  ResourceVector resources_;
  PhysicalMachine* host_ = nullptr;
  DeferredEvent expiry_{};
  bool bound_ = false;
  bool released_ = false;
};

using AllocationPtr = std::shared_ptr<ResourceAllocation>;

/** One background task of a power-state transition script: a consumption of
 *  total_fraction machine-seconds, capped at limit_fraction of machine
 *  capacity per second, started delay_s after the previous task finished. */
struct TransitionTask {
  double delay_s = 0.0;
  double total_fraction = 0.0;
  double limit_fraction = 0.0;
};

/** Behaviour of one power state: draw model, how much of the nominal
 *  processing capacity remains usable, and (for the switching states) how the
 *  transition runs - either a flat duration or a task script competing for the
 *  machine's own CPU through the sharing kernel. */
struct PowerStateDef {
  ConsumptionModel model = ConsumptionModel::constant(0.0);
  double processing_factor = 1.0;
  double duration_s = 0.0;
  std::vector<TransitionTask> script;
};

struct MachinePowerProfile {
  PowerStateDef off;
  PowerStateDef switching_on;
  PowerStateDef running;
  PowerStateDef switching_off;
};

/** Measured profile of the reference host: 36.4 W off, 483.1 W for the 200 s
 *  boot, 368.8..722.7 W linear while running, 409.2 W for the 12 s shutdown. */
MachinePowerProfile default_power_profile();

/** Same profile with the shutdown modelled as its three-task script (12.02 s
 *  total) instead of the flat duration. */
MachinePowerProfile scripted_shutdown_profile();

enum class PMState { off, switching_on, running, switching_off };

std::string_view to_string(PMState s);

/** A host: CPU provider spreader, local repository with network node, power
 *  state machine with an exact energy account, and allocation bookkeeping. */
class PhysicalMachine {
public:
  struct Config {
    ResourceVector capacity;               // cores, per-core units/s, memory bytes
    double repo_capacity_bytes = 0.0;
    double net_in_bytes_per_s = 0.0;
    double net_out_bytes_per_s = 0.0;
    MachinePowerProfile profile = default_power_profile();
    double default_allocation_expiry_s = 60.0;
    std::string name;
  };

  using StateHandler = std::function<void(PhysicalMachine&, PMState, PMState)>;

  PhysicalMachine(SharingKernel& kernel, Config config);
  ~PhysicalMachine();

  PhysicalMachine(const PhysicalMachine&) = delete;
  PhysicalMachine& operator=(const PhysicalMachine&) = delete;

  const std::string& name() const { return config_.name; }
  PMState state() const { return state_; }
  const ResourceVector& capacity() const { return config_.capacity; }
  ResourceVector free_capacity() const;

  /** Begin switching on; no-op when already on or on the way.  When called
   *  during switch-off the machine turns back on once the shutdown finishes. */
  void turn_on();

  /** Begin switching off.  Hosted VMs or live allocations make this illegal. */
  void switch_off();

  /** Reserve capacity.  Returns null when the machine cannot spare the
   *  resources right now; with strict=false a smaller-than-asked slice may be
   *  granted.  Requests that could never fit this machine throw UnfitError. */
  AllocationPtr allocate(const ResourceVector& request, bool strict = true,
                         std::optional<Tick> expiry = std::nullopt);

  /** Give back an unbound allocation early. */
  void cancel_allocation(const AllocationPtr& allocation);

  /** Atomically swap a bound allocation's size (VM resize).  False (and no
   *  change) when the new size does not fit next to everything else. */
  bool resize_allocation(const AllocationPtr& allocation, const ResourceVector& request);

  std::size_t allocation_count() const { return allocations_.size(); }
  const std::vector<AllocationPtr>& allocations() const { return allocations_; }
  std::size_t hosted_vm_count() const { return hosted_.size(); }
  const std::vector<VMPtr>& hosted_vms() const { return hosted_; }

  ResourceSpreader& cpu() { return cpu_; }
  const ResourceSpreader& cpu() const { return cpu_; }
  Repository& repo() { return repo_; }
  EnergyAccount& energy() { return energy_; }
  const ConsumptionModel& running_power_model() const { return config_.profile.running.model; }
  SharingKernel& kernel() const { return kernel_; }

  std::uint64_t on_state_change(StateHandler handler);
  void remove_state_handler(std::uint64_t token);

  /** Called whenever an allocation leaves the machine (capacity freed). */
  void set_allocation_release_hook(std::function<void(PhysicalMachine&)> hook) {
    allocation_release_hook_ = std::move(hook);
  }

  /** Tick of the last allocation/VM/state activity (idle tracking). */
  Tick last_activity() const { return last_activity_; }
  bool idle() const { return hosted_.empty() && allocations_.empty(); }

  double per_tick_processing() const; // capacity in units per tick at factor 1

private:
  friend class VirtualMachine;

  void set_state(PMState next);
  void run_transition(const PowerStateDef& def, std::function<void()> done);
  void run_script(std::shared_ptr<std::vector<TransitionTask>> script, std::size_t index,
                  std::function<void()> done);
  void release_allocation(ResourceAllocation& allocation);
  void attach_vm(const VMPtr& vm);
  void detach_vm(VirtualMachine* vm);
  void touch_activity();

  SharingKernel& kernel_;
  SimClock& clock_;
  Config config_;
  PMState state_ = PMState::off;
  bool turn_on_queued_ = false;
  std::uint64_t transition_epoch_ = 0; // invalidates in-flight transition callbacks
  DeferredEvent transition_timer_{};
  ResourceSpreader cpu_;
  ResourceSpreader transition_sink_; // hidden consumer for transition scripts
  Repository repo_;
  EnergyAccount energy_;
  ResourceVector allocated_{0.0, 0.0, 0.0};
  std::vector<AllocationPtr> allocations_;
  std::vector<VMPtr> hosted_;
  std::vector<std::pair<std::uint64_t, StateHandler>> state_handlers_;
  std::function<void(PhysicalMachine&)> allocation_release_hook_;
  std::uint64_t next_token_ = 1;
  Tick last_activity_ = 0;
};

struct VMImage {
  std::string id;
  double size_bytes = 0.0;
  double boot_units = 0.0; // processing units the boot consumption costs
};

enum class VMState {
  destroyed,
  initial_transfer,
  shutdown,
  startup,
  running,
  suspend_transfer,
  suspended,
  resume_transfer,
  migrating,
};

std::string_view to_string(VMState s);

/** Legal direct transitions of the VM state machine. */
bool vm_transition_legal(VMState from, VMState to);

/** A guest: CPU consumer spreader sized by its allocation, a per-VM disk copy
 *  of its image, and tasks that compete for the host CPU through the kernel. */
class VirtualMachine : public std::enable_shared_from_this<VirtualMachine> {
public:
  using StateHandler = std::function<void(VirtualMachine&, VMState, VMState)>;
  using TaskHandler = std::function<void(ConsumptionOutcome)>;

  static VMPtr make(SharingKernel& kernel, VMImage image, ResourceVector requested,
                    std::string name);
  ~VirtualMachine();

  VirtualMachine(const VirtualMachine&) = delete;
  VirtualMachine& operator=(const VirtualMachine&) = delete;

  const std::string& name() const { return name_; }
  VMState state() const { return state_; }
  const VMImage& image() const { return image_; }
  const ResourceVector& requested() const { return requested_; }
  PhysicalMachine* host() const { return host_; }
  PhysicalMachine* migration_target() const { return migration_target_; }
  const AllocationPtr& allocation() const { return allocation_; }
  ResourceSpreader& cpu_consumer() { return *cpu_; }
  const ResourceSpreader& cpu_consumer() const { return *cpu_; }

  /** Bind to an allocation and drive destroyed -> initial-transfer ->
   *  shutdown -> startup -> running.  The image copy streams from
   *  image_source; when that is the host's own repository the transfer is
   *  skipped (pre-staged image). */
  void deploy(const AllocationPtr& allocation, Repository& image_source);

  /** Run work on the VM's share of the host CPU.  Only legal while running. */
  ConsumptionPtr new_task(double total_units, double per_tick_limit, TaskHandler handler = nullptr);
  std::size_t live_task_count() const { return tasks_.size(); }

  /** Atomically swap the bound allocation's size.  False (and no change) when
   *  the host cannot fit the new size next to everything else. */
  bool resize(const ResourceVector& request);

  /** Pause tasks, serialize memory to the host repository, free the
   *  allocation.  Ends in suspended. */
  void suspend();

  /** Reallocate on the stored host, read the memory snapshot back, resume the
   *  paused tasks exactly where they stopped. */
  void resume();

  /** Move to another machine (running VMs suspend first).  The target
   *  allocation is secured before anything moves; failures leave the VM
   *  untouched. */
  void migrate(PhysicalMachine& target);

  /** Tear down.  kill_tasks cancels live tasks; otherwise destruction waits
   *  for them to finish.  Idempotent. */
  void destroy(bool kill_tasks);

  std::uint64_t on_state_change(StateHandler handler);
  void remove_state_handler(std::uint64_t token);

private:
  VirtualMachine(SharingKernel& kernel, VMImage image, ResourceVector requested, std::string name);

  void set_state(VMState next);
  void bind(const AllocationPtr& allocation);
  void start_boot();
  void begin_suspend(std::function<void()> done);
  void finish_suspend(std::function<void()> done);
  void continue_migration();
  void arrive_at_target();
  void begin_resume_transfer(std::function<void()> done);
  void pause_tasks();
  void drop_artifacts();
  void finish_destroy();
  std::string disk_id() const { return "vm/" + name_ + "/disk"; }
  std::string memory_id() const { return "vm/" + name_ + "/memory"; }

  SharingKernel& kernel_;
  SimClock& clock_;
  VMImage image_;
  ResourceVector requested_;
  std::string name_;
  VMState state_ = VMState::destroyed;
  PhysicalMachine* host_ = nullptr;
  AllocationPtr allocation_;
  std::unique_ptr<ResourceSpreader> cpu_;
  ConsumptionPtr boot_;
  ConsumptionPtr pending_transfer_; // image/memory movement driving a transition
  ConsumptionPtr pending_transfer_extra_;
  std::vector<ConsumptionPtr> tasks_;
  std::vector<ConsumptionPtr> paused_tasks_;
  PhysicalMachine* migration_target_ = nullptr;
  AllocationPtr migration_allocation_;
  bool has_disk_copy_ = false;
  bool has_memory_blob_ = false;
  bool destroy_pending_ = false;
  std::vector<std::pair<std::uint64_t, StateHandler>> state_handlers_;
  std::uint64_t next_token_ = 1;
};

} // namespace iaasim
