#include "iaasim/machine.hpp"

#include <algorithm>
#include <cmath>

#include "iaasim/errors.hpp"

namespace iaasim {

namespace {
constexpr double kCapacityEps = 1e-9;
}

MachinePowerProfile default_power_profile() {
  MachinePowerProfile p;
  p.off.model = ConsumptionModel::constant(36.4);
  p.off.processing_factor = 0.0;
  p.switching_on.model = ConsumptionModel::constant(483.1);
  p.switching_on.processing_factor = 1.0;
  p.switching_on.duration_s = 200.0;
  p.running.model = ConsumptionModel::linear(368.8, 722.7);
  p.running.processing_factor = 1.0;
  p.switching_off.model = ConsumptionModel::constant(409.2);
  p.switching_off.processing_factor = 1.0;
  p.switching_off.duration_s = 12.0;
  return p;
}

MachinePowerProfile scripted_shutdown_profile() {
  MachinePowerProfile p = default_power_profile();
  p.switching_off.duration_s = 0.0;
  // Three background tasks observed during host shutdown; totals are machine
  // seconds, limits are fractions of machine capacity per second.
  p.switching_off.script = {
      {0.0, 0.275, 0.11},
      {2.5, 0.855, 0.19},
      {1.0, 0.228, 0.15},
  };
  return p;
}

std::string_view to_string(PMState s) {
  switch (s) {
  case PMState::off: return "off";
  case PMState::switching_on: return "switching-on";
  case PMState::running: return "running";
  case PMState::switching_off: return "switching-off";
  }
  return "?";
}

// --- PhysicalMachine --------------------------------------------------------

PhysicalMachine::PhysicalMachine(SharingKernel& kernel, Config config)
    : kernel_(kernel), clock_(kernel.clock()), config_(std::move(config)),
      cpu_(kernel, SpreaderRole::provider,
           config_.capacity.total_processing() * clock_.tick_seconds(), config_.name + ".cpu"),
      transition_sink_(kernel, SpreaderRole::consumer,
                       config_.capacity.total_processing() * clock_.tick_seconds(),
                       config_.name + ".transition"),
      repo_(kernel, config_.repo_capacity_bytes, config_.net_in_bytes_per_s,
            config_.net_out_bytes_per_s, config_.name + ".repo"),
      energy_(clock_, cpu_, config_.profile.off.model) {
  if (config_.capacity.cores <= 0.0 || config_.capacity.per_core <= 0.0 ||
      config_.capacity.memory <= 0.0)
    throw ValidationError("machine capacity must be positive in every dimension");
  cpu_.set_processing_factor(config_.profile.off.processing_factor);
  last_activity_ = clock_.now();
}

PhysicalMachine::~PhysicalMachine() {
  ++transition_epoch_;
  clock_.cancel(transition_timer_);
  for (const AllocationPtr& a : allocations_)
    clock_.cancel(a->expiry_);
}

double PhysicalMachine::per_tick_processing() const {
  return config_.capacity.total_processing() * clock_.tick_seconds();
}

ResourceVector PhysicalMachine::free_capacity() const {
  return {config_.capacity.cores - allocated_.cores, config_.capacity.per_core,
          config_.capacity.memory - allocated_.memory};
}

void PhysicalMachine::touch_activity() {
  last_activity_ = clock_.now();
}

void PhysicalMachine::set_state(PMState next) {
  if (state_ == next)
    return;
  PMState prev = state_;
  // Fold the joule integral under the old model before the draw changes.
  const PowerStateDef& def = [&]() -> const PowerStateDef& {
    switch (next) {
    case PMState::off: return config_.profile.off;
    case PMState::switching_on: return config_.profile.switching_on;
    case PMState::running: return config_.profile.running;
    case PMState::switching_off: return config_.profile.switching_off;
    }
    return config_.profile.off;
  }();
  energy_.set_model(def.model);
  cpu_.set_processing_factor(def.processing_factor);
  state_ = next;
  touch_activity();
  auto handlers = state_handlers_;
  for (auto& [token, handler] : handlers)
    handler(*this, prev, state_);
}

void PhysicalMachine::turn_on() {
  touch_activity();
  if (state_ == PMState::running || state_ == PMState::switching_on)
    return;
  if (state_ == PMState::switching_off) {
    turn_on_queued_ = true;
    return;
  }
  set_state(PMState::switching_on);
  std::uint64_t epoch = ++transition_epoch_;
  run_transition(config_.profile.switching_on, [this, epoch] {
    if (epoch != transition_epoch_)
      return;
    set_state(PMState::running);
  });
}

void PhysicalMachine::switch_off() {
  if (state_ != PMState::running)
    throw StateError(config_.name + ": only a running machine can switch off");
  if (!hosted_.empty())
    throw StateError(config_.name + ": hosted VMs prevent switching off");
  if (!allocations_.empty())
    throw StateError(config_.name + ": live allocations prevent switching off");
  set_state(PMState::switching_off);
  std::uint64_t epoch = ++transition_epoch_;
  run_transition(config_.profile.switching_off, [this, epoch] {
    if (epoch != transition_epoch_)
      return;
    set_state(PMState::off);
    if (turn_on_queued_) {
      turn_on_queued_ = false;
      turn_on();
    }
  });
}

void PhysicalMachine::run_transition(const PowerStateDef& def, std::function<void()> done) {
  if (!def.script.empty()) {
    run_script(std::make_shared<std::vector<TransitionTask>>(def.script), 0, std::move(done));
    return;
  }
  Tick d = clock_.ticks(def.duration_s);
  if (d == 0) {
    done();
    return;
  }
  transition_timer_ = clock_.defer(d, std::move(done));
}

void PhysicalMachine::run_script(std::shared_ptr<std::vector<TransitionTask>> script,
                                 std::size_t index, std::function<void()> done) {
  if (index == script->size()) {
    done();
    return;
  }
  const TransitionTask& task = (*script)[index];
  std::uint64_t epoch = transition_epoch_;
  auto start = [this, script, index, done = std::move(done), epoch]() mutable {
    if (epoch != transition_epoch_)
      return;
    const TransitionTask& t = (*script)[index];
    double total_units = t.total_fraction * config_.capacity.total_processing();
    double limit = t.limit_fraction * per_tick_processing();
    ConsumptionPtr c = kernel_.create_consumption(total_units, limit);
    c->on_finish([this, script, index, done = std::move(done), epoch](ResourceConsumption&,
                                                                      ConsumptionOutcome outcome) {
      if (epoch != transition_epoch_ || outcome != ConsumptionOutcome::completed)
        return;
      run_script(script, index + 1, std::move(const_cast<std::function<void()>&>(done)));
    });
    kernel_.register_consumption(c, cpu_, transition_sink_);
  };
  Tick d = clock_.ticks(task.delay_s);
  if (d == 0)
    start();
  else
    transition_timer_ = clock_.defer(d, std::move(start));
}

AllocationPtr PhysicalMachine::allocate(const ResourceVector& request, bool strict,
                                        std::optional<Tick> expiry) {
  touch_activity();
  if (state_ != PMState::running)
    throw StateError(config_.name + ": allocations need a running machine");
  if (request.cores <= 0.0 || request.per_core <= 0.0 || request.memory <= 0.0)
    throw ValidationError("allocation request must be positive in every dimension");
  if (!request.fits_within(config_.capacity))
    throw UnfitError(config_.name + ": request exceeds total machine capacity");

  ResourceVector free = free_capacity();
  ResourceVector grant = request;
  if (request.cores > free.cores + kCapacityEps || request.memory > free.memory + kCapacityEps) {
    if (strict)
      return nullptr;
    grant.cores = std::min(request.cores, free.cores);
    grant.memory = std::min(request.memory, free.memory);
    if (grant.cores < 1.0 || grant.memory <= 0.0)
      return nullptr;
  }

  auto allocation = std::make_shared<ResourceAllocation>();
  allocation->resources_ = grant;
  allocation->host_ = this;
  allocated_.cores += grant.cores;
  allocated_.memory += grant.memory;
  allocations_.push_back(allocation);

  Tick expiry_ticks = expiry.value_or(clock_.ticks(config_.default_allocation_expiry_s));
  if (expiry_ticks > 0) {
    std::weak_ptr<ResourceAllocation> weak = allocation;
    allocation->expiry_ = clock_.defer(expiry_ticks, [this, weak] {
      AllocationPtr a = weak.lock();
      if (a && !a->bound_ && !a->released_)
        release_allocation(*a);
    });
  }
  return allocation;
}

void PhysicalMachine::release_allocation(ResourceAllocation& allocation) {
  if (allocation.released_)
    return;
  allocation.released_ = true;
  clock_.cancel(allocation.expiry_);
  allocated_.cores -= allocation.resources_.cores;
  allocated_.memory -= allocation.resources_.memory;
  auto it = std::find_if(allocations_.begin(), allocations_.end(),
                         [&](const AllocationPtr& p) { return p.get() == &allocation; });
  if (it != allocations_.end())
    allocations_.erase(it);
  touch_activity();
  if (allocation_release_hook_)
    allocation_release_hook_(*this);
}

void PhysicalMachine::cancel_allocation(const AllocationPtr& allocation) {
  if (!allocation || allocation->host_ != this)
    throw ValidationError("allocation does not belong to this machine");
  if (allocation->bound_)
    throw StateError("bound allocations are released through their VM");
  release_allocation(*allocation);
}

bool PhysicalMachine::resize_allocation(const AllocationPtr& allocation,
                                        const ResourceVector& request) {
  if (!allocation || allocation->host_ != this || allocation->released_)
    throw ValidationError("allocation does not belong to this machine");
  if (request.cores <= 0.0 || request.memory <= 0.0)
    throw ValidationError("allocation request must be positive in every dimension");
  if (!request.fits_within(config_.capacity))
    return false;
  double cores_after = allocated_.cores - allocation->resources_.cores + request.cores;
  double memory_after = allocated_.memory - allocation->resources_.memory + request.memory;
  if (cores_after > config_.capacity.cores + kCapacityEps ||
      memory_after > config_.capacity.memory + kCapacityEps)
    return false;
  allocated_.cores = cores_after;
  allocated_.memory = memory_after;
  allocation->resources_ = request;
  allocation->resources_.per_core = config_.capacity.per_core;
  touch_activity();
  return true;
}

void PhysicalMachine::attach_vm(const VMPtr& vm) {
  hosted_.push_back(vm);
  touch_activity();
}

void PhysicalMachine::detach_vm(VirtualMachine* vm) {
  auto it = std::find_if(hosted_.begin(), hosted_.end(),
                         [vm](const VMPtr& p) { return p.get() == vm; });
  if (it != hosted_.end())
    hosted_.erase(it);
  touch_activity();
}

std::uint64_t PhysicalMachine::on_state_change(StateHandler handler) {
  std::uint64_t token = next_token_++;
  state_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void PhysicalMachine::remove_state_handler(std::uint64_t token) {
  auto it = std::find_if(state_handlers_.begin(), state_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != state_handlers_.end())
    state_handlers_.erase(it);
}

// --- VirtualMachine ---------------------------------------------------------

std::string_view to_string(VMState s) {
  switch (s) {
  case VMState::destroyed: return "destroyed";
  case VMState::initial_transfer: return "initial-transfer";
  case VMState::shutdown: return "shutdown";
  case VMState::startup: return "startup";
  case VMState::running: return "running";
  case VMState::suspend_transfer: return "suspend-transfer";
  case VMState::suspended: return "suspended";
  case VMState::resume_transfer: return "resume-transfer";
  case VMState::migrating: return "migrating";
  }
  return "?";
}

bool vm_transition_legal(VMState from, VMState to) {
  if (to == VMState::destroyed)
    return true; // tear-down is reachable from anywhere
  switch (from) {
  case VMState::destroyed:
    return to == VMState::initial_transfer || to == VMState::shutdown;
  case VMState::initial_transfer:
    return to == VMState::shutdown;
  case VMState::shutdown:
    return to == VMState::startup;
  case VMState::startup:
    return to == VMState::running;
  case VMState::running:
    return to == VMState::suspend_transfer;
  case VMState::suspend_transfer:
    return to == VMState::suspended;
  case VMState::suspended:
    return to == VMState::resume_transfer || to == VMState::migrating;
  case VMState::resume_transfer:
    return to == VMState::running;
  case VMState::migrating:
    return to == VMState::resume_transfer;
  }
  return false;
}

VMPtr VirtualMachine::make(SharingKernel& kernel, VMImage image, ResourceVector requested,
                           std::string name) {
  return VMPtr(new VirtualMachine(kernel, std::move(image), requested, std::move(name)));
}

VirtualMachine::VirtualMachine(SharingKernel& kernel, VMImage image, ResourceVector requested,
                               std::string name)
    : kernel_(kernel), clock_(kernel.clock()), image_(std::move(image)), requested_(requested),
      name_(std::move(name)),
      cpu_(std::make_unique<ResourceSpreader>(kernel, SpreaderRole::consumer, 0.0,
                                              name_ + ".cpu")) {
  if (requested_.cores <= 0.0 || requested_.per_core <= 0.0 || requested_.memory <= 0.0)
    throw ValidationError("VM resource request must be positive in every dimension");
}

VirtualMachine::~VirtualMachine() {
  // Abort whatever is still in flight; handlers hold weak references, so the
  // cancellations only run the repositories' own bookkeeping.
  for (ConsumptionPtr* c : {&pending_transfer_, &pending_transfer_extra_, &boot_}) {
    if (*c && !(*c)->finished())
      kernel_.cancel(*c);
  }
  for (const ConsumptionPtr& c : tasks_)
    if (c && !c->finished())
      kernel_.cancel(c);
}

void VirtualMachine::set_state(VMState next) {
  if (state_ == next)
    return;
  if (!vm_transition_legal(state_, next))
    throw InternalError(name_ + ": illegal VM transition " + std::string(to_string(state_)) +
                        " -> " + std::string(to_string(next)));
  VMState prev = state_;
  state_ = next;
  auto handlers = state_handlers_;
  for (auto& [token, handler] : handlers)
    handler(*this, prev, state_);
}

void VirtualMachine::bind(const AllocationPtr& allocation) {
  allocation->bound_ = true;
  clock_.cancel(allocation->expiry_);
  allocation_ = allocation;
  host_ = allocation->host_;
  cpu_->set_per_tick_capacity(allocation->resources_.total_processing() * clock_.tick_seconds());
}

void VirtualMachine::deploy(const AllocationPtr& allocation, Repository& image_source) {
  if (state_ != VMState::destroyed)
    throw StateError(name_ + ": deploy needs a fresh VM");
  if (!allocation || allocation->released_)
    throw StateError(name_ + ": allocation is gone (expired or cancelled)");
  if (allocation->bound_)
    throw StateError(name_ + ": allocation already bound");
  if (allocation->host_->state() != PMState::running)
    throw StateError(name_ + ": host is not running");
  if (image_source.lookup(image_.id) == nullptr)
    throw ValidationError(name_ + ": image " + image_.id + " not in " + image_source.name());
  destroy_pending_ = false;

  bind(allocation);
  host_->attach_vm(shared_from_this());

  Repository& local = host_->repo();
  if (&image_source == &local) {
    // Pre-staged image: the per-VM copy appears instantly, no network involved.
    local.register_object({disk_id(), image_.size_bytes});
    has_disk_copy_ = true;
    set_state(VMState::shutdown);
    start_boot();
    return;
  }
  set_state(VMState::initial_transfer);
  TransferOptions options;
  options.target_id = disk_id();
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  pending_transfer_ = image_source.transfer_to(local, image_.id, std::move(options),
                                               [weak](ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (!self || outcome != ConsumptionOutcome::completed)
      return;
    self->has_disk_copy_ = true;
    self->set_state(VMState::shutdown);
    self->start_boot();
  });
}

void VirtualMachine::start_boot() {
  set_state(VMState::startup);
  if (image_.boot_units <= 0.0) {
    set_state(VMState::running);
    return;
  }
  boot_ = kernel_.create_consumption(image_.boot_units, cpu_->per_tick_capacity());
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  boot_->on_finish([weak](ResourceConsumption&, ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (!self || outcome != ConsumptionOutcome::completed)
      return;
    self->set_state(VMState::running);
  });
  kernel_.register_consumption(boot_, host_->cpu(), *cpu_);
}

ConsumptionPtr VirtualMachine::new_task(double total_units, double per_tick_limit,
                                        TaskHandler handler) {
  if (state_ != VMState::running)
    throw StateError(name_ + ": tasks need a running VM");
  ConsumptionPtr c = kernel_.create_consumption(total_units, per_tick_limit);
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  std::uint64_t cid = c->id();
  c->on_finish([weak, cid, handler = std::move(handler)](ResourceConsumption&,
                                                         ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (self) {
      auto& ts = self->tasks_;
      ts.erase(std::remove_if(ts.begin(), ts.end(),
                              [cid](const ConsumptionPtr& t) { return t->id() == cid; }),
               ts.end());
    }
    if (handler)
      handler(outcome);
    if (self && self->destroy_pending_ && self->tasks_.empty() &&
        self->state_ == VMState::running)
      self->destroy(true);
  });
  tasks_.push_back(c);
  kernel_.register_consumption(c, host_->cpu(), *cpu_);
  return c;
}

bool VirtualMachine::resize(const ResourceVector& request) {
  if (state_ != VMState::running)
    throw StateError(name_ + ": resize needs a running VM");
  if (!host_->resize_allocation(allocation_, request))
    return false;
  requested_ = allocation_->resources_;
  cpu_->set_per_tick_capacity(allocation_->resources_.total_processing() * clock_.tick_seconds());
  return true;
}

void VirtualMachine::pause_tasks() {
  std::vector<ConsumptionPtr> moving = std::move(tasks_);
  tasks_.clear();
  for (const ConsumptionPtr& c : moving) {
    if (c->finished())
      continue;
    kernel_.deregister(c);
    paused_tasks_.push_back(c);
  }
}

void VirtualMachine::begin_suspend(std::function<void()> done) {
  set_state(VMState::suspend_transfer);
  pause_tasks();
  StorageObject blob{memory_id(), allocation_->resources_.memory};
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  pending_transfer_ = host_->repo().store_stream(blob, [weak, done = std::move(done)](
                                                           ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (!self || outcome != ConsumptionOutcome::completed)
      return;
    self->has_memory_blob_ = true;
    self->finish_suspend(std::move(const_cast<std::function<void()>&>(done)));
  });
}

void VirtualMachine::finish_suspend(std::function<void()> done) {
  set_state(VMState::suspended);
  host_->detach_vm(this);
  if (allocation_) {
    host_->release_allocation(*allocation_);
    allocation_ = nullptr;
  }
  done();
}

void VirtualMachine::suspend() {
  if (state_ != VMState::running)
    throw StateError(name_ + ": only running VMs suspend");
  begin_suspend([] {});
}

void VirtualMachine::begin_resume_transfer(std::function<void()> done) {
  set_state(VMState::resume_transfer);
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  pending_transfer_ = host_->repo().read_stream(memory_id(), [weak, done = std::move(done)](
                                                                 ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (!self || outcome != ConsumptionOutcome::completed)
      return;
    self->host_->repo().deregister_object(self->memory_id());
    self->has_memory_blob_ = false;
    for (const ConsumptionPtr& c : self->paused_tasks_) {
      if (!c->finished()) {
        self->kernel_.register_consumption(c, self->host_->cpu(), *self->cpu_);
        self->tasks_.push_back(c);
      }
    }
    self->paused_tasks_.clear();
    std::move(const_cast<std::function<void()>&>(done))();
  });
}

void VirtualMachine::resume() {
  if (state_ != VMState::suspended)
    throw StateError(name_ + ": only suspended VMs resume");
  if (host_ == nullptr || host_->state() != PMState::running)
    throw StateError(name_ + ": stored host is not available");
  AllocationPtr allocation = host_->allocate(requested_, true);
  if (!allocation)
    throw StateError(name_ + ": host cannot spare the resources to resume");
  bind(allocation);
  host_->attach_vm(shared_from_this());
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  begin_resume_transfer([weak] {
    if (VMPtr self = weak.lock())
      self->set_state(VMState::running);
  });
}

void VirtualMachine::migrate(PhysicalMachine& target) {
  if (state_ != VMState::running && state_ != VMState::suspended)
    throw StateError(name_ + ": only running or suspended VMs migrate");
  if (&target == host_)
    throw ValidationError(name_ + ": already hosted there");
  if (target.state() != PMState::running)
    throw StateError(name_ + ": migration target is not running");
  if (host_ == nullptr)
    throw StateError(name_ + ": nowhere to migrate from");
  if (!host_->repo().node().latency_to(target.repo().node()).has_value())
    throw StateError(name_ + ": no route to migration target");
  double needed = image_.size_bytes + requested_.memory;
  if (target.repo().free_bytes() < needed)
    throw StateError(name_ + ": target repository cannot stage the VM");
  AllocationPtr allocation = target.allocate(requested_, true);
  if (!allocation)
    throw StateError(name_ + ": target cannot spare the resources");
  allocation->bound_ = true; // disarm expiry while the VM is on the wire
  clock_.cancel(allocation->expiry_);
  migration_target_ = &target;
  migration_allocation_ = allocation;

  if (state_ == VMState::running) {
    std::weak_ptr<VirtualMachine> weak = shared_from_this();
    begin_suspend([weak] {
      if (VMPtr self = weak.lock())
        self->continue_migration();
    });
  } else {
    continue_migration();
  }
}

void VirtualMachine::continue_migration() {
  set_state(VMState::migrating);
  Repository& src = host_->repo();
  Repository& dst = migration_target_->repo();
  auto moves_left = std::make_shared<int>(2);
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  auto on_move = [weak, moves_left](ConsumptionOutcome outcome) {
    VMPtr self = weak.lock();
    if (!self || outcome != ConsumptionOutcome::completed)
      return;
    if (--*moves_left == 0)
      self->arrive_at_target();
  };
  pending_transfer_ = src.transfer_to(dst, disk_id(), {}, on_move);
  pending_transfer_extra_ = src.transfer_to(dst, memory_id(), {}, on_move);
}

void VirtualMachine::arrive_at_target() {
  Repository& old_repo = host_->repo();
  old_repo.deregister_object(disk_id());
  old_repo.deregister_object(memory_id());
  host_->detach_vm(this); // already detached when suspend ran; harmless
  host_ = migration_target_;
  migration_target_ = nullptr;
  AllocationPtr allocation = std::move(migration_allocation_);
  allocation_ = allocation;
  cpu_->set_per_tick_capacity(allocation->resources_.total_processing() * clock_.tick_seconds());
  host_->attach_vm(shared_from_this());
  std::weak_ptr<VirtualMachine> weak = shared_from_this();
  begin_resume_transfer([weak] {
    if (VMPtr self = weak.lock())
      self->set_state(VMState::running);
  });
}

void VirtualMachine::destroy(bool kill_tasks) {
  if (state_ == VMState::destroyed)
    return;
  if (state_ == VMState::running && !tasks_.empty() && !kill_tasks) {
    destroy_pending_ = true; // graceful: the last task completion re-enters
    return;
  }
  destroy_pending_ = false;

  // Stop whatever is in flight.  Handlers check outcomes, so cancellation
  // cannot re-trigger the happy path.
  std::vector<ConsumptionPtr> doomed = std::move(tasks_);
  tasks_.clear();
  for (const ConsumptionPtr& c : doomed)
    if (!c->finished())
      kernel_.cancel(c);
  for (ConsumptionPtr* c : {&boot_, &pending_transfer_, &pending_transfer_extra_}) {
    if (*c && !(*c)->finished())
      kernel_.cancel(*c);
    c->reset();
  }
  paused_tasks_.clear();
  finish_destroy();
}

void VirtualMachine::drop_artifacts() {
  for (Repository* repo : {host_ ? &host_->repo() : nullptr,
                           migration_target_ ? &migration_target_->repo() : nullptr}) {
    if (repo == nullptr)
      continue;
    repo->deregister_object(disk_id());
    repo->deregister_object(memory_id());
  }
  has_disk_copy_ = false;
  has_memory_blob_ = false;
}

void VirtualMachine::finish_destroy() {
  drop_artifacts();
  if (allocation_) {
    allocation_->host_->release_allocation(*allocation_);
    allocation_ = nullptr;
  }
  if (migration_allocation_) {
    migration_allocation_->host_->release_allocation(*migration_allocation_);
    migration_allocation_ = nullptr;
  }
  if (host_ != nullptr) {
    host_->detach_vm(this);
    host_ = nullptr;
  }
  migration_target_ = nullptr;
  set_state(VMState::destroyed);
}

std::uint64_t VirtualMachine::on_state_change(StateHandler handler) {
  std::uint64_t token = next_token_++;
  state_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void VirtualMachine::remove_state_handler(std::uint64_t token) {
  auto it = std::find_if(state_handlers_.begin(), state_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != state_handlers_.end())
    state_handlers_.erase(it);
}

} // namespace iaasim
