#include "iaasim/iaas.hpp"

#include <algorithm>
#include <cmath>

#include "iaasim/errors.hpp"

namespace iaasim {

namespace {
constexpr double kFitEps = 1e-9;
}

// --- VM schedulers ----------------------------------------------------------

bool FirstFitVMScheduler::dispatch(IaaSService& service) {
  bool progress = false;
  auto& queue = service.queue();
  while (!queue.empty()) {
    VMRequestPtr head = queue.front();
    if (!service.try_serve(*head))
      break;
    queue.pop_front();
    progress = true;
  }
  return progress;
}

bool NonQueuingVMScheduler::dispatch(IaaSService& service) {
  bool progress = false;
  auto& queue = service.queue();
  while (!queue.empty()) {
    VMRequestPtr head = queue.front();
    queue.pop_front();
    progress = true;
    if (!service.try_serve(*head))
      service.reject(*head);
  }
  return progress;
}

bool SmallestFirstVMScheduler::dispatch(IaaSService& service) {
  auto& queue = service.queue();
  std::stable_sort(queue.begin(), queue.end(),
                   [](const VMRequestPtr& a, const VMRequestPtr& b) {
    double pa = a->per_vm.total_processing() * static_cast<double>(a->count);
    double pb = b->per_vm.total_processing() * static_cast<double>(b->count);
    if (pa != pb)
      return pa < pb;
    double ma = a->per_vm.memory * static_cast<double>(a->count);
    double mb = b->per_vm.memory * static_cast<double>(b->count);
    if (ma != mb)
      return ma < mb;
    return a->submitted < b->submitted;
  });
  bool progress = false;
  while (!queue.empty()) {
    VMRequestPtr head = queue.front();
    if (!service.try_serve(*head))
      break;
    queue.pop_front();
    progress = true;
  }
  return progress;
}

// --- PM schedulers ----------------------------------------------------------

void AlwaysOnPMScheduler::react(IaaSService& service) {
  for (auto& pm : service.machines())
    if (pm->state() == PMState::off)
      pm->turn_on();
}

OnDemandPMScheduler::~OnDemandPMScheduler() {
  if (clock_ == nullptr)
    return;
  for (auto& [pm, timer] : shutdown_timers_)
    clock_->cancel(timer);
}

void OnDemandPMScheduler::forget(PhysicalMachine& pm) {
  auto it = shutdown_timers_.find(&pm);
  if (it == shutdown_timers_.end())
    return;
  clock_->cancel(it->second);
  shutdown_timers_.erase(it);
}

void OnDemandPMScheduler::react(IaaSService& service) {
  clock_ = &service.kernel().clock();
  const auto& queue = service.queue();
  if (queue.empty()) {
    for (auto& pm : service.machines())
      if (pm->state() == PMState::running && pm->idle())
        consider_shutdown(service, *pm);
    return;
  }

  // Demand exists: pick the fewest additional machines, in registration
  // order, that let the longest servable prefix of the queue place fully.
  struct Cap {
    double cores, per_core, memory;
  };
  std::vector<Cap> base;
  std::vector<PhysicalMachine*> off;
  for (auto& pm : service.machines()) {
    switch (pm->state()) {
    case PMState::running: {
      ResourceVector f = pm->free_capacity();
      base.push_back({f.cores, f.per_core, f.memory});
      break;
    }
    case PMState::switching_on: {
      const ResourceVector& c = pm->capacity();
      base.push_back({c.cores, c.per_core, c.memory});
      break;
    }
    case PMState::off:
      off.push_back(pm.get());
      break;
    case PMState::switching_off:
      break;
    }
  }

  auto covered_prefix = [&](std::vector<Cap> sim) {
    std::size_t served = 0;
    for (const VMRequestPtr& r : queue) {
      std::vector<Cap> attempt = sim;
      bool all_placed = true;
      for (std::size_t i = 0; i < r->count && all_placed; ++i) {
        all_placed = false;
        for (Cap& c : attempt) {
          if (r->per_vm.cores <= c.cores + kFitEps &&
              r->per_vm.per_core <= c.per_core + kFitEps &&
              r->per_vm.memory <= c.memory + kFitEps) {
            c.cores -= r->per_vm.cores;
            c.memory -= r->per_vm.memory;
            all_placed = true;
            break;
          }
        }
      }
      if (!all_placed)
        break;
      sim = std::move(attempt);
      ++served;
    }
    return served;
  };

  std::vector<Cap> everything = base;
  for (PhysicalMachine* pm : off) {
    const ResourceVector& c = pm->capacity();
    everything.push_back({c.cores, c.per_core, c.memory});
  }
  std::size_t goal = covered_prefix(everything);
  if (goal == 0)
    return; // even the whole park cannot unblock the head right now

  std::size_t need = 0;
  std::vector<Cap> sim = base;
  while (covered_prefix(sim) < goal && need < off.size()) {
    const ResourceVector& c = off[need]->capacity();
    sim.push_back({c.cores, c.per_core, c.memory});
    ++need;
  }
  for (std::size_t i = 0; i < need; ++i)
    off[i]->turn_on();
}

void OnDemandPMScheduler::consider_shutdown(IaaSService& service, PhysicalMachine& pm) {
  if (pm.state() != PMState::running || !pm.idle() || !service.queue().empty())
    return;
  Tick now = clock_->now();
  Tick idle_for = now - pm.last_activity();
  if (idle_for >= grace_) {
    forget(pm);
    pm.switch_off();
    return;
  }
  if (shutdown_timers_.count(&pm) != 0)
    return; // armed; the fire re-validates against last_activity
  IaaSService* s = &service;
  PhysicalMachine* p = &pm;
  shutdown_timers_[p] = clock_->defer(grace_ - idle_for, [this, s, p] {
    shutdown_timers_.erase(p);
    consider_shutdown(*s, *p);
  });
}

// --- IaaSService ------------------------------------------------------------

IaaSService::IaaSService(SharingKernel& kernel, std::unique_ptr<VMScheduler> vm_scheduler,
                         std::unique_ptr<PMScheduler> pm_scheduler)
    : kernel_(kernel), clock_(kernel.clock()), vm_scheduler_(std::move(vm_scheduler)),
      pm_scheduler_(std::move(pm_scheduler)) {
  if (!vm_scheduler_)
    throw ValidationError("the service needs a VM scheduler");
}

IaaSService::~IaaSService() {
  // Hooks into this object must not outlive it.
  suppress_triggers_ = true;
  for (auto& pm : machines_)
    pm->set_allocation_release_hook(nullptr);
}

PhysicalMachine& IaaSService::register_pm(PhysicalMachine::Config config) {
  if (config.name.empty())
    config.name = "pm" + std::to_string(machines_.size());
  auto pm = std::make_unique<PhysicalMachine>(kernel_, std::move(config));
  PhysicalMachine& ref = *pm;
  ref.set_allocation_release_hook([this](PhysicalMachine& m) { note_release(m); });
  ref.on_state_change([this](PhysicalMachine& m, PMState prev, PMState next) {
    double cap = m.capacity().total_processing();
    if (next == PMState::running)
      note_capacity(m, cap);
    else if (prev == PMState::running)
      note_capacity(m, -cap);
    trigger();
  });
  machines_.push_back(std::move(pm));
  trigger();
  return ref;
}

void IaaSService::deregister_pm(PhysicalMachine& pm, bool forcible) {
  auto it = std::find_if(machines_.begin(), machines_.end(),
                         [&](const std::unique_ptr<PhysicalMachine>& p) { return p.get() == &pm; });
  if (it == machines_.end())
    throw ValidationError("machine is not registered with this service");
  if (!pm.idle() && !forcible)
    throw StateError(pm.name() + ": hosted load blocks deregistration");
  draining_.insert(&pm);
  if (forcible) {
    // Kill the guests in place rather than moving them; suspended VMs parked
    // on this machine's repository go with it.
    std::vector<VMPtr> doomed;
    for (const VMPtr& vm : vms_)
      if (vm->host() == &pm || vm->migration_target() == &pm)
        doomed.push_back(vm);
    for (const VMPtr& vm : doomed)
      vm->destroy(true);
    std::vector<AllocationPtr> unbound = pm.allocations();
    for (const AllocationPtr& a : unbound)
      if (!a->bound())
        pm.cancel_allocation(a);
  }
  trigger();
}

Repository& IaaSService::register_repository(double capacity_bytes, double net_in_bytes_per_s,
                                             double net_out_bytes_per_s, std::string name) {
  repositories_.push_back(std::make_unique<Repository>(kernel_, capacity_bytes, net_in_bytes_per_s,
                                                       net_out_bytes_per_s, std::move(name)));
  return *repositories_.back();
}

void IaaSService::deregister_repository(Repository& repo) {
  auto it = std::find_if(repositories_.begin(), repositories_.end(),
                         [&](const std::unique_ptr<Repository>& r) { return r.get() == &repo; });
  if (it == repositories_.end())
    throw ValidationError("repository is not registered with this service");
  if (repo.reserved_bytes() != 0.0 || repo.live_outbound() != 0)
    throw StateError(repo.name() + ": transfers in flight block deregistration");
  bool queued_against = std::any_of(queue_.begin(), queue_.end(), [&](const VMRequestPtr& r) {
    return r->image_source == &repo;
  });
  if (queued_against)
    throw StateError(repo.name() + ": queued requests still source images here");
  repositories_.erase(it);
}

bool IaaSService::ever_servable(const ResourceVector& per_vm, std::size_t count) const {
  std::size_t packable = 0;
  for (const auto& pm : machines_) {
    if (draining_.count(pm.get()) != 0)
      continue;
    const ResourceVector& cap = pm->capacity();
    if (per_vm.per_core > cap.per_core + kFitEps)
      continue;
    if (per_vm.cores > cap.cores + kFitEps || per_vm.memory > cap.memory + kFitEps)
      continue;
    auto packs = [](double whole, double part) {
      return static_cast<std::size_t>(std::floor(whole / part + kFitEps));
    };
    packable += std::min(packs(cap.cores, per_vm.cores), packs(cap.memory, per_vm.memory));
    if (packable >= count)
      return true;
  }
  return packable >= count;
}

VMRequestPtr IaaSService::request_vms(VMImage image, const ResourceVector& per_vm,
                                      std::size_t count, Repository* image_source,
                                      std::function<void(VMRequest&)> on_decision) {
  if (count == 0)
    throw ValidationError("a request needs at least one VM");
  if (per_vm.cores <= 0.0 || per_vm.per_core <= 0.0 || per_vm.memory <= 0.0)
    throw ValidationError("per-VM resources must be positive in every dimension");
  if (machines_.empty())
    throw StateError("no machines are registered");
  Repository* source = image_source;
  if (source == nullptr && !repositories_.empty())
    source = repositories_.front().get();
  if (source != nullptr) {
    if (source->lookup(image.id) == nullptr)
      throw ValidationError("image " + image.id + " is not in " + source->name());
  } else {
    bool staged = std::any_of(machines_.begin(), machines_.end(),
                              [&](const std::unique_ptr<PhysicalMachine>& pm) {
                                return pm->repo().lookup(image.id) != nullptr;
                              });
    if (!staged)
      throw ValidationError("image " + image.id + " is staged nowhere");
  }
  // Feasibility looks at one VM against whole machines only; a count the park
  // cannot hold at once stays queued until enough capacity frees up.
  if (!ever_servable(per_vm, 1))
    throw UnfitError("no registered machine is large enough for one of these VMs");

  auto request = std::make_shared<VMRequest>();
  request->id = next_request_id_++;
  request->image = std::move(image);
  request->per_vm = per_vm;
  request->count = count;
  request->image_source = source;
  request->submitted = clock_.now();
  request->on_decision = std::move(on_decision);
  queue_.push_back(request);
  note_queue(*request);
  trigger();
  return request;
}

void IaaSService::reject(VMRequest& request) {
  request.status = VMRequest::Status::rejected;
  if (request.on_decision)
    request.on_decision(request);
  note_queue(request);
}

bool IaaSService::try_serve(VMRequest& request) {
  struct Grant {
    PhysicalMachine* pm;
    AllocationPtr allocation;
    Repository* source;
  };
  std::vector<Grant> grants;
  grants.reserve(request.count);
  auto rollback = [&] {
    suppress_triggers_ = true;
    for (Grant& g : grants)
      g.pm->cancel_allocation(g.allocation);
    suppress_triggers_ = false;
  };

  for (std::size_t i = 0; i < request.count; ++i) {
    Grant grant{nullptr, nullptr, nullptr};
    for (auto& pm_ptr : machines_) {
      PhysicalMachine& pm = *pm_ptr;
      if (pm.state() != PMState::running || draining_.count(&pm) != 0)
        continue;
      bool prestaged = pm.repo().lookup(request.image.id) != nullptr;
      Repository* source = prestaged ? &pm.repo() : request.image_source;
      if (source == nullptr)
        continue; // pre-staged operation and this machine lacks the image
      if (pm.repo().free_bytes() < request.image.size_bytes)
        continue; // no room for the per-VM disk copy
      AllocationPtr a;
      try {
        a = pm.allocate(request.per_vm, true);
      } catch (const UnfitError&) {
        continue; // smaller machine in a heterogeneous park
      }
      if (!a)
        continue;
      grant = {&pm, std::move(a), source};
      break;
    }
    if (grant.pm == nullptr) {
      rollback();
      return false;
    }
    grants.push_back(std::move(grant));
  }

  request.status = VMRequest::Status::scheduled;
  for (Grant& g : grants) {
    VMPtr vm = VirtualMachine::make(kernel_, request.image, g.allocation->resources(),
                                    "vm" + std::to_string(next_vm_serial_++));
    vm->on_state_change([this](VirtualMachine& v, VMState prev, VMState next) {
      note_vm_state(v, prev, next);
    });
    vms_.push_back(vm);
    request.vms.push_back(vm);
    vm->deploy(g.allocation, *g.source);
  }
  if (request.on_decision)
    request.on_decision(request);
  note_queue(request);
  return true;
}

void IaaSService::terminate_vm(const VMPtr& vm, bool kill_tasks) {
  if (!vm)
    throw ValidationError("null VM");
  auto it = std::find(vms_.begin(), vms_.end(), vm);
  if (it == vms_.end())
    throw ValidationError(vm->name() + " is not managed by this service");
  VMPtr keep = vm; // the destroy path drops the service's reference
  keep->destroy(kill_tasks);
}

bool IaaSService::resize_vm(const VMPtr& vm, const ResourceVector& resources) {
  if (!vm)
    throw ValidationError("null VM");
  if (std::find(vms_.begin(), vms_.end(), vm) == vms_.end())
    throw ValidationError(vm->name() + " is not managed by this service");
  bool ok = vm->resize(resources);
  if (ok)
    trigger();
  return ok;
}

IaaSService::CloudState IaaSService::query_state() const {
  CloudState s;
  s.machines = machines_.size();
  for (const auto& pm : machines_) {
    s.total_capacity_units_per_s += pm->capacity().total_processing();
    switch (pm->state()) {
    case PMState::running: {
      ++s.machines_running;
      s.running_capacity_units_per_s += pm->capacity().total_processing();
      ResourceVector f = pm->free_capacity();
      s.free_cores += f.cores;
      s.free_memory_bytes += f.memory;
      break;
    }
    case PMState::switching_on:
    case PMState::switching_off:
      ++s.machines_switching;
      break;
    case PMState::off:
      ++s.machines_off;
      break;
    }
  }
  s.vms = vms_.size();
  for (const VMPtr& vm : vms_)
    if (vm->state() == VMState::running)
      ++s.vms_running;
  s.queued_requests = queue_.size();
  s.vm_scheduler = vm_scheduler_->name();
  if (pm_scheduler_)
    s.pm_scheduler = pm_scheduler_->name();
  return s;
}

std::uint64_t IaaSService::on_vm_event(VMEventHandler handler) {
  std::uint64_t token = next_token_++;
  vm_event_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void IaaSService::remove_vm_event_handler(std::uint64_t token) {
  auto it = std::find_if(vm_event_handlers_.begin(), vm_event_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != vm_event_handlers_.end())
    vm_event_handlers_.erase(it);
}

std::uint64_t IaaSService::on_capacity_change(CapacityHandler handler) {
  std::uint64_t token = next_token_++;
  capacity_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void IaaSService::remove_capacity_handler(std::uint64_t token) {
  auto it = std::find_if(capacity_handlers_.begin(), capacity_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != capacity_handlers_.end())
    capacity_handlers_.erase(it);
}

std::uint64_t IaaSService::on_queue_change(QueueHandler handler) {
  std::uint64_t token = next_token_++;
  queue_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void IaaSService::remove_queue_handler(std::uint64_t token) {
  auto it = std::find_if(queue_handlers_.begin(), queue_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != queue_handlers_.end())
    queue_handlers_.erase(it);
}

std::uint64_t IaaSService::on_allocation_release(ReleaseHandler handler) {
  std::uint64_t token = next_token_++;
  release_handlers_.emplace_back(token, std::move(handler));
  return token;
}

void IaaSService::remove_release_handler(std::uint64_t token) {
  auto it = std::find_if(release_handlers_.begin(), release_handlers_.end(),
                         [token](const auto& p) { return p.first == token; });
  if (it != release_handlers_.end())
    release_handlers_.erase(it);
}

void IaaSService::note_vm_state(VirtualMachine& vm, VMState prev, VMState next) {
  if (next == VMState::destroyed) {
    auto it = std::find_if(vms_.begin(), vms_.end(),
                           [&](const VMPtr& p) { return p.get() == &vm; });
    if (it != vms_.end()) {
      vm_reap_.push_back(*it);
      vms_.erase(it);
      arm_reap_flush();
    }
  }
  auto handlers = vm_event_handlers_;
  for (auto& [token, handler] : handlers)
    handler(vm, prev, next);
  trigger();
}

void IaaSService::note_capacity(PhysicalMachine& pm, double delta_units_per_s) {
  auto handlers = capacity_handlers_;
  for (auto& [token, handler] : handlers)
    handler(pm, delta_units_per_s);
}

void IaaSService::note_queue(const VMRequest& request) {
  auto handlers = queue_handlers_;
  for (auto& [token, handler] : handlers)
    handler(request);
}

void IaaSService::note_release(PhysicalMachine& pm) {
  auto handlers = release_handlers_;
  for (auto& [token, handler] : handlers)
    handler(pm);
  trigger();
}

void IaaSService::drain_sweep() {
  for (auto it = draining_.begin(); it != draining_.end();) {
    PhysicalMachine* pm = *it;
    if (pm->idle() && pm->repo().reserved_bytes() == 0.0 && pm->repo().live_outbound() == 0) {
      it = draining_.erase(it);
      reap_machine(pm);
    } else {
      ++it;
    }
  }
}

void IaaSService::reap_machine(PhysicalMachine* pm) {
  if (pm_scheduler_)
    pm_scheduler_->forget(*pm);
  auto it = std::find_if(machines_.begin(), machines_.end(),
                         [pm](const std::unique_ptr<PhysicalMachine>& p) { return p.get() == pm; });
  if (it == machines_.end())
    return;
  pm->set_allocation_release_hook(nullptr);
  if (pm->state() == PMState::running)
    note_capacity(*pm, -pm->capacity().total_processing());
  machine_reap_.push_back(std::move(*it));
  machines_.erase(it);
  arm_reap_flush();
}

void IaaSService::arm_reap_flush() {
  if (reap_flush_armed_)
    return;
  reap_flush_armed_ = true;
  clock_.defer(1, [this] {
    reap_flush_armed_ = false;
    vm_reap_.clear();
    machine_reap_.clear();
  });
}

void IaaSService::trigger() {
  if (suppress_triggers_)
    return;
  if (in_trigger_) {
    retrigger_ = true;
    return;
  }
  in_trigger_ = true;
  std::size_t rounds = 0;
  do {
    retrigger_ = false;
    vm_scheduler_->dispatch(*this);
    drain_sweep();
    if (pm_scheduler_)
      pm_scheduler_->react(*this);
    if (++rounds > 10000)
      throw InternalError("scheduler feedback loop does not settle");
  } while (retrigger_);
  in_trigger_ = false;
}

} // namespace iaasim
