#include "iaasim/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "iaasim/errors.hpp"
#include "iaasim/iaas.hpp"

namespace iaasim {

namespace {

std::unique_ptr<VMScheduler> make_vm_scheduler(const std::string& name) {
  if (name == "first-fit")
    return std::make_unique<FirstFitVMScheduler>();
  if (name == "non-queuing")
    return std::make_unique<NonQueuingVMScheduler>();
  if (name == "smallest-first")
    return std::make_unique<SmallestFirstVMScheduler>();
  throw ValidationError("unknown vm_scheduler: " + name);
}

std::unique_ptr<PMScheduler> make_pm_scheduler(const ScenarioConfig& config, SimClock& clock) {
  if (config.pm_scheduler == "always-on")
    return std::make_unique<AlwaysOnPMScheduler>();
  if (config.pm_scheduler == "on-demand")
    return std::make_unique<OnDemandPMScheduler>(clock.ticks(config.pm_grace_s));
  if (config.pm_scheduler == "none")
    return nullptr;
  throw ValidationError("unknown pm_scheduler: " + config.pm_scheduler);
}

} // namespace

ReplayResult replay_trace(const ScenarioConfig& config, const std::vector<TraceJob>& trace) {
  validate_scenario(config);

  ReplayResult result;
  result.config_digest = scenario_digest(config);
  result.jobs.reserve(trace.size());
  for (const TraceJob& job : trace) {
    JobOutcome out;
    out.id = job.id;
    out.submit_s = job.submit_s;
    out.runtime_s = job.runtime_s;
    out.cores = job.cores;
    result.jobs.push_back(std::move(out));
  }

  SimClock clock(config.tick_seconds);
  SharingKernel kernel(clock);
  IaaSService service(kernel, make_vm_scheduler(config.vm_scheduler),
                      make_pm_scheduler(config, clock));
  Repository& storage =
      service.register_repository(config.storage_capacity_bytes, config.storage_net_bytes_per_s,
                                  config.storage_net_bytes_per_s, "storage");

  // Boot cost is one core-second per boot second, so a single-core VM boots
  // in boot_seconds and wider VMs boot faster.
  VMImage image{config.image_id, config.image_bytes,
                config.boot_seconds * config.per_core_units_per_s};
  storage.register_object({image.id, image.size_bytes});

  PhysicalMachine::Config pm_template;
  pm_template.capacity = {config.cores_per_machine, config.per_core_units_per_s,
                          config.machine_memory_bytes};
  pm_template.repo_capacity_bytes = config.machine_disk_bytes;
  pm_template.net_in_bytes_per_s = config.machine_net_bytes_per_s;
  pm_template.net_out_bytes_per_s = config.machine_net_bytes_per_s;
  pm_template.profile =
      config.scripted_shutdown ? scripted_shutdown_profile() : default_power_profile();
  pm_template.default_allocation_expiry_s = config.allocation_expiry_s;

  Tick latency = config.latency_s > 0.0 ? clock.ticks(config.latency_s) : 0;
  for (std::size_t i = 0; i < config.machine_count; ++i) {
    PhysicalMachine::Config cfg = pm_template;
    cfg.name = "pm" + std::to_string(i);
    PhysicalMachine& pm = service.register_pm(std::move(cfg));
    storage.node().set_latency_to(pm.repo().node(), latency);
    pm.repo().node().set_latency_to(storage.node(), latency);
    if (config.prestage_images)
      pm.repo().register_object({image.id, image.size_bytes});
  }
  for (auto& a : service.machines())
    for (auto& b : service.machines())
      if (a.get() != b.get())
        a->repo().node().set_latency_to(b->repo().node(), latency);

  std::vector<std::unique_ptr<DirectEnergyMeter>> meters;
  if (config.meter_period_s.has_value()) {
    Tick period = clock.ticks(*config.meter_period_s);
    for (auto& pm : service.machines()) {
      meters.push_back(std::make_unique<DirectEnergyMeter>(clock, pm->energy(), pm->name()));
      meters.back()->start(period);
    }
  }

  std::size_t outstanding = trace.size();
  std::function<void()> job_settled = [&] {
    if (--outstanding == 0)
      for (auto& m : meters)
        m->stop();
  };

  struct LiveJob {
    std::size_t index;
    std::size_t tasks_left;
  };

  std::function<void(std::size_t)> submit = [&](std::size_t idx) {
    const TraceJob& job = trace[idx];
    JobOutcome& out = result.jobs[idx];
    std::size_t vm_count = static_cast<std::size_t>(
        std::ceil(static_cast<double>(job.cores) / config.cores_per_machine));
    if (vm_count == 0)
      vm_count = 1;
    double per_vm_cores =
        std::ceil(static_cast<double>(job.cores) / static_cast<double>(vm_count));
    ResourceVector per_vm{per_vm_cores, config.per_core_units_per_s, config.vm_memory_bytes};
    double work_per_vm = job.runtime_s * static_cast<double>(job.cores) *
                         config.per_core_units_per_s / static_cast<double>(vm_count);

    auto decision = [&, idx, work_per_vm](VMRequest& request) {
      JobOutcome& o = result.jobs[idx];
      if (request.status == VMRequest::Status::rejected) {
        o.rejected = true;
        ++result.rejected;
        job_settled();
        return;
      }
      o.scheduled_s = clock.seconds(clock.now());
      o.vms = request.vms.size();
      auto live = std::make_shared<LiveJob>(LiveJob{idx, request.vms.size()});
      for (const VMPtr& vm : request.vms) {
        auto token = std::make_shared<std::uint64_t>(0);
        std::weak_ptr<VirtualMachine> weak = vm;
        *token = vm->on_state_change(
            [&, live, token, weak, work_per_vm](VirtualMachine& v, VMState, VMState next) {
          if (next != VMState::running)
            return;
          v.remove_state_handler(*token);
          v.new_task(work_per_vm, std::numeric_limits<double>::infinity(),
                     [&, live, weak](ConsumptionOutcome) {
            if (VMPtr self = weak.lock())
              service.terminate_vm(self, true);
            if (--live->tasks_left == 0) {
              JobOutcome& done = result.jobs[live->index];
              done.finish_s = clock.seconds(clock.now());
              result.makespan_s = std::max(result.makespan_s, done.finish_s);
              ++result.completed;
              job_settled();
            }
          });
        });
      }
    };

    // Split jobs stay queued forever when the park can never host all their
    // VMs side by side; refuse those here instead of wedging the run.
    if (!service.ever_servable(per_vm, vm_count)) {
      out.rejected = true;
      ++result.rejected;
      job_settled();
      return;
    }
    try {
      service.request_vms(image, per_vm, vm_count,
                          config.prestage_images ? nullptr : &storage, decision);
    } catch (const SimError&) {
      out.rejected = true;
      ++result.rejected;
      job_settled();
    }
  };

  auto wall_start = std::chrono::steady_clock::now();
  // Feed submissions through one rolling timer instead of pre-deferring every
  // job: the event heap stays sized by the live set, not by the length of the
  // trace tail still to come.
  std::vector<std::size_t> order(trace.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&trace](std::size_t a, std::size_t b) {
    return trace[a].submit_s < trace[b].submit_s;
  });
  std::size_t next = 0;
  std::function<void()> pump = [&] {
    while (next < order.size() && clock.ticks(trace[order[next]].submit_s) <= clock.now())
      submit(order[next++]);
    if (next < order.size())
      clock.defer(clock.ticks(trace[order[next]].submit_s) - clock.now(), pump);
  };
  pump();
  clock.simulate_until_last_event();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  result.simulated_s = clock.seconds(clock.now());

  for (auto& m : meters) {
    result.meters.push_back({m->name(), m->total_joules()});
    result.total_joules += m->total_joules();
  }
  return result;
}

} // namespace iaasim
