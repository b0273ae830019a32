#pragma once

#include <string>
#include <vector>

#include "iaasim/scenario.hpp"
#include "iaasim/trace.hpp"

namespace iaasim {

struct JobOutcome {
  std::string id;
  double submit_s = 0.0;
  double runtime_s = 0.0;
  unsigned cores = 0;
  std::size_t vms = 0;        // how many VMs the job was split across
  bool rejected = false;
  double scheduled_s = -1.0;  // when its VMs were placed; -1 if never
  double finish_s = -1.0;     // when its last task completed; -1 if never
};

struct MeterReading {
  std::string name;
  double joules = 0.0;
};

struct ReplayResult {
  std::vector<JobOutcome> jobs;
  std::size_t completed = 0;
  std::size_t rejected = 0;
  double makespan_s = 0.0;   // simulated time of the last job completion
  double simulated_s = 0.0;  // simulated time when the system went quiet
  double wall_seconds = 0.0; // host time the simulation took
  double total_joules = 0.0; // sum over meters (0 when metering is off)
  std::vector<MeterReading> meters;
  std::string config_digest;
};

/** Run the trace through a cloud built from the scenario: one request per
 *  job (split across several VMs when it is wider than a machine), one
 *  full-speed task per VM, VMs torn down as their task completes. */
ReplayResult replay_trace(const ScenarioConfig& config, const std::vector<TraceJob>& trace);

} // namespace iaasim
