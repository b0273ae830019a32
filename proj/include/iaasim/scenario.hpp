#pragma once

#include <iosfwd>
#include <optional>
#include <string>

namespace iaasim {

/** Everything needed to stand up a cloud for a replay: machine park shape,
 *  power profile flavour, image store and scheduler policies.  Serializes to
 *  and from JSON; unknown keys are rejected so typos cannot silently fall
 *  back to defaults. */
struct ScenarioConfig {
  double tick_seconds = 1e-3;

  std::size_t machine_count = 20;
  double cores_per_machine = 64.0;
  double per_core_units_per_s = 1.0;
  double machine_memory_bytes = 256.0 * 1024.0 * 1024.0 * 1024.0;
  double machine_disk_bytes = 5e12;
  double machine_net_bytes_per_s = 125e6;
  bool scripted_shutdown = false;

  double storage_capacity_bytes = 1e13;
  double storage_net_bytes_per_s = 1e9;
  double latency_s = 0.0;
  bool prestage_images = false;

  std::string image_id = "base-image";
  double image_bytes = 1e8;
  double boot_seconds = 10.0;
  double vm_memory_bytes = 4.0 * 1024.0 * 1024.0 * 1024.0;
  double allocation_expiry_s = 60.0;

  std::string vm_scheduler = "first-fit";  // first-fit | non-queuing | smallest-first
  std::string pm_scheduler = "always-on";  // always-on | on-demand | none
  double pm_grace_s = 30.0;

  std::optional<double> meter_period_s;    // absent: no energy metering
};

ScenarioConfig load_scenario(std::istream& in);
void save_scenario(std::ostream& out, const ScenarioConfig& config);
std::string scenario_json(const ScenarioConfig& config);

/** Stable fingerprint of the configuration; replays are only comparable when
 *  their digests match. */
std::string scenario_digest(const ScenarioConfig& config);

/** Throws ValidationError when a field is out of range or a scheduler name is
 *  unknown. */
void validate_scenario(const ScenarioConfig& config);

} // namespace iaasim
