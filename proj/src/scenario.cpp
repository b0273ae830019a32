#include "iaasim/scenario.hpp"

#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"

#include "iaasim/errors.hpp"

namespace iaasim {

namespace {

using nlohmann::json;

json to_json(const ScenarioConfig& c) {
  json j;
  j["tick_seconds"] = c.tick_seconds;
  j["machine_count"] = c.machine_count;
  j["cores_per_machine"] = c.cores_per_machine;
  j["per_core_units_per_s"] = c.per_core_units_per_s;
  j["machine_memory_bytes"] = c.machine_memory_bytes;
  j["machine_disk_bytes"] = c.machine_disk_bytes;
  j["machine_net_bytes_per_s"] = c.machine_net_bytes_per_s;
  j["scripted_shutdown"] = c.scripted_shutdown;
  j["storage_capacity_bytes"] = c.storage_capacity_bytes;
  j["storage_net_bytes_per_s"] = c.storage_net_bytes_per_s;
  j["latency_s"] = c.latency_s;
  j["prestage_images"] = c.prestage_images;
  j["image_id"] = c.image_id;
  j["image_bytes"] = c.image_bytes;
  j["boot_seconds"] = c.boot_seconds;
  j["vm_memory_bytes"] = c.vm_memory_bytes;
  j["allocation_expiry_s"] = c.allocation_expiry_s;
  j["vm_scheduler"] = c.vm_scheduler;
  j["pm_scheduler"] = c.pm_scheduler;
  j["pm_grace_s"] = c.pm_grace_s;
  if (c.meter_period_s.has_value())
    j["meter_period_s"] = *c.meter_period_s;
  return j;
}

ScenarioConfig from_json(const json& j) {
  if (!j.is_object())
    throw ValidationError("scenario must be a JSON object");
  ScenarioConfig c;
  const std::set<std::string> known = {
      "tick_seconds",        "machine_count",        "cores_per_machine",
      "per_core_units_per_s", "machine_memory_bytes", "machine_disk_bytes",
      "machine_net_bytes_per_s", "scripted_shutdown", "storage_capacity_bytes",
      "storage_net_bytes_per_s", "latency_s",         "prestage_images",
      "image_id",            "image_bytes",          "boot_seconds",
      "vm_memory_bytes",     "allocation_expiry_s",  "vm_scheduler",
      "pm_scheduler",        "pm_grace_s",           "meter_period_s",
  };
  for (const auto& [key, value] : j.items())
    if (known.count(key) == 0)
      throw ValidationError("unknown scenario key: " + key);

  auto get = [&](const char* key, auto& into) {
    if (j.contains(key))
      into = j.at(key).get<std::decay_t<decltype(into)>>();
  };
  get("tick_seconds", c.tick_seconds);
  get("machine_count", c.machine_count);
  get("cores_per_machine", c.cores_per_machine);
  get("per_core_units_per_s", c.per_core_units_per_s);
  get("machine_memory_bytes", c.machine_memory_bytes);
  get("machine_disk_bytes", c.machine_disk_bytes);
  get("machine_net_bytes_per_s", c.machine_net_bytes_per_s);
  get("scripted_shutdown", c.scripted_shutdown);
  get("storage_capacity_bytes", c.storage_capacity_bytes);
  get("storage_net_bytes_per_s", c.storage_net_bytes_per_s);
  get("latency_s", c.latency_s);
  get("prestage_images", c.prestage_images);
  get("image_id", c.image_id);
  get("image_bytes", c.image_bytes);
  get("boot_seconds", c.boot_seconds);
  get("vm_memory_bytes", c.vm_memory_bytes);
  get("allocation_expiry_s", c.allocation_expiry_s);
  get("vm_scheduler", c.vm_scheduler);
  get("pm_scheduler", c.pm_scheduler);
  get("pm_grace_s", c.pm_grace_s);
  if (j.contains("meter_period_s"))
    c.meter_period_s = j.at("meter_period_s").get<double>();
  return c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

ScenarioConfig load_scenario(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  ScenarioConfig c = from_json(j);
  validate_scenario(c);
  return c;
}

void save_scenario(std::ostream& out, const ScenarioConfig& config) {
  out << to_json(config).dump(2) << '\n';
}

std::string scenario_json(const ScenarioConfig& config) {
  return to_json(config).dump();
}

std::string scenario_digest(const ScenarioConfig& config) {
  // json objects serialize with sorted keys, so the dump is canonical.
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(config).dump())));
  return buf;
}

void validate_scenario(const ScenarioConfig& c) {
  if (c.tick_seconds <= 0.0)
    throw ValidationError("tick_seconds must be positive");
  if (c.machine_count == 0)
    throw ValidationError("machine_count must be at least 1");
  if (c.cores_per_machine < 1.0 || c.per_core_units_per_s <= 0.0 ||
      c.machine_memory_bytes <= 0.0)
    throw ValidationError("machine capacity must be positive in every dimension");
  if (c.machine_disk_bytes <= 0.0 || c.machine_net_bytes_per_s <= 0.0)
    throw ValidationError("machine disk and network rates must be positive");
  if (c.storage_capacity_bytes <= 0.0 || c.storage_net_bytes_per_s <= 0.0)
    throw ValidationError("storage capacity and network rate must be positive");
  if (c.latency_s < 0.0)
    throw ValidationError("latency cannot be negative");
  if (c.image_id.empty() || c.image_bytes <= 0.0)
    throw ValidationError("the VM image needs an id and a positive size");
  if (c.boot_seconds < 0.0)
    throw ValidationError("boot_seconds cannot be negative");
  if (c.vm_memory_bytes <= 0.0 || c.vm_memory_bytes > c.machine_memory_bytes)
    throw ValidationError("vm_memory_bytes must be positive and fit one machine");
  if (c.allocation_expiry_s < 0.0)
    throw ValidationError("allocation_expiry_s cannot be negative");
  if (c.vm_scheduler != "first-fit" && c.vm_scheduler != "non-queuing" &&
      c.vm_scheduler != "smallest-first")
    throw ValidationError("unknown vm_scheduler: " + c.vm_scheduler);
  if (c.pm_scheduler != "always-on" && c.pm_scheduler != "on-demand" && c.pm_scheduler != "none")
    throw ValidationError("unknown pm_scheduler: " + c.pm_scheduler);
  if (c.pm_grace_s < 0.0)
    throw ValidationError("pm_grace_s cannot be negative");
  if (c.meter_period_s.has_value() && *c.meter_period_s <= 0.0)
    throw ValidationError("meter_period_s must be positive when present");
}

} // namespace iaasim
