// Command line front end: synthesize job traces, replay them through a
// simulated cloud, and compare measurement files from separate runs.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "iaasim/errors.hpp"
#include "iaasim/replay.hpp"
#include "iaasim/scenario.hpp"
#include "iaasim/trace.hpp"

namespace {

using nlohmann::json;

int run_generate(const iaasim::SyntheticSpec& spec, const std::string& output) {
  std::vector<iaasim::TraceJob> jobs = iaasim::generate_trace(spec);
  if (output.empty() || output == "-") {
    iaasim::write_trace(std::cout, jobs);
  } else {
    std::ofstream out(output);
    if (!out)
      throw iaasim::ValidationError("cannot open " + output + " for writing");
    iaasim::write_trace(out, jobs);
    std::cerr << jobs.size() << " jobs -> " << output << "\n";
  }
  return 0;
}

json measurement_json(const iaasim::ScenarioConfig& config, const iaasim::ReplayResult& result) {
  json m;
  m["config"] = json::parse(iaasim::scenario_json(config));
  m["digest"] = result.config_digest;
  m["jobs"] = result.jobs.size();
  m["completed"] = result.completed;
  m["rejected"] = result.rejected;
  m["makespan_s"] = result.makespan_s;
  m["simulated_s"] = result.simulated_s;
  m["wall_seconds"] = result.wall_seconds;
  m["total_joules"] = result.total_joules;
  json meters = json::array();
  for (const iaasim::MeterReading& r : result.meters)
    meters.push_back({{"name", r.name}, {"joules", r.joules}});
  m["meters"] = meters;
  return m;
}

int run_replay(const std::string& trace_path, const std::string& scenario_path,
               std::size_t limit, unsigned max_cores, const std::string& measurement_path,
               bool print_jobs) {
  iaasim::ScenarioConfig config;
  if (!scenario_path.empty()) {
    std::ifstream in(scenario_path);
    if (!in)
      throw iaasim::ValidationError("cannot open scenario " + scenario_path);
    config = iaasim::load_scenario(in);
  }

  iaasim::TraceLoadReport report;
  if (trace_path.empty() || trace_path == "-") {
    report = iaasim::load_trace(std::cin, limit, max_cores);
  } else {
    std::ifstream in(trace_path);
    if (!in)
      throw iaasim::ValidationError("cannot open trace " + trace_path);
    report = iaasim::load_trace(in, limit, max_cores);
  }
  if (!report.malformed_lines.empty()) {
    std::cerr << report.malformed_lines.size() << " malformed lines skipped (first at line "
              << report.malformed_lines.front() << ")\n";
  }
  if (report.filtered_wide > 0)
    std::cerr << report.filtered_wide << " jobs wider than " << max_cores << " cores skipped\n";
  if (report.jobs.empty())
    throw iaasim::ValidationError("trace holds no usable jobs");

  iaasim::ReplayResult result = iaasim::replay_trace(config, report.jobs);

  std::cout << "jobs:        " << result.jobs.size() << "\n"
            << "completed:   " << result.completed << "\n"
            << "rejected:    " << result.rejected << "\n"
            << "makespan:    " << result.makespan_s << " s simulated\n"
            << "quiet at:    " << result.simulated_s << " s simulated\n"
            << "wall time:   " << result.wall_seconds << " s\n";
  if (!result.meters.empty())
    std::cout << "energy:      " << result.total_joules << " J over " << result.meters.size()
              << " meters\n";

  if (print_jobs) {
    std::cout << "# id submit_s cores vms scheduled_s finish_s status\n";
    for (const iaasim::JobOutcome& j : result.jobs) {
      std::cout << j.id << ' ' << j.submit_s << ' ' << j.cores << ' ' << j.vms << ' '
                << j.scheduled_s << ' ' << j.finish_s << ' '
                << (j.rejected ? "rejected" : (j.finish_s >= 0.0 ? "completed" : "unfinished"))
                << "\n";
    }
  }

  if (!measurement_path.empty()) {
    std::ofstream out(measurement_path);
    if (!out)
      throw iaasim::ValidationError("cannot open " + measurement_path + " for writing");
    out << measurement_json(config, result).dump(2) << "\n";
    std::cerr << "measurement -> " << measurement_path << "\n";
  }
  return 0;
}

int run_analyze(const std::vector<std::string>& paths) {
  struct Row {
    std::string path;
    std::string digest;
    double jobs;
    double wall;
  };
  std::vector<Row> rows;
  for (const std::string& path : paths) {
    std::ifstream in(path);
    if (!in)
      throw iaasim::ValidationError("cannot open " + path);
    json m;
    try {
      in >> m;
    } catch (const json::parse_error& e) {
      throw iaasim::ValidationError(path + " is not valid JSON: " + e.what());
    }
    rows.push_back({path, m.at("digest").get<std::string>(), m.at("jobs").get<double>(),
                    m.at("wall_seconds").get<double>()});
  }
  for (const Row& r : rows)
    if (r.digest != rows.front().digest)
      throw iaasim::ValidationError(r.path + " was produced under a different scenario (digest " +
                                    r.digest + " vs " + rows.front().digest +
                                    "); runs are not comparable");

  std::cout << "# file jobs wall_s jobs_per_wall_s scaling_vs_first\n";
  const Row& base = rows.front();
  bool healthy = true;
  for (const Row& r : rows) {
    double rate = r.wall > 0.0 ? r.jobs / r.wall : 0.0;
    double scaling = (r.jobs * base.wall) / (base.jobs * r.wall);
    if (&r != &base && scaling < 0.8)
      healthy = false;
    std::cout << r.path << ' ' << r.jobs << ' ' << r.wall << ' ' << rate << ' ' << scaling
              << "\n";
  }
  std::cout << (healthy ? "scaling holds (every ratio >= 0.8)"
                        : "scaling degrades (a ratio fell below 0.8)")
            << "\n";
  return healthy ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"IaaS cloud simulator: trace generation, replay and run comparison"};
  app.require_subcommand(1);

  iaasim::SyntheticSpec spec;
  std::string gen_output;
  CLI::App* generate = app.add_subcommand("generate", "Synthesize a job trace");
  generate->add_option("--seed", spec.seed, "RNG seed");
  generate->add_option("--count", spec.count, "number of jobs");
  generate->add_option("--max-parallel", spec.max_parallel, "burst width cap");
  generate->add_option("--spread", spec.spread_s, "burst start jitter [s]");
  generate->add_option("--runtime-min", spec.runtime_min_s, "shortest job [s]");
  generate->add_option("--runtime-max", spec.runtime_max_s, "longest job [s]");
  generate->add_option("--cores-min", spec.cores_min, "narrowest job");
  generate->add_option("--cores-max", spec.cores_max, "widest job");
  generate->add_option("-o,--output", gen_output, "trace file ('-' = stdout)");

  std::string trace_path, scenario_path, measurement_path;
  std::size_t limit = 0;
  unsigned max_cores = 0;
  bool print_jobs = false;
  CLI::App* replay = app.add_subcommand("replay", "Run a trace through a simulated cloud");
  replay->add_option("-t,--trace", trace_path, "trace file ('-' = stdin)");
  replay->add_option("-s,--scenario", scenario_path, "scenario JSON (defaults when omitted)");
  replay->add_option("--limit", limit, "use only the first N jobs");
  replay->add_option("--max-cores", max_cores, "skip jobs wider than this");
  replay->add_option("-m,--measurement", measurement_path, "write a measurement JSON here");
  replay->add_flag("--jobs", print_jobs, "print the per-job outcome table");

  std::vector<std::string> measurement_paths;
  CLI::App* analyze = app.add_subcommand("analyze", "Compare measurement files from replays");
  analyze->add_option("measurements", measurement_paths, "measurement JSON files")
      ->required()
      ->expected(2, -1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return run_generate(spec, gen_output);
    if (replay->parsed())
      return run_replay(trace_path, scenario_path, limit, max_cores, measurement_path,
                        print_jobs);
    if (analyze->parsed())
      return run_analyze(measurement_paths);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
