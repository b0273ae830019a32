#include "iaasim/trace.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "iaasim/errors.hpp"

namespace iaasim {

namespace {

/** Shortest decimal form that parses back to exactly the same double, so a
 *  written trace replays tick-for-tick like the in-memory one. */
std::string exact(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

} // namespace

std::vector<TraceJob> generate_trace(const SyntheticSpec& spec) {
  if (spec.max_parallel == 0)
    throw ValidationError("max_parallel must be at least 1");
  if (spec.runtime_min_s <= 0.0 || spec.runtime_max_s < spec.runtime_min_s)
    throw ValidationError("runtime bounds must satisfy 0 < min <= max");
  if (spec.cores_min == 0 || spec.cores_max < spec.cores_min)
    throw ValidationError("core bounds must satisfy 1 <= min <= max");
  if (spec.spread_s < 0.0)
    throw ValidationError("spread cannot be negative");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(0.0, spec.spread_s);
  std::uniform_real_distribution<double> runtime(spec.runtime_min_s, spec.runtime_max_s);
  std::uniform_int_distribution<unsigned> cores(spec.cores_min, spec.cores_max);

  std::vector<TraceJob> jobs;
  jobs.reserve(spec.count);
  double burst_open = 0.0;
  std::size_t made = 0;
  while (made < spec.count) {
    std::size_t width = std::min(spec.max_parallel, spec.count - made);
    double horizon = burst_open;
    for (std::size_t i = 0; i < width; ++i) {
      TraceJob job;
      job.id = "job" + std::to_string(made);
      job.submit_s = burst_open + (spec.spread_s > 0.0 ? jitter(rng) : 0.0);
      job.runtime_s = runtime(rng);
      job.cores = cores(rng);
      horizon = std::max(horizon, job.submit_s + job.runtime_s);
      jobs.push_back(std::move(job));
      ++made;
    }
    burst_open = horizon; // next burst waits for the slowest member
  }
  std::stable_sort(jobs.begin(), jobs.end(),
                   [](const TraceJob& a, const TraceJob& b) { return a.submit_s < b.submit_s; });
  return jobs;
}

TraceLoadReport load_trace(std::istream& in, std::size_t limit, unsigned max_cores) {
  TraceLoadReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ++report.lines_read;
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id))
      continue; // blank
    if (id[0] == '#' || id[0] == ';')
      continue; // comment
    double submit = 0.0, runtime = 0.0;
    long cores = 0;
    if (!(fields >> submit >> runtime >> cores) || submit < 0.0 || runtime < 0.0 || cores < 1) {
      report.malformed_lines.push_back(lineno);
      continue;
    }
    if (max_cores != 0 && static_cast<unsigned long>(cores) > max_cores) {
      ++report.filtered_wide;
      continue;
    }
    report.jobs.push_back(
        {std::move(id), submit, runtime, static_cast<unsigned>(cores)});
    if (limit != 0 && report.jobs.size() == limit)
      break;
  }
  std::stable_sort(report.jobs.begin(), report.jobs.end(),
                   [](const TraceJob& a, const TraceJob& b) { return a.submit_s < b.submit_s; });
  return report;
}

void write_trace(std::ostream& out, const std::vector<TraceJob>& jobs) {
  out << "# id submit_s runtime_s cores\n";
  for (const TraceJob& job : jobs)
    out << job.id << ' ' << exact(job.submit_s) << ' ' << exact(job.runtime_s) << ' '
        << job.cores << '\n';
}

} // namespace iaasim
