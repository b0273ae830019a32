#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace iaasim {

/** One batch job: when it arrives, how long it computes at full speed, and how
 *  many cores it wants. */
struct TraceJob {
  std::string id;
  double submit_s = 0.0;
  double runtime_s = 0.0;
  unsigned cores = 1;
};

/** Knobs of the synthetic generator.  Jobs come in bursts of max_parallel;
 *  each burst's members start within spread_s of the burst opening, and the
 *  next burst opens when the previous one has fully finished, so the trace
 *  never exceeds max_parallel concurrent jobs. */
struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t count = 100;
  std::size_t max_parallel = 10;
  double spread_s = 300.0;
  double runtime_min_s = 60.0;
  double runtime_max_s = 3600.0;
  unsigned cores_min = 1;
  unsigned cores_max = 8;
};

/** Deterministic for a given spec (same seed, same trace), sorted by submit
 *  time. */
std::vector<TraceJob> generate_trace(const SyntheticSpec& spec);

struct TraceLoadReport {
  std::vector<TraceJob> jobs;
  std::size_t lines_read = 0;
  std::size_t filtered_wide = 0;              // dropped: wider than max_cores
  std::vector<std::size_t> malformed_lines;   // 1-based line numbers
};

/** Read "id submit_s runtime_s cores" lines ('#'/';' start comments, extra
 *  columns are ignored).  limit=0 keeps everything; max_cores=0 disables the
 *  width filter. */
TraceLoadReport load_trace(std::istream& in, std::size_t limit = 0, unsigned max_cores = 0);

void write_trace(std::ostream& out, const std::vector<TraceJob>& jobs);

} // namespace iaasim
