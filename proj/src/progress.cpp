#include "iaasim/progress.hpp"

#include <algorithm>
#include <cmath>

namespace iaasim::progress {

namespace {

/** floor(x) as a Tick, saturating instead of overflowing for huge ratios. */
Tick floor_ticks(double x) {
  if (x >= 9.0e18)
    return kNoTick / 2;
  return x <= 0.0 ? 0 : static_cast<Tick>(x);
}

} // namespace

StepResult step(State& s, double provider_power, double consumer_power, double limit) {
  StepResult r;
  double grant = std::min(provider_power, limit);
  r.produced = std::min(s.remaining, grant);
  s.under_processing += r.produced;
  s.remaining -= r.produced;
  double drain = std::min(consumer_power, limit);
  r.consumed = std::min(s.under_processing, drain);
  s.under_processing -= r.consumed;
  return r;
}

AdvanceResult advance(State& s, double production_rate, double drain_rate, Tick max_ticks,
                      double completion_eps) {
  AdvanceResult out;
  const double prod = std::max(production_rate, 0.0);
  const double cons = std::max(drain_rate, 0.0);

  while (true) {
    // Exact-multiple regimes can leave a -1ulp residue behind.
    if (s.under_processing < 0.0)
      s.under_processing = 0.0;
    if (s.remaining < 0.0)
      s.remaining = 0.0;
    if (s.under_processing + s.remaining <= completion_eps) {
      s.under_processing = 0.0;
      s.remaining = 0.0;
      out.completed = true;
      return out;
    }
    if (out.ticks >= max_ticks)
      return out;
    const Tick left = max_ticks - out.ticks;

    if (s.remaining > 0.0 && prod > 0.0) {
      if (s.remaining >= prod) {
        // Full-production regime: p_r shrinks by prod per tick for k_pr ticks.
        Tick k_pr = floor_ticks(s.remaining / prod);
        if (k_pr == 0)
          k_pr = 1; // remaining/prod rounded just below 1.0; treat as tail
        if (cons <= prod) {
          // Backlog grows (or holds) linearly; nothing clamps.
          Tick n = std::min(left, k_pr);
          s.under_processing += static_cast<double>(n) * (prod - cons);
          s.remaining -= static_cast<double>(n) * prod;
          out.produced += static_cast<double>(n) * prod;
          out.consumed += static_cast<double>(n) * cons;
          out.ticks += n;
        } else {
          const double deficit = cons - prod; // backlog shrinks by this per full tick
          if (s.under_processing >= deficit) {
            // Backlog still covers a full drain: both sides at full rate.
            Tick k_full = floor_ticks(s.under_processing / deficit);
            Tick n = std::min({left, k_pr, k_full});
            if (n == 0)
              n = 1;
            s.under_processing -= static_cast<double>(n) * deficit;
            s.remaining -= static_cast<double>(n) * prod;
            out.produced += static_cast<double>(n) * prod;
            out.consumed += static_cast<double>(n) * cons;
            out.ticks += n;
          } else if (s.under_processing > 0.0) {
            // Transition tick: backlog plus fresh production all drains away.
            out.consumed += s.under_processing + prod;
            out.produced += prod;
            s.remaining -= prod;
            s.under_processing = 0.0;
            out.ticks += 1;
          } else {
            // Backlog empty, consumer over-provisioned: throughput equals prod.
            Tick n = std::min(left, k_pr);
            s.remaining -= static_cast<double>(n) * prod;
            out.produced += static_cast<double>(n) * prod;
            out.consumed += static_cast<double>(n) * prod;
            out.ticks += n;
          }
        }
      } else {
        // Tail tick: the last sliver of p_r moves over in one tick.
        double a = s.remaining;
        double u = s.under_processing + a;
        double b = std::min(u, cons);
        out.produced += a;
        out.consumed += b;
        s.under_processing = u - b;
        s.remaining = 0.0;
        out.ticks += 1;
      }
    } else {
      // No production possible: pure backlog drain.
      if (cons <= 0.0 || s.under_processing <= 0.0) {
        out.stalled = true;
        return out;
      }
      if (s.under_processing >= cons) {
        Tick k_full = floor_ticks(s.under_processing / cons);
        Tick n = std::min(left, k_full);
        if (n == 0)
          n = 1;
        s.under_processing -= static_cast<double>(n) * cons;
        out.consumed += static_cast<double>(n) * cons;
        out.ticks += n;
      } else {
        out.consumed += s.under_processing;
        s.under_processing = 0.0;
        out.ticks += 1;
      }
    }
  }
}

Tick ticks_to_completion(State s, double production_rate, double drain_rate,
                         double completion_eps) {
  AdvanceResult r = advance(s, production_rate, drain_rate, kNoTick / 2, completion_eps);
  return r.completed ? r.ticks : kNoTick;
}

} // namespace iaasim::progress
