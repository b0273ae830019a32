#pragma once

#include "iaasim/clock.hpp"

namespace iaasim::progress {

/** State of one consumption: work sitting between the two parties (p_u) and
 *  work the provider has not touched yet (p_r).  Units are arbitrary
 *  (instructions, bytes); rates are units per tick. */
struct State {
  double under_processing = 0.0; // p_u
  double remaining = 0.0;        // p_r
};

struct StepResult {
  double produced = 0.0; // units the provider moved into p_u this tick
  double consumed = 0.0; // units the consumer drained out of p_u this tick
};

/** One tick of the provider/consumer update pair.
 *
 *  provider first:  p_u <- p_u + min(p_r, min(provider_power, limit))
 *                   p_r <- p_r - (that same amount)
 *  consumer next:   p_u <- max(0, p_u - min(consumer_power, limit))
 *
 *  The p_r decrement mirrors exactly what the provider moved out of it, so
 *  produced + remaining + under_processing is conserved tick over tick.
 */
StepResult step(State& s, double provider_power, double consumer_power, double limit);

struct AdvanceResult {
  Tick ticks = 0;          // ticks actually spent (may be < requested on early exit)
  double produced = 0.0;
  double consumed = 0.0;
  bool completed = false;  // p_u and p_r both hit zero
  bool stalled = false;    // no further change possible at these rates
};

/** Advance a consumption by up to max_ticks at fixed effective rates.
 *
 *  Produces the same trajectory as iterating step() with
 *  production = min(provider_power, limit) and drain = min(consumer_power, limit),
 *  but in O(1) per rate regime instead of O(ticks): the trajectory is piecewise
 *  linear with at most four pieces (full production with rising or falling
 *  backlog, the sub-rate tail tick, pure backlog drain, drained residue).
 *
 *  Completion applies completion_eps: once p_u + p_r falls to or below it the
 *  consumption counts as done and the residue is dropped.  Stall means neither
 *  side can make progress (production rate zero with p_r left, or backlog with
 *  zero drain rate) so no amount of further ticks would change the state.
 */
AdvanceResult advance(State& s, double production_rate, double drain_rate, Tick max_ticks,
                      double completion_eps);

/** Ticks until the consumption completes at these rates; kNoTick when it never
 *  does.  Same arithmetic as advance(), so a group settled after exactly this
 *  many ticks observes the completion. */
Tick ticks_to_completion(State s, double production_rate, double drain_rate,
                         double completion_eps);

} // namespace iaasim::progress
