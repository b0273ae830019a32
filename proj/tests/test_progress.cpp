#include <doctest.h>

#include <limits>
#include <random>

#include "iaasim/progress.hpp"

using namespace iaasim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/** Per-tick reference loop advance() promises to match: step() with the
 *  pre-folded rates, completion and stall checked between ticks. */
progress::AdvanceResult reference_advance(progress::State& s, double prod, double cons,
                                          Tick max_ticks, double eps) {
  progress::AdvanceResult out;
  prod = std::max(prod, 0.0);
  cons = std::max(cons, 0.0);
  for (;;) {
    if (s.under_processing < 0.0)
      s.under_processing = 0.0;
    if (s.remaining < 0.0)
      s.remaining = 0.0;
    if (s.under_processing + s.remaining <= eps) {
      s = {};
      out.completed = true;
      return out;
    }
    if (out.ticks >= max_ticks)
      return out;
    bool can_produce = s.remaining > 0.0 && prod > 0.0;
    bool can_drain = s.under_processing > 0.0 && cons > 0.0;
    if (!can_produce && !can_drain) {
      out.stalled = true;
      return out;
    }
    progress::StepResult r = progress::step(s, prod, cons, kInf);
    out.produced += r.produced;
    out.consumed += r.consumed;
    ++out.ticks;
  }
}

} // namespace

TEST_CASE("provider step moves min(remaining, power, limit)") {
  progress::State s{0.0, 10.0};
  progress::StepResult r = progress::step(s, 5.0, 0.0, 3.0);
  CHECK(r.produced == 3.0);
  CHECK(s.under_processing == 3.0);
  CHECK(s.remaining == 7.0);

  progress::State t{0.0, 2.0};
  r = progress::step(t, 5.0, 0.0, 3.0);
  CHECK(r.produced == 2.0);
  CHECK(t.under_processing == 2.0);
  CHECK(t.remaining == 0.0);
}

TEST_CASE("consumer step drains min(backlog, power, limit)") {
  progress::State s{3.0, 0.0};
  progress::StepResult r = progress::step(s, 0.0, 5.0, 3.0);
  CHECK(r.consumed == 3.0);
  CHECK(s.under_processing == 0.0);

  progress::State t{3.0, 0.0};
  r = progress::step(t, 0.0, 1.0, kInf);
  CHECK(r.consumed == 1.0);
  CHECK(t.under_processing == 2.0);
}

TEST_CASE("step conserves work: produced stays until consumed") {
  progress::State s{1.5, 8.0};
  double before = s.under_processing + s.remaining;
  progress::StepResult r = progress::step(s, 2.0, 3.0, kInf);
  CHECK(s.under_processing + s.remaining == doctest::Approx(before - r.consumed).epsilon(1e-12));
  CHECK(r.produced == 2.0);
  CHECK(r.consumed == 3.0); // backlog 1.5 + fresh 2.0, drain capped at 3
}

TEST_CASE("advance: backlog builds under slow drain then empties") {
  // produce 2/tick for 5 ticks, drain 1/tick throughout: done after 10 ticks.
  progress::State s{0.0, 10.0};
  progress::AdvanceResult r = progress::advance(s, 2.0, 1.0, 100, 1e-12);
  CHECK(r.completed);
  CHECK(r.ticks == 10);
  CHECK(r.produced == doctest::Approx(10.0));
  CHECK(r.consumed == doctest::Approx(10.0));
  CHECK(progress::ticks_to_completion({0.0, 10.0}, 2.0, 1.0, 1e-12) == 10);
}

TEST_CASE("advance: over-provisioned drain eats backlog then tracks production") {
  progress::State s{6.0, 4.0};
  progress::AdvanceResult r = progress::advance(s, 1.0, 2.0, 100, 1e-12);
  CHECK(r.completed);
  CHECK(r.ticks == 5);
  CHECK(r.produced == doctest::Approx(4.0));
  CHECK(r.consumed == doctest::Approx(10.0));
}

TEST_CASE("advance: zero production stalls once the backlog is gone") {
  progress::State s{3.0, 5.0};
  progress::AdvanceResult r = progress::advance(s, 0.0, 2.0, 100, 1e-12);
  CHECK(r.stalled);
  CHECK(!r.completed);
  CHECK(r.ticks == 2);
  CHECK(r.consumed == doctest::Approx(3.0));
  CHECK(s.remaining == 5.0);
  CHECK(progress::ticks_to_completion({3.0, 5.0}, 0.0, 2.0, 1e-12) == kNoTick);
}

TEST_CASE("advance: zero drain stalls with the backlog intact") {
  progress::State s{0.0, 4.0};
  progress::AdvanceResult r = progress::advance(s, 2.0, 0.0, 100, 1e-12);
  CHECK(r.stalled);
  CHECK(r.ticks == 2);
  CHECK(s.under_processing == doctest::Approx(4.0));
  CHECK(s.remaining == 0.0);
}

TEST_CASE("advance: already-empty state completes in zero ticks") {
  progress::State s{0.0, 0.0};
  progress::AdvanceResult r = progress::advance(s, 1.0, 1.0, 100, 1e-12);
  CHECK(r.completed);
  CHECK(r.ticks == 0);
}

TEST_CASE("advance: completion epsilon swallows the residue") {
  progress::State s{0.0, 10.0 + 5e-10};
  progress::AdvanceResult r = progress::advance(s, 1.0, 1.0, 100, 1e-9);
  CHECK(r.completed);
  CHECK(r.ticks == 10); // the 5e-10 tail is below eps, no 11th tick
  CHECK(s.remaining == 0.0);
  CHECK(s.under_processing == 0.0);
}

TEST_CASE("advance stops after max_ticks mid-flight") {
  progress::State s{0.0, 100.0};
  progress::AdvanceResult r = progress::advance(s, 1.0, 1.0, 30, 1e-12);
  CHECK(!r.completed);
  CHECK(!r.stalled);
  CHECK(r.ticks == 30);
  CHECK(s.remaining == doctest::Approx(70.0));
}

TEST_CASE("advance matches the per-tick reference loop on random cases") {
  // Dyadic values keep both computations exact, so the comparison is bitwise.
  std::mt19937_64 rng(42);
  auto dyadic = [&](double lo, double hi, double denom) {
    auto k = static_cast<long long>(lo * denom) +
             static_cast<long long>(rng() % static_cast<unsigned long long>((hi - lo) * denom));
    return static_cast<double>(k) / denom;
  };
  for (int round = 0; round < 400; ++round) {
    progress::State init{dyadic(0.0, 20.0, 16.0), dyadic(0.0, 20.0, 16.0)};
    double prod = (rng() % 5 == 0) ? 0.0 : dyadic(0.125, 5.0, 8.0);
    double cons = (rng() % 5 == 0) ? 0.0 : dyadic(0.125, 5.0, 8.0);
    Tick max_ticks = rng() % 400;
    double eps = 1e-12;

    progress::State fast = init;
    progress::State slow = init;
    progress::AdvanceResult a = progress::advance(fast, prod, cons, max_ticks, eps);
    progress::AdvanceResult b = reference_advance(slow, prod, cons, max_ticks, eps);

    CAPTURE(round);
    CHECK(a.ticks == b.ticks);
    CHECK(a.completed == b.completed);
    CHECK(a.stalled == b.stalled);
    CHECK(a.produced == b.produced);
    CHECK(a.consumed == b.consumed);
    CHECK(fast.under_processing == slow.under_processing);
    CHECK(fast.remaining == slow.remaining);
  }
}

TEST_CASE("ticks_to_completion is the exact completion boundary") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 200; ++round) {
    progress::State init{static_cast<double>(rng() % 160) / 8.0,
                         static_cast<double>(rng() % 160) / 8.0};
    double prod = static_cast<double>(1 + rng() % 40) / 8.0;
    double cons = static_cast<double>(1 + rng() % 40) / 8.0;
    double eps = 1e-12;
    Tick n = progress::ticks_to_completion(init, prod, cons, eps);
    REQUIRE(n != kNoTick);
    CAPTURE(round);
    progress::State s = init;
    CHECK(progress::advance(s, prod, cons, n, eps).completed);
    if (n > 0) {
      progress::State t = init;
      CHECK(!progress::advance(t, prod, cons, n - 1, eps).completed);
    }
  }
}
