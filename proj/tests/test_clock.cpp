#include <doctest.h>

#include <random>
#include <vector>

#include "iaasim/clock.hpp"
#include "iaasim/errors.hpp"

using namespace iaasim;

TEST_CASE("tick/second conversions") {
  SimClock clock(1e-3);
  CHECK(clock.seconds(5) == doctest::Approx(0.005));
  CHECK(clock.ticks(0.005) == 5);
  CHECK(clock.ticks(0.0105) == 11); // rounds up to cover the span
  CHECK(clock.ticks(0.0) == 0);
  CHECK(clock.ticks(-3.0) == 0);
  CHECK_THROWS_AS(SimClock(0.0), ValidationError);
}

TEST_CASE("recurring subscription fires every frequency ticks") {
  SimClock clock;
  std::vector<Tick> fired;
  clock.subscribe(5, [&](Tick t) { fired.push_back(t); });
  clock.simulate_until(16);
  CHECK(fired == std::vector<Tick>{5, 10, 15});
}

TEST_CASE("two frequencies meet at common multiples") {
  SimClock clock;
  std::vector<Tick> both;
  Tick last_two = kNoTick;
  clock.subscribe(2, [&](Tick t) { last_two = t; });
  clock.subscribe(3, [&](Tick t) {
    if (last_two == t)
      both.push_back(t);
  });
  clock.simulate_until(13);
  CHECK(both == std::vector<Tick>{6, 12});
}

TEST_CASE("handlers due at one tick run in subscription order") {
  SimClock clock;
  std::vector<int> order;
  clock.subscribe(4, [&](Tick) { order.push_back(1); });
  clock.subscribe(2, [&](Tick) { order.push_back(2); });
  clock.subscribe(4, [&](Tick) { order.push_back(3); });
  clock.simulate_until(5);
  // tick 2: only the second; tick 4: all three, creation order.
  CHECK(order == std::vector<int>{2, 1, 2, 3});
}

TEST_CASE("self-unsubscribe stops future fires") {
  SimClock clock;
  int fires = 0;
  SubscriptionId id = clock.subscribe(10, [&](Tick) {
    if (++fires == 3)
      clock.unsubscribe(id);
  });
  clock.simulate_until(200);
  CHECK(fires == 3);
  CHECK(!clock.active(id));
  CHECK(!clock.unsubscribe(id)); // double unsubscribe reports false
}

TEST_CASE("rearm moves the next fire to now plus the new frequency") {
  SimClock clock;
  std::vector<Tick> fired;
  SubscriptionId id = clock.subscribe(5, [&](Tick t) {
    fired.push_back(t);
    if (fired.size() == 1)
      clock.rearm(id, 7); // from inside the handler: next fire at 5 + 7
  });
  clock.simulate_until(20);
  CHECK(fired == std::vector<Tick>{5, 12, 19});
}

TEST_CASE("subscription created inside a handler first fires a full period later") {
  SimClock clock;
  std::vector<Tick> inner;
  clock.subscribe(3, [&](Tick t) {
    if (t == 3)
      clock.subscribe(4, [&](Tick u) { inner.push_back(u); });
  });
  clock.simulate_until(12);
  CHECK(inner == std::vector<Tick>{7, 11});
}

TEST_CASE("deferred events are one-shot") {
  SimClock clock;
  int hits = 0;
  clock.defer(4, [&] { ++hits; });
  CHECK_THROWS_AS(clock.defer(0, [] {}), ValidationError);
  clock.simulate_until_last_event();
  CHECK(hits == 1);
  CHECK(clock.now() == 5); // one past the final fire
  CHECK(clock.pending_subscriptions() == 0);
}

TEST_CASE("cancel stops a pending deferred event") {
  SimClock clock;
  int hits = 0;
  DeferredEvent ev = clock.defer(4, [&] { ++hits; });
  CHECK(clock.cancel(ev));
  CHECK(!clock.cancel(ev));
  clock.simulate_until(10);
  CHECK(hits == 0);
}

TEST_CASE("jump_time skips quiet spans but never events") {
  SimClock clock;
  clock.defer(10, [] {});
  clock.jump_time(10); // lands exactly on the due tick
  CHECK(clock.now() == 10);
  clock.fire_tick();
  clock.jump_time(1000); // nothing pending anywhere
  CHECK(clock.now() == 1011);

  clock.defer(5, [] {});
  CHECK_THROWS_AS(clock.jump_time(6), ValidationError);
  CHECK(clock.now() == 1011); // failed jump leaves time alone
}

TEST_CASE("simulate_until excludes the target tick") {
  SimClock clock;
  int hits = 0;
  clock.defer(5, [&] { ++hits; });
  clock.simulate_until(5);
  CHECK(hits == 0);
  CHECK(clock.now() == 5);
  clock.simulate_until(6);
  CHECK(hits == 1);
}

TEST_CASE("simulate_until can drop due events instead of firing them") {
  SimClock clock;
  int one_shot = 0;
  std::vector<Tick> recurring;
  clock.defer(3, [&] { ++one_shot; });
  SubscriptionId id = clock.subscribe(4, [&](Tick t) { recurring.push_back(t); });
  clock.simulate_until(10, true);
  CHECK(one_shot == 0); // discarded
  CHECK(recurring.empty());
  CHECK(clock.active(id)); // recurring subscriptions survive, silently advanced
  CHECK(clock.next_fire(id) == 12);
  clock.simulate_until(13);
  CHECK(recurring == std::vector<Tick>{12});
}

TEST_CASE("a throwing handler aborts the run, not silently continuing the tick") {
  SimClock clock;
  int later = 0;
  clock.subscribe(2, [&](Tick) { throw StateError("resource gone"); });
  clock.subscribe(2, [&](Tick) { ++later; });
  clock.simulate_until(2); // both subscriptions due at tick 2
  CHECK_THROWS_AS(clock.fire_tick(), StateError);
  CHECK(clock.now() == 2); // time did not advance past the failed tick
  CHECK(later == 0);       // handlers behind the thrower never ran
}

TEST_CASE("fire count over n ticks is floor(n / frequency)") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 40; ++round) {
    Tick f = 1 + rng() % 13;
    Tick n = rng() % 200;
    SimClock clock;
    std::size_t fires = 0;
    clock.subscribe(f, [&](Tick) { ++fires; });
    clock.simulate_until(n + 1);
    CHECK(fires == n / f);
  }
}

TEST_CASE("identical programs replay identically") {
  auto run = [] {
    SimClock clock;
    std::vector<std::pair<Tick, int>> log;
    clock.subscribe(3, [&](Tick t) { log.emplace_back(t, 1); });
    clock.subscribe(5, [&](Tick t) {
      log.emplace_back(t, 2);
      if (t == 10)
        clock.defer(4, [&, t] { log.emplace_back(t + 4, 3); });
    });
    clock.simulate_until(40);
    return log;
  };
  CHECK(run() == run());
}

TEST_CASE("earliest_event tracks the queue head") {
  SimClock clock;
  CHECK(clock.earliest_event() == kNoTick);
  clock.defer(9, [] {});
  SubscriptionId id = clock.subscribe(4, [](Tick) {});
  CHECK(clock.earliest_event() == 4);
  clock.unsubscribe(id);
  CHECK(clock.earliest_event() == 9);
}

TEST_CASE("simulate_until_last_event jumps between sparse events") {
  SimClock clock;
  std::vector<Tick> fired;
  clock.defer(1000000, [&] {
    fired.push_back(clock.now());
    clock.defer(2500000, [&] { fired.push_back(clock.now()); });
  });
  Tick end = clock.simulate_until_last_event();
  CHECK(fired == std::vector<Tick>{1000000, 3500000});
  CHECK(end == clock.now());
  CHECK(clock.now() == 3500001);
}
