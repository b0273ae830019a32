#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "iaasim/errors.hpp"
#include "iaasim/sharing.hpp"

using namespace iaasim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/** Pure-data water-filling oracle, written against the fairness definition
 *  rather than the kernel: raise every open rate uniformly, freeze a rate when
 *  it reaches its own cap or an endpoint runs dry.  Endpoint indices address
 *  the caps vector; nothing here touches kernel types. */
struct OracleEdge {
  std::size_t provider = 0;
  std::size_t consumer = 0;
  double limit = kInf;
};

std::vector<double> water_fill(const std::vector<OracleEdge>& edges, std::vector<double> caps) {
  const std::vector<double> original = caps;
  std::vector<double> rate(edges.size(), 0.0);
  std::vector<char> open(edges.size(), 1);
  std::size_t left = edges.size();
  auto dry = [&](std::size_t s) { return caps[s] <= 1e-9 * std::max(1.0, original[s]); };
  while (left > 0) {
    std::vector<std::size_t> load(caps.size(), 0);
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (open[i]) {
        ++load[edges[i].provider];
        ++load[edges[i].consumer];
      }
    double inc = kInf;
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (open[i])
        inc = std::min(inc, edges[i].limit - rate[i]);
    for (std::size_t s = 0; s < caps.size(); ++s)
      if (load[s] > 0)
        inc = std::min(inc, caps[s] / static_cast<double>(load[s]));
    REQUIRE(std::isfinite(inc)); // test graphs always have finite caps
    inc = std::max(inc, 0.0);
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (open[i]) {
        rate[i] += inc;
        caps[edges[i].provider] -= inc;
        caps[edges[i].consumer] -= inc;
      }
    std::size_t closed = 0;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (!open[i])
        continue;
      bool capped = std::isfinite(edges[i].limit) &&
                    rate[i] >= edges[i].limit - 1e-9 * std::max(1.0, edges[i].limit);
      if (capped || dry(edges[i].provider) || dry(edges[i].consumer)) {
        open[i] = 0;
        ++closed;
      }
    }
    REQUIRE(closed > 0); // each round must bind something or the caps are wrong
    left -= closed;
  }
  return rate;
}

struct Rig {
  SimClock clock;
  SharingKernel kernel{clock};
  std::vector<std::unique_ptr<ResourceSpreader>> spreaders;

  ResourceSpreader& provider(double cap, std::string name = {}) {
    spreaders.push_back(std::make_unique<ResourceSpreader>(kernel, SpreaderRole::provider, cap,
                                                           std::move(name)));
    return *spreaders.back();
  }
  ResourceSpreader& consumer(double cap, std::string name = {}) {
    spreaders.push_back(std::make_unique<ResourceSpreader>(kernel, SpreaderRole::consumer, cap,
                                                           std::move(name)));
    return *spreaders.back();
  }
  ConsumptionPtr link(ResourceSpreader& p, ResourceSpreader& c, double total, double limit = kInf) {
    ConsumptionPtr r = kernel.create_consumption(total, limit);
    kernel.register_consumption(r, p, c);
    return r;
  }
};

} // namespace

TEST_CASE("ample consumers split a provider evenly") {
  Rig rig;
  ResourceSpreader& p = rig.provider(100.0);
  ResourceSpreader& c1 = rig.consumer(1000.0);
  ResourceSpreader& c2 = rig.consumer(1000.0);
  ConsumptionPtr a = rig.link(p, c1, 1e6);
  ConsumptionPtr b = rig.link(p, c2, 1e6);
  CHECK(a->provider_share() == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(b->provider_share() == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(a->consumer_share() == a->provider_share());
}

TEST_CASE("per-consumption limits free headroom for the unlimited peer") {
  Rig rig;
  ResourceSpreader& p = rig.provider(100.0);
  ResourceSpreader& c1 = rig.consumer(1000.0);
  ResourceSpreader& c2 = rig.consumer(1000.0);
  ConsumptionPtr a = rig.link(p, c1, 1e6, 20.0);
  ConsumptionPtr b = rig.link(p, c2, 1e6, 200.0);
  CHECK(a->provider_share() == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(b->provider_share() == doctest::Approx(80.0).epsilon(1e-9));
}

TEST_CASE("a consumer bottleneck redistributes to other consumptions") {
  Rig rig;
  ResourceSpreader& p = rig.provider(100.0);
  ResourceSpreader& slow = rig.consumer(10.0);
  ResourceSpreader& fast = rig.consumer(1000.0);
  ConsumptionPtr a = rig.link(p, slow, 1000.0);
  ConsumptionPtr b = rig.link(p, fast, 1000.0);
  CHECK(a->consumer_share() == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(b->consumer_share() == doctest::Approx(90.0).epsilon(1e-9));

  // Max-min keeps both sides of a consumption equal, so no backlog builds.
  rig.clock.simulate_until(6);
  rig.kernel.notify_capacity_changed(p); // settle to now: 6 ticks at 10/tick
  CHECK(a->under_processing() == doctest::Approx(0.0));
  CHECK(a->produced_total() == doctest::Approx(60.0));
  CHECK(a->consumed_total() == doctest::Approx(60.0));
}

TEST_CASE("assigned shares match the water-filling oracle on random graphs") {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 12; ++round) {
    Rig rig;
    std::size_t n_prov = 2 + rng() % 40;
    std::size_t n_cons = 2 + rng() % 40; // up to ~100 spreaders total, plus nulls
    std::vector<ResourceSpreader*> prov, cons;
    std::vector<double> caps;
    for (std::size_t i = 0; i < n_prov; ++i) {
      double cap = static_cast<double>(8 + rng() % 800) / 8.0;
      prov.push_back(&rig.provider(cap));
      caps.push_back(cap);
    }
    for (std::size_t i = 0; i < n_cons; ++i) {
      double cap = static_cast<double>(8 + rng() % 800) / 8.0;
      cons.push_back(&rig.consumer(cap));
      caps.push_back(cap);
    }
    std::size_t n_edges = 1 + rng() % (2 * (n_prov + n_cons));
    std::vector<OracleEdge> edges;
    std::vector<ConsumptionPtr> live;
    for (std::size_t e = 0; e < n_edges; ++e) {
      std::size_t pi = rng() % n_prov;
      std::size_t ci = rng() % n_cons;
      double limit = (rng() % 2 == 0) ? kInf : static_cast<double>(2 + rng() % 240) / 8.0;
      edges.push_back({pi, n_prov + ci, limit});
      live.push_back(rig.link(*prov[pi], *cons[ci], 1e9, limit));
    }
    rig.kernel.validate_partitions();

    std::vector<double> expect = water_fill(edges, caps);
    for (std::size_t i = 0; i < live.size(); ++i) {
      CAPTURE(round);
      CAPTURE(i);
      REQUIRE(live[i]->share_assigned());
      CHECK(live[i]->provider_share() ==
            doctest::Approx(expect[i]).epsilon(1e-9).scale(std::max(1.0, expect[i])));
      CHECK(live[i]->consumer_share() == live[i]->provider_share());
    }
  }
}

TEST_CASE("incremental influence groups equal from-scratch recomputation under churn") {
  std::mt19937_64 rng(7);
  Rig rig;
  std::vector<ResourceSpreader*> prov, cons;
  for (int i = 0; i < 18; ++i)
    prov.push_back(&rig.provider(64.0));
  for (int i = 0; i < 18; ++i)
    cons.push_back(&rig.consumer(64.0));
  std::vector<ConsumptionPtr> live;

  for (int step = 0; step < 400; ++step) {
    unsigned op = rng() % 4;
    if (live.empty() || op != 0) {
      live.push_back(rig.link(*prov[rng() % prov.size()], *cons[rng() % cons.size()], 1e9));
    } else {
      std::size_t victim = rng() % live.size();
      if (rng() % 2 == 0)
        rig.kernel.cancel(live[victim]);
      else
        rig.kernel.deregister(live[victim]);
      live.erase(live.begin() + victim);
    }
    rig.kernel.validate_partitions();

    // Belt and braces on top of validate_partitions: spot-check one spreader's
    // maintained component against the from-scratch definition.
    ResourceSpreader* probe = prov[rng() % prov.size()];
    std::vector<ResourceSpreader*> direct = rig.kernel.direct_group(*probe);
    if (probe->group() == nullptr) {
      CHECK(direct.size() <= 1);
    } else {
      std::vector<ResourceSpreader*> members = probe->group()->members();
      std::sort(members.begin(), members.end(),
                [](const ResourceSpreader* a, const ResourceSpreader* b) {
        return a->id() < b->id();
      });
      CHECK(direct == members);
    }
  }
}

TEST_CASE("work is conserved through partial progress") {
  std::mt19937_64 rng(31);
  Rig rig;
  std::vector<ResourceSpreader*> prov, cons;
  for (int i = 0; i < 6; ++i)
    prov.push_back(&rig.provider(static_cast<double>(8 + rng() % 256) / 8.0));
  for (int i = 0; i < 6; ++i)
    cons.push_back(&rig.consumer(static_cast<double>(8 + rng() % 256) / 8.0));
  std::vector<ConsumptionPtr> live;
  for (int e = 0; e < 14; ++e)
    live.push_back(rig.link(*prov[rng() % prov.size()], *cons[rng() % cons.size()],
                            static_cast<double>(800 + rng() % 8000) / 8.0));

  for (Tick t : {3u, 11u, 27u}) {
    rig.clock.simulate_until(t);
    for (ResourceSpreader* p : prov)
      rig.kernel.notify_capacity_changed(*p); // fold every group to now
    for (const ConsumptionPtr& c : live) {
      CHECK(c->initial_total() ==
            doctest::Approx(c->produced_total() + c->remaining()).epsilon(1e-9).scale(1.0));
      CHECK(c->under_processing() ==
            doctest::Approx(c->produced_total() - c->consumed_total()).epsilon(1e-9).scale(1.0));
      CHECK(c->under_processing() >= -1e-9);
      CHECK(c->remaining() >= -1e-9);
    }
  }
}

TEST_CASE("spreader totals add up across their consumptions") {
  Rig rig;
  ResourceSpreader& p = rig.provider(32.0);
  ResourceSpreader& c1 = rig.consumer(8.0);
  ResourceSpreader& c2 = rig.consumer(64.0);
  ConsumptionPtr a = rig.link(p, c1, 1e6);
  ConsumptionPtr b = rig.link(p, c2, 1e6);
  rig.clock.simulate_until(10);
  rig.kernel.notify_capacity_changed(p);
  CHECK(p.processed_total() == doctest::Approx(a->produced_total() + b->produced_total()));
  CHECK(c1.processed_total() == doctest::Approx(a->consumed_total()));
  CHECK(c2.processed_total() == doctest::Approx(b->consumed_total()));
  // 10 ticks at full effective capacity.
  CHECK(p.capacity_integral() == doctest::Approx(320.0));
}

TEST_CASE("completions due at one tick fire in consumption id order") {
  Rig rig;
  ResourceSpreader& p = rig.provider(10.0);
  ResourceSpreader& c1 = rig.consumer(100.0);
  ResourceSpreader& c2 = rig.consumer(100.0);
  std::vector<std::uint64_t> order;
  ConsumptionPtr a = rig.link(p, c1, 50.0);
  ConsumptionPtr b = rig.link(p, c2, 50.0);
  a->on_finish([&](ResourceConsumption& c, ConsumptionOutcome) { order.push_back(c.id()); });
  b->on_finish([&](ResourceConsumption& c, ConsumptionOutcome) { order.push_back(c.id()); });
  rig.clock.simulate_until_last_event();
  REQUIRE(order.size() == 2);
  CHECK(order[0] == a->id());
  CHECK(order[1] == b->id());
  CHECK(order[0] < order[1]);
  CHECK(rig.clock.now() == 11); // both done after tick 10 fired
  CHECK(a->completed());
  CHECK(b->completed());
}

TEST_CASE("completion on the same tick beats a cancel request") {
  Rig rig;
  ResourceSpreader& p = rig.provider(5.0);
  ResourceSpreader& c = rig.consumer(5.0);
  ConsumptionPtr a = rig.link(p, c, 50.0); // completes at tick 10
  bool completed = false;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome o) {
    completed = o == ConsumptionOutcome::completed;
  });
  rig.clock.defer(10, [&] { rig.kernel.cancel(a); });
  rig.clock.simulate_until_last_event();
  CHECK(completed);
  CHECK(a->completed());
  CHECK(!a->cancelled());
}

TEST_CASE("cancel mid-flight keeps the progress made so far") {
  Rig rig;
  ResourceSpreader& p = rig.provider(5.0);
  ResourceSpreader& c = rig.consumer(5.0);
  ConsumptionPtr a = rig.link(p, c, 50.0);
  ConsumptionOutcome seen = ConsumptionOutcome::completed;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome o) { seen = o; });
  rig.clock.defer(4, [&] { rig.kernel.cancel(a); });
  rig.clock.simulate_until_last_event();
  CHECK(seen == ConsumptionOutcome::cancelled);
  CHECK(a->cancelled());
  CHECK(a->produced_total() == doctest::Approx(20.0));
  CHECK(a->remaining() == doctest::Approx(30.0));
}

TEST_CASE("deregister pauses and re-register resumes with preserved state") {
  Rig rig;
  ResourceSpreader& p = rig.provider(5.0);
  ResourceSpreader& c = rig.consumer(5.0);
  ConsumptionPtr a = rig.link(p, c, 50.0);
  bool finished = false;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { finished = true; });

  rig.clock.defer(4, [&] { rig.kernel.deregister(a); });
  rig.clock.simulate_until(30);
  CHECK(!finished); // paused, not cancelled
  CHECK(!a->registered());
  CHECK(a->remaining() == doctest::Approx(30.0));

  rig.kernel.register_consumption(a, p, c);
  rig.clock.simulate_until_last_event();
  CHECK(finished);
  CHECK(a->completed());
  CHECK(rig.clock.now() == 37); // 30 + ceil(30 units / 5 per tick) + 1
}

TEST_CASE("migrate retargets in flight without losing state") {
  Rig rig;
  ResourceSpreader& p1 = rig.provider(5.0);
  ResourceSpreader& p2 = rig.provider(10.0);
  ResourceSpreader& c = rig.consumer(100.0);
  ConsumptionPtr a = rig.link(p1, c, 100.0);
  rig.clock.defer(4, [&] { rig.kernel.migrate(a, p2, c); });
  Tick done = 0;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { done = rig.clock.now(); });
  rig.clock.simulate_until_last_event();
  // 4 ticks at 5, then 80 units left at 10 per tick.
  CHECK(done == 12);
  CHECK(a->provider() == &p2);
  CHECK(a->produced_total() == doctest::Approx(100.0));
  rig.kernel.validate_partitions();
}

TEST_CASE("more capacity never delays completion") {
  std::mt19937_64 rng(55);
  for (int round = 0; round < 20; ++round) {
    double total = static_cast<double>(80 + rng() % 4000) / 8.0;
    double cap = static_cast<double>(8 + rng() % 160) / 8.0;
    double boost = cap + static_cast<double>(1 + rng() % 80) / 8.0;
    auto completion_tick = [&](double c) {
      Rig rig;
      ResourceSpreader& p = rig.provider(c);
      ResourceSpreader& k = rig.consumer(1e9);
      ConsumptionPtr a = rig.link(p, k, total);
      Tick done = kNoTick;
      a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { done = rig.clock.now(); });
      rig.clock.simulate_until_last_event();
      return done;
    };
    CHECK(completion_tick(boost) <= completion_tick(cap));
  }
}

TEST_CASE("processing factor zero freezes a group until restored") {
  Rig rig;
  ResourceSpreader& p = rig.provider(10.0);
  ResourceSpreader& c = rig.consumer(10.0);
  ConsumptionPtr a = rig.link(p, c, 100.0);
  Tick done = kNoTick;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { done = rig.clock.now(); });
  rig.clock.defer(3, [&] { p.set_processing_factor(0.0); });
  rig.clock.defer(7, [&] { p.set_processing_factor(1.0); });
  rig.clock.simulate_until_last_event();
  // 3 ticks of work, 4 frozen, 7 more ticks of work.
  CHECK(done == 14);
  CHECK(p.effective_capacity() == 10.0);
  CHECK(a->produced_total() == doctest::Approx(100.0));
}

TEST_CASE("per-tick limit changes apply from the next processing point") {
  Rig rig;
  ResourceSpreader& p = rig.provider(10.0);
  ResourceSpreader& c = rig.consumer(10.0);
  ConsumptionPtr a = rig.link(p, c, 100.0);
  Tick done = kNoTick;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { done = rig.clock.now(); });
  rig.clock.defer(5, [&] { a->set_per_tick_limit(2.0); });
  rig.clock.simulate_until_last_event();
  // 5 ticks at 10/tick, then 50 units at 2/tick.
  CHECK(done == 30);
}

TEST_CASE("destroying a spreader silently drops what ran through it") {
  // Destructors must not run user callbacks: the teardown contract is fold
  // nothing, fire nothing, mark the consumption cancelled, keep the partition
  // consistent.  Orderly layers cancel their consumptions before this point.
  Rig rig;
  ResourceSpreader& p = rig.provider(10.0);
  auto doomed = std::make_unique<ResourceSpreader>(rig.kernel, SpreaderRole::consumer, 10.0);
  ConsumptionPtr a = rig.kernel.create_consumption(1000.0, kInf);
  rig.kernel.register_consumption(a, p, *doomed);
  bool fired = false;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { fired = true; });
  rig.clock.simulate_until(4);
  rig.kernel.notify_capacity_changed(p); // fold 4 ticks of progress first
  doomed.reset();
  CHECK(!fired);
  CHECK(a->cancelled());
  CHECK(!a->registered());
  CHECK(a->produced_total() == doctest::Approx(40.0));
  rig.kernel.validate_partitions();
  rig.kernel.notify_capacity_changed(p); // next kernel entry runs maintenance
  CHECK(p.group() == nullptr); // no live consumptions: no group membership
}

TEST_CASE("equal split leaks backlog where max-min would not") {
  SimClock clock;
  SharingKernel kernel(clock, equal_split());
  ResourceSpreader p(kernel, SpreaderRole::provider, 100.0);
  ResourceSpreader slow(kernel, SpreaderRole::consumer, 10.0);
  ResourceSpreader fast(kernel, SpreaderRole::consumer, 1000.0);
  ConsumptionPtr a = kernel.create_consumption(1000.0, kInf);
  ConsumptionPtr b = kernel.create_consumption(1000.0, kInf);
  kernel.register_consumption(a, p, slow);
  kernel.register_consumption(b, p, fast);
  CHECK(a->provider_share() == doctest::Approx(50.0)); // provider splits blindly
  CHECK(a->consumer_share() == doctest::Approx(10.0));
  CHECK(b->provider_share() == doctest::Approx(50.0));

  Tick a_done = 0, b_done = 0;
  a->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { a_done = clock.now(); });
  b->on_finish([&](ResourceConsumption&, ConsumptionOutcome) { b_done = clock.now(); });

  clock.simulate_until(5);
  kernel.notify_capacity_changed(p);
  CHECK(a->under_processing() == doctest::Approx(200.0)); // 50 in, 10 out, 5 ticks

  clock.simulate_until_last_event();
  CHECK(b_done == 20);  // matched rates: 1000 at 50/tick
  CHECK(a_done == 100); // drained at 10/tick regardless of production
}

TEST_CASE("consumption validation") {
  Rig rig;
  CHECK_THROWS_AS(rig.kernel.create_consumption(-1.0, kInf), ValidationError);
  CHECK_THROWS_AS(rig.kernel.create_consumption(10.0, 0.0), ValidationError);
  ResourceSpreader& p = rig.provider(10.0);
  ResourceSpreader& c = rig.consumer(10.0);
  ConsumptionPtr a = rig.kernel.create_consumption(10.0, kInf);
  rig.kernel.register_consumption(a, p, c);
  // Double registration is a state error.
  CHECK_THROWS_AS(rig.kernel.register_consumption(a, p, c), StateError);
  // Roles must match the slots.
  ConsumptionPtr b = rig.kernel.create_consumption(10.0, kInf);
  CHECK_THROWS_AS(rig.kernel.register_consumption(b, c, p), ValidationError);
}
