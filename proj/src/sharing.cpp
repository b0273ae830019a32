#include "iaasim/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "iaasim/errors.hpp"

namespace iaasim {

namespace {

constexpr double kCompletionTolerance = 1e-9; // relative to the initial total

void erase_consumption(std::vector<ConsumptionPtr>& v, const ResourceConsumption* c) {
  auto it = std::find_if(v.begin(), v.end(), [c](const ConsumptionPtr& p) { return p.get() == c; });
  if (it != v.end())
    v.erase(it);
}

} // namespace

// --- ResourceConsumption ---------------------------------------------------

ResourceConsumption::ResourceConsumption(SharingKernel& kernel, std::uint64_t id, double total,
                                         double limit)
    : kernel_(kernel), id_(id), limit_(limit), initial_total_(total),
      completion_eps_(kCompletionTolerance * total) {
  state_.remaining = total;
}

void ResourceConsumption::set_per_tick_limit(double limit) {
  if (!(limit > 0.0))
    throw ValidationError("per-tick limit must be positive");
  // Fold progress up to now under the old ceiling before mutating it: settling
  // clamps by limit_, so changing it first would rewrite the elapsed interval.
  if (registered_ && provider_ != nullptr)
    kernel_.notify_capacity_changed(*provider_);
  limit_ = limit;
  if (registered_ && provider_ != nullptr)
    kernel_.notify_capacity_changed(*provider_);
}

// --- ResourceSpreader -------------------------------------------------------

ResourceSpreader::ResourceSpreader(SharingKernel& kernel, SpreaderRole role,
                                   double per_tick_capacity, std::string name)
    : kernel_(kernel), id_(kernel.next_spreader_id_++), role_(role), name_(std::move(name)),
      capacity_(per_tick_capacity), integral_folded_at_(kernel.clock().now()) {
  if (capacity_ < 0.0)
    throw ValidationError("spreader capacity cannot be negative");
}

ResourceSpreader::~ResourceSpreader() {
  kernel_.detach_spreader(*this);
}

void ResourceSpreader::fold_capacity_integral() {
  Tick now = kernel_.clock().now();
  integral_ += static_cast<double>(now - integral_folded_at_) * effective_capacity();
  integral_folded_at_ = now;
}

double ResourceSpreader::capacity_integral() const {
  Tick now = kernel_.clock().now();
  return integral_ + static_cast<double>(now - integral_folded_at_) * effective_capacity();
}

void ResourceSpreader::set_per_tick_capacity(double capacity) {
  if (capacity < 0.0)
    throw ValidationError("spreader capacity cannot be negative");
  if (capacity == capacity_)
    return;
  fold_capacity_integral();
  capacity_ = capacity;
  kernel_.notify_capacity_changed(*this);
}

void ResourceSpreader::set_processing_factor(double factor) {
  if (factor < 0.0)
    throw ValidationError("processing factor cannot be negative");
  if (factor == factor_)
    return;
  fold_capacity_integral();
  factor_ = factor;
  kernel_.notify_capacity_changed(*this);
}

// --- Scheduling logic -------------------------------------------------------

namespace {

/** Live consumptions of a group, each exactly once, in id order. */
std::vector<ResourceConsumption*> live_consumptions(const InfluenceGroup& g) {
  std::vector<ResourceConsumption*> out;
  for (const ResourceSpreader* s : g.members()) {
    if (s->role() != SpreaderRole::provider)
      continue;
    for (const ConsumptionPtr& c : s->consumptions())
      out.push_back(c.get());
  }
  std::sort(out.begin(), out.end(),
            [](const ResourceConsumption* a, const ResourceConsumption* b) {
              return a->id() < b->id();
            });
  return out;
}

} // namespace

void MaxMinFairness::assign(const InfluenceGroup& group) const {
  std::vector<ResourceConsumption*> cs = live_consumptions(group);
  if (cs.empty())
    return;

  struct Node {
    double residual;
    int active;
    double tolerance;
  };
  std::unordered_map<const ResourceSpreader*, Node> nodes;
  nodes.reserve(group.members().size());
  for (const ResourceSpreader* s : group.members()) {
    double cap = s->effective_capacity();
    nodes.emplace(s, Node{cap, 0, 1e-9 * std::max(1.0, cap)});
  }

  std::vector<double> rate(cs.size(), 0.0);
  std::vector<bool> frozen(cs.size(), false);
  for (const ResourceConsumption* c : cs) {
    ++nodes[c->provider()].active;
    ++nodes[c->consumer()].active;
  }

  std::size_t left = cs.size();
  while (left > 0) {
    // Uniform raise until the first limit or spreader saturates.
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (!frozen[i])
        delta = std::min(delta, cs[i]->per_tick_limit() - rate[i]);
    for (const auto& [s, node] : nodes)
      if (node.active > 0)
        delta = std::min(delta, node.residual / node.active);
    if (delta < 0.0)
      delta = 0.0;

    if (delta > 0.0) {
      for (std::size_t i = 0; i < cs.size(); ++i) {
        if (frozen[i])
          continue;
        rate[i] += delta;
        nodes[cs[i]->provider()].residual -= delta;
        nodes[cs[i]->consumer()].residual -= delta;
      }
    }

    std::size_t frozen_now = 0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (frozen[i])
        continue;
      Node& p = nodes[cs[i]->provider()];
      Node& n = nodes[cs[i]->consumer()];
      double limit = cs[i]->per_tick_limit();
      bool at_limit = std::isfinite(limit) && rate[i] >= limit - 1e-12 * std::max(1.0, limit);
      if (at_limit || p.residual <= p.tolerance || n.residual <= n.tolerance) {
        frozen[i] = true;
        --p.active;
        --n.active;
        ++frozen_now;
      }
    }
    if (frozen_now == 0) {
      // Numeric guard: nothing hit its bound within tolerance; freeze everything
      // at the current level rather than loop forever.
      for (std::size_t i = 0; i < cs.size(); ++i) {
        if (!frozen[i]) {
          frozen[i] = true;
          --nodes[cs[i]->provider()].active;
          --nodes[cs[i]->consumer()].active;
        }
      }
      left = 0;
      break;
    }
    left -= frozen_now;
  }

  for (std::size_t i = 0; i < cs.size(); ++i) {
    cs[i]->provider_share_ = rate[i];
    cs[i]->consumer_share_ = rate[i];
    cs[i]->share_assigned_ = true;
  }
}

void EqualSplit::assign(const InfluenceGroup& group) const {
  for (const ResourceSpreader* s : group.members()) {
    std::size_t n = s->consumptions().size();
    if (n == 0)
      continue;
    double share = s->effective_capacity() / static_cast<double>(n);
    for (const ConsumptionPtr& c : s->consumptions()) {
      double capped = std::min(share, c->per_tick_limit());
      if (s->role() == SpreaderRole::provider)
        c->provider_share_ = capped;
      else
        c->consumer_share_ = capped;
      c->share_assigned_ = true;
    }
  }
}

const SchedulingLogic& max_min_fairness() {
  static const MaxMinFairness logic;
  return logic;
}

const SchedulingLogic& equal_split() {
  static const EqualSplit logic;
  return logic;
}

// --- SharingKernel ----------------------------------------------------------

SharingKernel::SharingKernel(SimClock& clock, const SchedulingLogic& logic)
    : clock_(clock), logic_(&logic) {
  null_provider_ = std::make_unique<ResourceSpreader>(*this, SpreaderRole::provider, 0.0,
                                                      "null-provider");
  null_consumer_ = std::make_unique<ResourceSpreader>(*this, SpreaderRole::consumer, 0.0,
                                                      "null-consumer");
}

SharingKernel::~SharingKernel() = default;

ConsumptionPtr SharingKernel::create_consumption(double total, double per_tick_limit) {
  if (total < 0.0 || !std::isfinite(total))
    throw ValidationError("consumption total must be finite and non-negative");
  if (!(per_tick_limit > 0.0))
    throw ValidationError("per-tick limit must be positive");
  return ConsumptionPtr(new ResourceConsumption(*this, next_consumption_id_++, total,
                                                per_tick_limit));
}

void SharingKernel::attach(const ConsumptionPtr& c, ResourceSpreader& provider,
                           ResourceSpreader& consumer) {
  c->provider_ = &provider;
  c->consumer_ = &consumer;
  c->share_assigned_ = false;
  provider.consumptions_.push_back(c);
  consumer.consumptions_.push_back(c);
  touch(provider);
  touch(consumer);
}

void SharingKernel::detach_endpoints(const ConsumptionPtr& c) {
  if (c->provider_) {
    erase_consumption(c->provider_->consumptions_, c.get());
    if (c->provider_->group_)
      c->provider_->group_->lost_any_ = true;
  }
  if (c->consumer_) {
    erase_consumption(c->consumer_->consumptions_, c.get());
    if (c->consumer_->group_)
      c->consumer_->group_->lost_any_ = true;
  }
  c->share_assigned_ = false;
}

void SharingKernel::register_consumption(const ConsumptionPtr& c, ResourceSpreader& provider,
                                         ResourceSpreader& consumer) {
  if (!c)
    throw ValidationError("null consumption");
  if (c->finished_)
    throw StateError("consumption already finished");
  if (c->registered_)
    throw StateError("consumption already registered");
  if (provider.role() != SpreaderRole::provider || consumer.role() != SpreaderRole::consumer)
    throw ValidationError("endpoints must be a provider/consumer pair");
  if (&provider.kernel() != this || &consumer.kernel() != this)
    throw ValidationError("spreaders belong to a different kernel");

  c->registered_ = true;
  attach(c, provider, consumer);
  process();
}

void SharingKernel::cancel(const ConsumptionPtr& c) {
  if (!c)
    throw ValidationError("null consumption");
  if (c->finished_)
    return; // idempotent after completion or a prior cancel
  if (!c->registered_) {
    c->finished_ = true;
    if (c->handler_) {
      auto handler = std::move(c->handler_);
      handler(*c, ConsumptionOutcome::cancelled);
    }
    return;
  }
  if (c->cancel_requested_)
    return;
  c->cancel_requested_ = true;
  InfluenceGroup* g = c->provider_->group_;
  ++g->pending_requests_;
  enqueue(g);
  process();
}

void SharingKernel::deregister(const ConsumptionPtr& c) {
  if (!c)
    throw ValidationError("null consumption");
  if (!c->registered_ || c->finished_)
    throw StateError("only registered consumptions can be deregistered");
  if (c->deregister_requested_)
    return;
  c->deregister_requested_ = true;
  InfluenceGroup* g = c->provider_->group_;
  ++g->pending_requests_;
  enqueue(g);
  process();
}

void SharingKernel::migrate(const ConsumptionPtr& c, ResourceSpreader& provider,
                            ResourceSpreader& consumer) {
  if (!c)
    throw ValidationError("null consumption");
  if (!c->registered_ || c->finished_)
    throw StateError("only registered consumptions can be migrated");
  if (provider.role() != SpreaderRole::provider || consumer.role() != SpreaderRole::consumer)
    throw ValidationError("endpoints must be a provider/consumer pair");
  if (&provider.kernel() != this || &consumer.kernel() != this)
    throw ValidationError("spreaders belong to a different kernel");
  c->migrate_provider_ = &provider;
  c->migrate_consumer_ = &consumer;
  InfluenceGroup* g = c->provider_->group_;
  ++g->pending_requests_;
  enqueue(g);
  process();
}

void SharingKernel::notify_capacity_changed(ResourceSpreader& s) {
  if (!s.group_)
    return;
  enqueue(s.group_);
  process();
}

InfluenceGroup* SharingKernel::create_group() {
  std::unique_ptr<InfluenceGroup> g(new InfluenceGroup(next_group_id_++));
  g->last_settled_ = clock_.now();
  g->registry_index_ = groups_.size();
  InfluenceGroup* raw = g.get();
  groups_.push_back(std::move(g));
  return raw;
}

void SharingKernel::dispose_group(InfluenceGroup* g) {
  if (g->disposed_)
    return;
  g->disposed_ = true;
  if (g->sub_ != 0) {
    clock_.unsubscribe(g->sub_);
    g->sub_ = 0;
  }
  std::size_t idx = g->registry_index_;
  // Swap-pop out of the registry; the unique_ptr parks in the graveyard until
  // the work loop drains (raw pointers may still sit in the dirty queue).
  graveyard_.push_back(std::move(groups_[idx]));
  if (idx + 1 != groups_.size()) {
    groups_[idx] = std::move(groups_.back());
    groups_[idx]->registry_index_ = idx;
  }
  groups_.pop_back();
}

void SharingKernel::enqueue(InfluenceGroup* g) {
  if (!g->queued_ && !g->disposed_) {
    g->queued_ = true;
    dirty_.push_back(g);
  }
}

void SharingKernel::touch(ResourceSpreader& s) {
  if (!s.group_) {
    InfluenceGroup* g = create_group();
    g->members_.push_back(&s);
    s.group_ = g;
  }
  enqueue(s.group_);
}

void SharingKernel::process() {
  if (processing_)
    return;
  processing_ = true;
  while (!dirty_.empty()) {
    InfluenceGroup* g = dirty_.front();
    dirty_.pop_front();
    g->queued_ = false;
    if (g->disposed_)
      continue;
    settle_group(*g);
    if (g->disposed_)
      continue;
    std::vector<InfluenceGroup*> parts;
    maintain_group(g, parts);
    for (InfluenceGroup* part : parts)
      reschedule_group(*part);
  }
  processing_ = false;
  graveyard_.clear();
}

void SharingKernel::settle_group(InfluenceGroup& g, bool force) {
  Tick now = clock_.now();
  Tick dt = now - g.last_settled_;
  g.last_settled_ = now;
  if (dt == 0 && g.pending_requests_ == 0 && !force)
    return;

  // Snapshot first: handlers fired below may mutate the spreader lists.
  std::vector<ConsumptionPtr> live;
  for (ResourceSpreader* s : g.members_) {
    if (s->role() != SpreaderRole::provider)
      continue;
    for (const ConsumptionPtr& c : s->consumptions_)
      live.push_back(c);
  }
  std::sort(live.begin(), live.end(),
            [](const ConsumptionPtr& a, const ConsumptionPtr& b) { return a->id() < b->id(); });

  if (dt > 0) {
    for (const ConsumptionPtr& c : live) {
      if (!c->share_assigned_)
        continue; // registered this very tick; schedule happens before time moves
      double production = std::min(c->provider_share_, c->limit_);
      double drain = std::min(c->consumer_share_, c->limit_);
      progress::AdvanceResult r =
          progress::advance(c->state_, production, drain, dt, c->completion_eps_);
      c->produced_total_ += r.produced;
      c->consumed_total_ += r.consumed;
      c->provider_->processed_ += r.produced;
      c->consumer_->processed_ += r.consumed;
      if (r.completed)
        c->completed_ = true; // finished_ is set in the removal pass below
    }
  }

  // Clear every outstanding request flag for c, keeping the counter balanced;
  // terminal outcomes swallow whatever else was asked of the consumption.
  auto consume_requests = [&g](ResourceConsumption& c) {
    if (c.cancel_requested_) {
      c.cancel_requested_ = false;
      --g.pending_requests_;
    }
    if (c.deregister_requested_) {
      c.deregister_requested_ = false;
      --g.pending_requests_;
    }
    if (c.migrate_provider_ != nullptr) {
      c.migrate_provider_ = nullptr;
      c.migrate_consumer_ = nullptr;
      --g.pending_requests_;
    }
  };

  struct Finished {
    ConsumptionPtr c;
    ConsumptionOutcome outcome;
  };
  std::vector<Finished> finished;
  for (const ConsumptionPtr& c : live) {
    if (c->finished_)
      continue; // a nested settle of the same group already handled it
    if (c->completed_) {
      consume_requests(*c); // completion beats a same-tick cancel
      finished.push_back({c, ConsumptionOutcome::completed});
    } else if (c->cancel_requested_) {
      consume_requests(*c);
      finished.push_back({c, ConsumptionOutcome::cancelled});
    } else if (c->deregister_requested_) {
      consume_requests(*c);
      detach_endpoints(c);
      c->registered_ = false;
    } else if (c->migrate_provider_ != nullptr) {
      ResourceSpreader* np = c->migrate_provider_;
      ResourceSpreader* nc = c->migrate_consumer_;
      consume_requests(*c);
      detach_endpoints(c);
      attach(c, *np, *nc);
    }
  }
  for (const Finished& f : finished) {
    detach_endpoints(f.c);
    f.c->registered_ = false;
    f.c->finished_ = true;
    f.c->completed_ = (f.outcome == ConsumptionOutcome::completed);
  }
  for (const Finished& f : finished) {
    if (f.c->handler_) {
      auto handler = std::move(f.c->handler_);
      handler(*f.c, f.outcome);
    }
  }
}

void SharingKernel::maintain_group(InfluenceGroup* g, std::vector<InfluenceGroup*>& out) {
  Tick now = clock_.now();

  // Extension: absorb every group reachable through current consumptions.
  // Handlers fired while settling an absorbed group can add fresh edges, so
  // scan to a fixpoint.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < g->members_.size(); ++i) {
      ResourceSpreader* s = g->members_[i];
      for (const ConsumptionPtr& c : s->consumptions_) {
        for (ResourceSpreader* e : {c->provider_, c->consumer_}) {
          if (e == nullptr || e->group_ == g)
            continue;
          InfluenceGroup* other = e->group_;
          if (other == nullptr) {
            e->group_ = g;
            g->members_.push_back(e);
            changed = true;
            continue;
          }
          settle_group(*other); // bring to now under its own schedule first
          g->lost_any_ = g->lost_any_ || other->lost_any_;
          g->pending_requests_ += other->pending_requests_;
          for (ResourceSpreader* m : other->members_) {
            m->group_ = g;
            g->members_.push_back(m);
          }
          dispose_group(other);
          changed = true;
        }
      }
    }
  }

  if (!g->lost_any_) {
    out.push_back(g);
    return;
  }
  g->lost_any_ = false;

  // Dissolution: rebuild the partition from scratch over current consumptions,
  // smallest spreader id first so the result is reproducible.
  std::vector<ResourceSpreader*> members = g->members_;
  std::sort(members.begin(), members.end(),
            [](const ResourceSpreader* a, const ResourceSpreader* b) { return a->id() < b->id(); });
  std::unordered_set<ResourceSpreader*> unassigned(members.begin(), members.end());
  std::vector<std::vector<ResourceSpreader*>> closures;
  std::vector<ResourceSpreader*> detached;
  for (ResourceSpreader* rep : members) {
    if (unassigned.find(rep) == unassigned.end())
      continue;
    std::vector<ResourceSpreader*> closure = direct_group(*rep);
    for (ResourceSpreader* m : closure)
      unassigned.erase(m);
    if (closure.size() == 1 && closure.front()->consumptions_.empty())
      detached.push_back(closure.front());
    else
      closures.push_back(std::move(closure));
  }

  if (detached.empty() && closures.size() == 1) {
    out.push_back(g); // membership survived intact
    return;
  }
  for (ResourceSpreader* d : detached)
    d->group_ = nullptr;
  if (closures.size() == 1) {
    g->members_ = std::move(closures.front());
    out.push_back(g);
    return;
  }
  for (std::vector<ResourceSpreader*>& closure : closures) {
    InfluenceGroup* part = create_group();
    part->last_settled_ = now;
    for (ResourceSpreader* m : closure)
      m->group_ = part;
    part->members_ = std::move(closure);
    out.push_back(part);
  }
  dispose_group(g);
}

void SharingKernel::reschedule_group(InfluenceGroup& g) {
  if (g.disposed_)
    return;
  if (g.members_.empty()) {
    dispose_group(&g);
    return;
  }

  std::vector<ResourceConsumption*> live = live_consumptions(g);

  // Zero-work consumptions complete at the first processing point they see.
  bool insta = false;
  for (ResourceConsumption* c : live) {
    if (c->state_.under_processing + c->state_.remaining <= c->completion_eps_) {
      c->completed_ = true;
      insta = true;
    }
  }
  if (insta) {
    settle_group(g, true); // dt == 0 removal pass fires the handlers
    enqueue(&g);           // membership shrank; revisit for dissolution + reschedule
    return;
  }

  if (live.empty()) {
    // Members without work: dissolution will detach them next round.
    if (g.sub_ != 0) {
      clock_.unsubscribe(g.sub_);
      g.sub_ = 0;
    }
    g.next_completion_ = kNoTick;
    g.lost_any_ = true;
    enqueue(&g);
    return;
  }

  logic_->assign(g);

  if (share_dump_ != nullptr) {
    for (const ResourceConsumption* c : live)
      *share_dump_ << "tick=" << clock_.now() << " group=" << g.id_ << " consumption=" << c->id()
                   << " provider=" << c->provider()->name() << " consumer="
                   << c->consumer()->name() << " provider_share=" << c->provider_share()
                   << " consumer_share=" << c->consumer_share() << "\n";
  }

  Tick next = kNoTick;
  for (const ResourceConsumption* c : live) {
    double production = std::min(c->provider_share_, c->limit_);
    double drain = std::min(c->consumer_share_, c->limit_);
    Tick t = progress::ticks_to_completion(c->state_, production, drain, c->completion_eps_);
    next = std::min(next, t);
  }
  g.next_completion_ = next;

  if (next == kNoTick) {
    if (g.sub_ != 0) {
      clock_.unsubscribe(g.sub_);
      g.sub_ = 0;
    }
    return;
  }
  if (g.sub_ != 0) {
    clock_.rearm(g.sub_, next);
  } else {
    InfluenceGroup* raw = &g;
    g.sub_ = clock_.subscribe(next, [this, raw](Tick) {
      enqueue(raw);
      process();
    });
  }
}

std::vector<ResourceSpreader*> SharingKernel::direct_group(const ResourceSpreader& s) const {
  std::vector<ResourceSpreader*> closure;
  std::unordered_set<const ResourceSpreader*> seen;
  std::vector<ResourceSpreader*> frontier{const_cast<ResourceSpreader*>(&s)};
  seen.insert(&s);
  while (!frontier.empty()) {
    ResourceSpreader* cur = frontier.back();
    frontier.pop_back();
    closure.push_back(cur);
    for (const ConsumptionPtr& c : cur->consumptions_) {
      for (ResourceSpreader* e : {c->provider_, c->consumer_}) {
        if (e != nullptr && seen.insert(e).second)
          frontier.push_back(e);
      }
    }
  }
  std::sort(closure.begin(), closure.end(),
            [](const ResourceSpreader* a, const ResourceSpreader* b) { return a->id() < b->id(); });
  return closure;
}

std::vector<InfluenceGroup*> SharingKernel::groups() const {
  std::vector<InfluenceGroup*> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_)
    out.push_back(g.get());
  return out;
}

void SharingKernel::validate_partitions() const {
  for (const auto& g : groups_) {
    for (const ResourceSpreader* m : g->members_) {
      if (m->group_ != g.get())
        throw InternalError("spreader/group back-reference mismatch");
    }
  }
  for (const auto& g : groups_) {
    for (const ResourceSpreader* m : g->members_) {
      for (const ConsumptionPtr& c : m->consumptions_) {
        if (!c->registered_)
          throw InternalError("unregistered consumption still attached");
        if (c->provider_->group_ != c->consumer_->group_)
          throw InternalError("consumption endpoints in different groups");
      }
      if (m->consumptions_.empty())
        continue;
      std::vector<ResourceSpreader*> closure = direct_group(*m);
      std::vector<ResourceSpreader*> stored = g->members_;
      std::sort(stored.begin(), stored.end(),
                [](const ResourceSpreader* a, const ResourceSpreader* b) {
                  return a->id() < b->id();
                });
      // Members with no consumptions are legal leftovers inside a group until
      // the next dissolution; the closure must cover everything else.
      std::vector<ResourceSpreader*> loaded;
      for (ResourceSpreader* x : stored)
        if (!x->consumptions_.empty())
          loaded.push_back(x);
      if (closure != loaded)
        throw InternalError("incremental partition disagrees with direct recomputation");
    }
  }
}

void SharingKernel::detach_spreader(ResourceSpreader& s) {
  // Teardown path: silently drop this spreader's consumptions (no handlers,
  // no settling) and leave the partition via the next maintenance round.
  std::vector<ConsumptionPtr> doomed = s.consumptions_;
  for (const ConsumptionPtr& c : doomed) {
    detach_endpoints(c);
    c->registered_ = false;
    c->finished_ = true;
  }
  if (s.group_ != nullptr) {
    auto& mem = s.group_->members_;
    mem.erase(std::remove(mem.begin(), mem.end(), &s), mem.end());
    s.group_->lost_any_ = true;
    if (mem.empty())
      dispose_group(s.group_);
    else
      enqueue(s.group_);
    s.group_ = nullptr;
  }
}

double apply_provider_step(ResourceConsumption& c) {
  if (!c.registered())
    throw StateError("consumption is not registered");
  if (!c.share_assigned())
    throw InternalError("provider share not assigned for this tick");
  double grant = std::min(c.provider_share_, c.limit_);
  double moved = std::min(c.state_.remaining, grant);
  c.state_.under_processing += moved;
  c.state_.remaining -= moved;
  c.produced_total_ += moved;
  c.provider_->processed_ += moved;
  return moved;
}

double apply_consumer_step(ResourceConsumption& c) {
  if (!c.registered())
    throw StateError("consumption is not registered");
  if (!c.share_assigned())
    throw InternalError("consumer share not assigned for this tick");
  double drain = std::min(c.consumer_share_, c.limit_);
  double drained = std::min(c.state_.under_processing, drain);
  c.state_.under_processing -= drained;
  c.consumed_total_ += drained;
  c.consumer_->processed_ += drained;
  return drained;
}

} // namespace iaasim
