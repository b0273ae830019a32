#include "iaasim/clock.hpp"

#include <cmath>

#include "iaasim/errors.hpp"

namespace iaasim {

SimClock::SimClock(double tick_seconds) : tick_seconds_(tick_seconds) {
  if (!(tick_seconds > 0.0))
    throw ValidationError("tick width must be positive");
}

Tick SimClock::ticks(double s) const {
  if (s <= 0.0)
    return 0;
  double t = std::ceil(s / tick_seconds_ - 1e-9);
  return t < 1.0 ? 1 : static_cast<Tick>(t);
}

SubscriptionId SimClock::subscribe(Tick frequency, TickHandler handler) {
  if (frequency == 0)
    throw ValidationError("subscription frequency must be at least one tick");
  if (!handler)
    throw ValidationError("subscription handler must be callable");
  SubscriptionId id = next_id_++;
  subscriptions_.emplace(id, Subscription{frequency, now_ + frequency, std::move(handler), false});
  push_entry(now_ + frequency, id);
  return id;
}

bool SimClock::unsubscribe(SubscriptionId id) {
  return subscriptions_.erase(id) != 0;
}

void SimClock::rearm(SubscriptionId id, Tick frequency) {
  if (frequency == 0)
    throw ValidationError("subscription frequency must be at least one tick");
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end())
    throw ValidationError("rearm of an unknown subscription");
  it->second.frequency = frequency;
  it->second.next_fire = now_ + frequency;
  push_entry(it->second.next_fire, id);
}

Tick SimClock::next_fire(SubscriptionId id) const {
  auto it = subscriptions_.find(id);
  return it == subscriptions_.end() ? kNoTick : it->second.next_fire;
}

void SimClock::purge_stale() const {
  while (!queue_.empty()) {
    const QueueEntry& top = queue_.top();
    auto it = subscriptions_.find(top.id);
    if (it != subscriptions_.end() && it->second.next_fire == top.tick)
      return;
    queue_.pop();
  }
}

Tick SimClock::earliest_event() const {
  purge_stale();
  return queue_.empty() ? kNoTick : queue_.top().tick;
}

std::size_t SimClock::fire_tick() {
  // Collect everything due now before running anything, so handlers firing at
  // the same tick cannot reorder each other.  Dead or rearmed entries are
  // re-checked right before each call.
  std::vector<SubscriptionId> due;
  purge_stale();
  while (!queue_.empty() && queue_.top().tick == now_) {
    due.push_back(queue_.top().id);
    queue_.pop();
    purge_stale();
  }

  std::size_t fired = 0;
  for (SubscriptionId id : due) {
    auto it = subscriptions_.find(id);
    if (it == subscriptions_.end() || it->second.next_fire != now_)
      continue; // unsubscribed or rearmed by an earlier handler this tick
    ++fired;
    if (it->second.one_shot) {
      TickHandler handler = std::move(it->second.handler);
      subscriptions_.erase(it);
      handler(now_);
    } else {
      it->second.handler(now_);
      // The handler may have invalidated the iterator (rehash) or retired the
      // subscription; only auto-advance when it is still due at this tick.
      auto again = subscriptions_.find(id);
      if (again != subscriptions_.end() && again->second.next_fire == now_) {
        again->second.next_fire = now_ + again->second.frequency;
        push_entry(again->second.next_fire, id);
      }
    }
  }
  ++now_;
  return fired;
}

void SimClock::drop_tick() {
  std::vector<SubscriptionId> due;
  purge_stale();
  while (!queue_.empty() && queue_.top().tick == now_) {
    due.push_back(queue_.top().id);
    queue_.pop();
    purge_stale();
  }
  for (SubscriptionId id : due) {
    auto it = subscriptions_.find(id);
    if (it == subscriptions_.end() || it->second.next_fire != now_)
      continue;
    if (it->second.one_shot) {
      subscriptions_.erase(it);
    } else {
      it->second.next_fire = now_ + it->second.frequency;
      push_entry(it->second.next_fire, id);
    }
  }
  ++now_;
}

void SimClock::jump_time(Tick interval) {
  Tick earliest = earliest_event();
  if (earliest != kNoTick && earliest < now_ + interval)
    throw ValidationError("jump would skip an event due at tick " + std::to_string(earliest));
  now_ += interval;
}

Tick SimClock::simulate_until_last_event() {
  for (;;) {
    Tick e = earliest_event();
    if (e == kNoTick)
      return now_;
    if (e > now_)
      now_ = e;
    fire_tick();
  }
}

void SimClock::simulate_until(Tick target, bool drop_due_events) {
  if (target < now_)
    throw ValidationError("cannot simulate into the past");
  for (;;) {
    Tick e = earliest_event();
    if (e == kNoTick || e >= target)
      break;
    if (e > now_)
      now_ = e;
    if (drop_due_events)
      drop_tick();
    else
      fire_tick();
  }
  now_ = target;
}

DeferredEvent SimClock::defer(Tick delay, std::function<void()> action) {
  if (delay == 0)
    throw ValidationError("deferred events need a positive delay");
  if (!action)
    throw ValidationError("deferred action must be callable");
  SubscriptionId id = next_id_++;
  auto wrapped = [fn = std::move(action)](Tick) { fn(); };
  subscriptions_.emplace(id, Subscription{delay, now_ + delay, std::move(wrapped), true});
  push_entry(now_ + delay, id);
  return DeferredEvent{id};
}

} // namespace iaasim
