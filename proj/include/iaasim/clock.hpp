#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <vector>

namespace iaasim {

/** Simulated time, counted in ticks since the start of the run.
 *
 *  A tick is the smallest observable amount of time; its real-time width is
 *  chosen once per clock (default one millisecond) and everything else in the
 *  simulator is expressed in ticks.  Wall-clock time of a tick t is t * tick_seconds.
 */
using Tick = std::uint64_t;

/** Sentinel for "no such tick" (empty queues, never-completing consumptions). */
inline constexpr Tick kNoTick = std::numeric_limits<Tick>::max();

using SubscriptionId = std::uint64_t;

/** Handle for a one-shot action scheduled through SimClock::defer(). */
struct DeferredEvent {
  SubscriptionId id = 0;
};

/** Discrete event clock with recurring subscriptions and one-shot events.
 *
 *  Subscriptions fire every `frequency` ticks, first at now + frequency.  All
 *  handlers due at the same tick run within that tick, ordered by subscription
 *  id (creation order), before time moves on.  Mutations made by a handler
 *  (subscribe, unsubscribe, rearm) become visible no earlier than the next tick;
 *  in particular a handler subscribing with frequency f first fires at tick+f.
 *
 *  There is no background thread: time only advances inside fire_tick(),
 *  jump_time() and the simulate_until* drivers, all on the caller's thread.
 */
class SimClock {
public:
  using TickHandler = std::function<void(Tick)>;

  explicit SimClock(double tick_seconds = 1e-3);

  SimClock(const SimClock&) = delete;
  SimClock& operator=(const SimClock&) = delete;

  Tick now() const { return now_; }
  double tick_seconds() const { return tick_seconds_; }

  /** Wall-clock seconds corresponding to a tick count. */
  double seconds(Tick t) const { return static_cast<double>(t) * tick_seconds_; }

  /** Smallest tick count covering `s` seconds (rounds up; s <= 0 gives 0). */
  Tick ticks(double s) const;

  /** Register a recurring handler.  frequency must be >= 1. */
  SubscriptionId subscribe(Tick frequency, TickHandler handler);

  /** Remove a subscription.  Returns false when the id is unknown (double
   *  unsubscribe is a harmless no-op). */
  bool unsubscribe(SubscriptionId id);

  /** Change a subscription's frequency.  The next fire moves to now + frequency,
   *  even when called from inside the subscription's own handler. */
  void rearm(SubscriptionId id, Tick frequency);

  bool active(SubscriptionId id) const { return subscriptions_.count(id) != 0; }

  /** Tick at which the subscription fires next; kNoTick when unknown id. */
  Tick next_fire(SubscriptionId id) const;

  /** Run every handler due at the current tick, then advance time by one tick.
   *  Returns the number of handlers fired.  A throwing handler aborts the tick:
   *  the exception propagates and time does not advance. */
  std::size_t fire_tick();

  /** Advance time by `interval` ticks without firing anything.  Throws
   *  ValidationError when an event is due strictly before now + interval. */
  void jump_time(Tick interval);

  /** Drive the simulation until no events remain.  Returns the final tick. */
  Tick simulate_until_last_event();

  /** Drive the simulation up to (and excluding) `target`; events due exactly at
   *  `target` stay pending.  With drop_due_events the due handlers are skipped:
   *  recurring subscriptions silently advance, one-shots are discarded. */
  void simulate_until(Tick target, bool drop_due_events = false);

  /** Schedule a one-shot action `delay` ticks from now (delay >= 1). */
  DeferredEvent defer(Tick delay, std::function<void()> action);

  /** Cancel a deferred event.  True iff the action had not fired yet. */
  bool cancel(DeferredEvent ev) { return unsubscribe(ev.id); }

  /** Earliest tick at which anything is scheduled; kNoTick when idle. */
  Tick earliest_event() const;

  std::size_t pending_subscriptions() const { return subscriptions_.size(); }

private:
  struct Subscription {
    Tick frequency;
    Tick next_fire;
    TickHandler handler;
    bool one_shot;
  };

  struct QueueEntry {
    Tick tick;
    SubscriptionId id;
    bool operator>(const QueueEntry& o) const {
      return tick != o.tick ? tick > o.tick : id > o.id;
    }
  };

  void push_entry(Tick tick, SubscriptionId id) { queue_.push({tick, id}); }
  /** Drop stale heap entries (rearmed or unsubscribed) from the top. */
  void purge_stale() const;
  void drop_tick();

  double tick_seconds_;
  Tick now_ = 0;
  SubscriptionId next_id_ = 1;
  std::unordered_map<SubscriptionId, Subscription> subscriptions_;
  mutable std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<QueueEntry>> queue_;
};

} // namespace iaasim
