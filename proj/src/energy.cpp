#include "iaasim/energy.hpp"

#include <algorithm>
#include <unordered_set>

#include "iaasim/errors.hpp"
#include "iaasim/machine.hpp"

namespace iaasim {

// --- EnergyAccount ----------------------------------------------------------

EnergyAccount::EnergyAccount(SimClock& clock, ResourceSpreader& spreader, ConsumptionModel model)
    : clock_(clock), spreader_(spreader), model_(model), folded_at_(clock.now()),
      processed_mark_(spreader.processed_total()), integral_mark_(spreader.capacity_integral()) {}

void EnergyAccount::fold() {
  // The processed counter only moves at settle points; bring the group to now
  // so the span we integrate matches what the spreader actually accounted.
  if (spreader_.group() != nullptr)
    spreader_.kernel().notify_capacity_changed(spreader_);
  Tick now = clock_.now();
  Tick dt = now - folded_at_;
  double processed = spreader_.processed_total();
  double integral = spreader_.capacity_integral();
  if (dt > 0) {
    double d_int = integral - integral_mark_;
    double u = d_int > 0.0 ? (processed - processed_mark_) / d_int : 0.0;
    joules_ += model_.watts(u) * static_cast<double>(dt) * clock_.tick_seconds();
  }
  folded_at_ = now;
  processed_mark_ = processed;
  integral_mark_ = integral;
}

void EnergyAccount::set_model(ConsumptionModel model) {
  fold();
  model_ = model;
}

double EnergyAccount::energy_joules() {
  fold();
  return joules_;
}

double EnergyAccount::pending_utilisation() const {
  double d_int = spreader_.capacity_integral() - integral_mark_;
  return d_int > 0.0 ? (spreader_.processed_total() - processed_mark_) / d_int : 0.0;
}

// --- EnergyMeter ------------------------------------------------------------

EnergyMeter::EnergyMeter(SimClock& clock, std::string name)
    : clock_(clock), name_(std::move(name)) {}

EnergyMeter::~EnergyMeter() {
  if (sub_ != 0)
    clock_.unsubscribe(sub_);
}

bool EnergyMeter::start(Tick period) {
  if (sub_ != 0)
    return false;
  if (period == 0)
    throw ValidationError("metering period must be at least one tick");
  period_ = period;
  last_sample_ = clock_.now();
  on_start();
  sub_ = clock_.subscribe(period, [this](Tick) { fire(); });
  return true;
}

void EnergyMeter::stop() {
  if (sub_ == 0)
    return;
  Tick now = clock_.now();
  if (now > last_sample_)
    sample(now - last_sample_);
  clock_.unsubscribe(sub_);
  sub_ = 0;
}

void EnergyMeter::fire() {
  Tick now = clock_.now();
  sample(now - last_sample_);
  last_sample_ = now;
}

// --- DirectEnergyMeter ------------------------------------------------------

DirectEnergyMeter::DirectEnergyMeter(SimClock& clock, EnergyAccount& account, std::string name)
    : EnergyMeter(clock, name.empty() ? "direct:" + account.spreader().name() : std::move(name)),
      account_(account), mark_(account.energy_joules()) {}

void DirectEnergyMeter::on_start() {
  mark_ = account_.energy_joules(); // energy drawn while stopped is not metered
}

void DirectEnergyMeter::sample(Tick) {
  double total = account_.energy_joules();
  accumulated_ += total - mark_;
  mark_ = total;
}

std::vector<const void*> DirectEnergyMeter::dependencies() const {
  return {&account_.spreader()};
}

// --- IndirectEnergyMeter ----------------------------------------------------

IndirectEnergyMeter::IndirectEnergyMeter(SimClock& clock, std::function<double()> watts_sampler,
                                         std::vector<const void*> dependencies, std::string name)
    : EnergyMeter(clock, name.empty() ? "indirect" : std::move(name)),
      sampler_(std::move(watts_sampler)), deps_(std::move(dependencies)) {
  if (!sampler_)
    throw ValidationError("indirect meter needs a wattage sampler");
}

void IndirectEnergyMeter::sample(Tick dt) {
  accumulated_ += sampler_() * static_cast<double>(dt) * clock_.tick_seconds();
}

// --- AggregateEnergyMeter ---------------------------------------------------

AggregateEnergyMeter::AggregateEnergyMeter(SimClock& clock, std::vector<EnergyMeter*> children,
                                           Aggregator fn, std::string name)
    : EnergyMeter(clock, name.empty() ? "aggregate" : std::move(name)),
      children_(std::move(children)), fn_(std::move(fn)) {
  std::unordered_set<const void*> seen;
  for (const EnergyMeter* child : children_) {
    if (child == nullptr)
      throw ValidationError("aggregate meter child is null");
    for (const void* dep : child->dependencies()) {
      if (!seen.insert(dep).second)
        throw ValidationError("aggregate children share a dependency; readings would double-count");
    }
  }
}

bool AggregateEnergyMeter::start(Tick period) {
  if (!EnergyMeter::start(period))
    return false;
  for (EnergyMeter* child : children_)
    child->start(period); // children already running keep their own cadence
  return true;
}

void AggregateEnergyMeter::stop() {
  if (!running())
    return;
  EnergyMeter::stop();
  for (EnergyMeter* child : children_)
    child->stop();
}

double AggregateEnergyMeter::total_joules() const {
  std::vector<double> totals;
  totals.reserve(children_.size());
  for (const EnergyMeter* child : children_)
    totals.push_back(child->total_joules());
  if (fn_)
    return fn_(totals);
  double sum = 0.0;
  for (double t : totals)
    sum += t;
  return sum;
}

std::vector<const void*> AggregateEnergyMeter::dependencies() const {
  std::vector<const void*> out;
  for (const EnergyMeter* child : children_)
    for (const void* dep : child->dependencies())
      out.push_back(dep);
  return out;
}

// --- VMPowerMeter -----------------------------------------------------------

VMPowerMeter::VMPowerMeter(SimClock& clock, VirtualMachine& vm, std::string name)
    : EnergyMeter(clock, name.empty() ? "vm:" + vm.name() : std::move(name)), vm_(vm) {}

void VMPowerMeter::on_start() {
  PhysicalMachine* host = vm_.host();
  if (host != nullptr && host->cpu().group() != nullptr)
    host->kernel().notify_capacity_changed(host->cpu());
  if (vm_.cpu_consumer().group() != nullptr)
    vm_.cpu_consumer().kernel().notify_capacity_changed(vm_.cpu_consumer());
  marked_host_ = host;
  consumed_mark_ = vm_.cpu_consumer().processed_total();
  produced_mark_ = host != nullptr ? host->cpu().processed_total() : 0.0;
}

void VMPowerMeter::sample(Tick dt) {
  PhysicalMachine* host = vm_.host();
  // Settle pending progress so the produced/consumed deltas cover this span.
  if (host != nullptr && host->cpu().group() != nullptr)
    host->kernel().notify_capacity_changed(host->cpu());
  if (vm_.cpu_consumer().group() != nullptr)
    vm_.cpu_consumer().kernel().notify_capacity_changed(vm_.cpu_consumer());
  double consumed = vm_.cpu_consumer().processed_total();
  double produced = host != nullptr ? host->cpu().processed_total() : 0.0;
  if (host == nullptr || dt == 0) {
    last_watts_ = 0.0;
    marked_host_ = host;
    consumed_mark_ = consumed;
    produced_mark_ = produced;
    return;
  }
  double share = 0.0;
  if (host == marked_host_) {
    double d_prod = produced - produced_mark_;
    double d_cons = consumed - consumed_mark_;
    // Idle host: the load band contributes nothing (0/0 reads as 0).
    share = d_prod > 0.0 ? std::clamp(d_cons / d_prod, 0.0, 1.0) : 0.0;
  } // else: host changed mid-span; only the idle slice is attributable

  const ConsumptionModel& m = host->running_power_model();
  std::size_t hosted = host->hosted_vm_count();
  double idle_slice = hosted > 0 ? m.idle_watts() / static_cast<double>(hosted) : 0.0;
  last_watts_ = (m.peak_watts() - m.idle_watts()) * share + idle_slice;
  accumulated_ += last_watts_ * static_cast<double>(dt) * clock_.tick_seconds();

  marked_host_ = host;
  consumed_mark_ = consumed;
  produced_mark_ = produced;
}

std::vector<const void*> VMPowerMeter::dependencies() const {
  std::vector<const void*> deps{&vm_.cpu_consumer()};
  if (vm_.host() != nullptr)
    deps.push_back(&vm_.host()->cpu());
  return deps;
}

} // namespace iaasim
