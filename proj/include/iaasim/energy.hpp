#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "iaasim/clock.hpp"
#include "iaasim/power.hpp"
#include "iaasim/sharing.hpp"

namespace iaasim {

/** Exact joule integral for one spreader under a switchable consumption model.
 *
 *  The integral folds lazily: each fold covers the span since the previous one
 *  with watts(average utilisation over that span), which is exact for constant
 *  and linear models as long as the model and the spreader capacity only
 *  change at fold points.  Machine power-state changes fold before switching,
 *  so meters read transition energy exactly no matter how their sampling
 *  period aligns with the transitions.
 */
class EnergyAccount {
public:
  EnergyAccount(SimClock& clock, ResourceSpreader& spreader, ConsumptionModel model);

  ResourceSpreader& spreader() const { return spreader_; }
  const ConsumptionModel& model() const { return model_; }

  /** Swap models, folding the integral at the current tick first. */
  void set_model(ConsumptionModel model);

  /** Total joules drawn since construction, up to the current tick. */
  double energy_joules();

  /** Average utilisation since the last fold (diagnostics). */
  double pending_utilisation() const;

private:
  void fold();

  SimClock& clock_;
  ResourceSpreader& spreader_;
  ConsumptionModel model_;
  double joules_ = 0.0;
  Tick folded_at_;
  double processed_mark_;
  double integral_mark_;
};

/** Periodic sampler turning accounts or callbacks into accumulated joules.
 *
 *  start() subscribes at the given period; stop() folds the partial span and
 *  unsubscribes.  Accumulation survives stop/start pairs.  Two meters must not
 *  watch the same underlying entity: construction of aggregates rejects
 *  overlapping dependency sets so nothing is double-counted.
 */
class EnergyMeter {
public:
  virtual ~EnergyMeter();

  EnergyMeter(const EnergyMeter&) = delete;
  EnergyMeter& operator=(const EnergyMeter&) = delete;

  /** Begin sampling every `period` ticks; false (and no change) when already
   *  running. */
  virtual bool start(Tick period);
  virtual void stop();
  bool running() const { return sub_ != 0; }
  Tick period() const { return period_; }

  /** Joules accumulated across all metering sessions so far. */
  virtual double total_joules() const { return accumulated_; }

  const std::string& name() const { return name_; }

  /** Opaque identities this meter draws from; meters overlap iff these
   *  intersect. */
  virtual std::vector<const void*> dependencies() const = 0;

protected:
  EnergyMeter(SimClock& clock, std::string name);

  /** Accumulate the span (dt ticks) ending at the current tick. */
  virtual void sample(Tick dt) = 0;

  /** Refresh baselines when a metering session begins. */
  virtual void on_start() {}

  SimClock& clock_;
  std::string name_;
  double accumulated_ = 0.0;

private:
  void fire();

  SubscriptionId sub_ = 0;
  Tick period_ = 0;
  Tick last_sample_ = 0;
};

/** Meters one spreader's exact account. */
class DirectEnergyMeter final : public EnergyMeter {
public:
  DirectEnergyMeter(SimClock& clock, EnergyAccount& account, std::string name = {});
  std::vector<const void*> dependencies() const override;

protected:
  void sample(Tick dt) override;
  void on_start() override;

private:
  EnergyAccount& account_;
  double mark_;
};

/** Meters an external wattage source (PDU-style): integrates sampler() watts
 *  over each elapsed span. */
class IndirectEnergyMeter final : public EnergyMeter {
public:
  IndirectEnergyMeter(SimClock& clock, std::function<double()> watts_sampler,
                      std::vector<const void*> dependencies, std::string name = {});
  std::vector<const void*> dependencies() const override { return deps_; }

protected:
  void sample(Tick dt) override;

private:
  std::function<double()> sampler_;
  std::vector<const void*> deps_;
};

/** Combines child meters through an aggregation function (sum by default).
 *  start/stop cascade to children; reading is live over child totals. */
class AggregateEnergyMeter final : public EnergyMeter {
public:
  using Aggregator = std::function<double(const std::vector<double>&)>;

  AggregateEnergyMeter(SimClock& clock, std::vector<EnergyMeter*> children,
                       Aggregator fn = nullptr, std::string name = {});

  bool start(Tick period) override;
  void stop() override;
  double total_joules() const override;
  std::vector<const void*> dependencies() const override;

protected:
  void sample(Tick dt) override { (void)dt; }

private:
  std::vector<EnergyMeter*> children_;
  Aggregator fn_;
};

class VirtualMachine;
class PhysicalMachine;

/** Attributes a share of the hosting machine's draw to one virtual machine:
 *  the load-dependent band in proportion to the VM's consumed share of what
 *  the host produced over the sampling span, plus an equal slice of the idle
 *  floor per hosted VM.  Summed over all hosted VMs this reproduces the host
 *  meter exactly when the host is saturated. */
class VMPowerMeter final : public EnergyMeter {
public:
  VMPowerMeter(SimClock& clock, VirtualMachine& vm, std::string name = {});

  /** Average watts attributed over the last sampled span. */
  double last_watts() const { return last_watts_; }

  std::vector<const void*> dependencies() const override;

protected:
  void sample(Tick dt) override;
  void on_start() override;

private:
  VirtualMachine& vm_;
  double consumed_mark_ = 0.0;
  double produced_mark_ = 0.0;
  const void* marked_host_ = nullptr;
  double last_watts_ = 0.0;
};

} // namespace iaasim
