#pragma once

#include <algorithm>

namespace iaasim {

/** Maps average utilisation (0..1) of a spreader to instantaneous draw in
 *  watts.  Two shapes cover the machines modelled here: a flat draw
 *  (off/transition states) and a linear idle-to-peak ramp (running state). */
class ConsumptionModel {
public:
  static ConsumptionModel constant(double watts) { return ConsumptionModel(watts, watts); }
  static ConsumptionModel linear(double idle_watts, double peak_watts) {
    return ConsumptionModel(idle_watts, peak_watts);
  }

  double watts(double utilisation) const {
    double u = std::clamp(utilisation, 0.0, 1.0);
    return idle_ + (peak_ - idle_) * u;
  }

  double idle_watts() const { return idle_; }
  double peak_watts() const { return peak_; }
  bool is_constant() const { return idle_ == peak_; }

private:
  ConsumptionModel(double idle, double peak) : idle_(idle), peak_(peak) {}
  double idle_ = 0.0;
  double peak_ = 0.0;
};

} // namespace iaasim
