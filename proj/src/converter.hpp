#pragma once

#include <map>
#include <string>
#include <vector>

#include "ann.hpp"
#include "snn.hpp"

namespace est {

// Everything the calibration pass learned about one population.
struct PopulationCalibration {
  std::string population;
  double observed_max = 0.0;
  double percentile_value = 0.0;
  double threshold = 0.0;
  bool dead = false;  // percentile value was 0; threshold fell back to 1
};

struct CalibrationReport {
  double percentile = 0.0;
  int sample_count = 0;
  std::vector<PopulationCalibration> populations;

  std::map<std::string, double> thresholds() const;
  std::string to_json() const;
};

// Runs the ANN over the calibration set, pools every population's post-ReLU
// activations, and takes the nearest-rank percentile as that population's
// threshold. Activations and thresholds live on the same scale: the spiking
// engine keeps inter-layer currents in activation units, so the ANN
// percentile is directly usable as a firing threshold. A population whose
// percentile value is 0 gets threshold 1 and a warning flag.
CalibrationReport calibrate_thresholds(const AnnParams& p, const Dataset& calib, double percentile);

// Weight-preserving conversion: the returned model shares the ANN weights
// byte for byte; only thresholds, schedule and mode are added. mode = sa
// forces rho to 1; a psa schedule with rho = 1 collapses to sa outright so
// the two configurations stay indistinguishable end to end.
SnnModel convert(const AnnParams& p, const std::map<std::string, double>& thresholds,
                 AttentionMode mode, const PsaSchedule& schedule);

}  // namespace est
