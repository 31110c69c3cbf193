#include "converter.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace est {

std::map<std::string, double> CalibrationReport::thresholds() const {
  std::map<std::string, double> th;
  for (const PopulationCalibration& pc : populations) th[pc.population] = pc.threshold;
  return th;
}

std::string CalibrationReport::to_json() const {
  nlohmann::json j;
  j["percentile"] = percentile;
  j["sample_count"] = sample_count;
  j["populations"] = nlohmann::json::array();
  for (const PopulationCalibration& pc : populations) {
    j["populations"].push_back({{"population", pc.population},
                                {"observed_max", pc.observed_max},
                                {"percentile_value", pc.percentile_value},
                                {"threshold", pc.threshold},
                                {"dead", pc.dead}});
  }
  return j.dump();
}

namespace {

// Nearest-rank percentile on a sorted copy: the smallest value whose rank
// covers p percent of the sample. p = 100 picks the maximum.
double nearest_rank_percentile(std::vector<double>& values, double p) {
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return values[rank - 1];
}

}  // namespace

CalibrationReport calibrate_thresholds(const AnnParams& p, const Dataset& calib,
                                       double percentile) {
  p.validate();
  calib.validate();
  if (!(percentile > 0.0) || percentile > 100.0)
    fail(ErrorCode::invalid_argument, "calibrate: percentile must be in (0, 100]");
  if (calib.n_tokens != p.dims.n_tokens || calib.d_model != p.dims.d_model)
    fail(ErrorCode::dimension, "calibrate: dataset shape does not match model dims");

  // One activation pool per population, in the model's population order.
  const int n_pops = p.dims.n_blocks * 7;
  std::vector<std::vector<double>> pools(n_pops);

  for (int i = 0; i < calib.size(); ++i) {
    ForwardCache fc;
    ann_forward(p, calib.inputs[i], &fc);
    for (int b = 0; b < p.dims.n_blocks; ++b) {
      const BlockCache& c = fc.blocks[b];
      const Tensor* acts[7] = {&c.q, &c.k, &c.v, &c.a, &c.ctx, &c.m1, &c.m2};
      for (int w = 0; w < 7; ++w) {
        auto& pool = pools[b * 7 + w];
        pool.insert(pool.end(), acts[w]->values.begin(), acts[w]->values.end());
      }
    }
  }

  static const char* bases[7] = {"q", "k", "v", "score", "context", "mlp1", "mlp2"};
  CalibrationReport rep;
  rep.percentile = percentile;
  rep.sample_count = calib.size();
  for (int b = 0; b < p.dims.n_blocks; ++b) {
    for (int w = 0; w < 7; ++w) {
      auto& pool = pools[b * 7 + w];
      PopulationCalibration pc;
      pc.population = population_name(bases[w], b);
      pc.observed_max = *std::max_element(pool.begin(), pool.end());
      pc.percentile_value = nearest_rank_percentile(pool, percentile);
      if (pc.percentile_value > 0.0) {
        pc.threshold = pc.percentile_value;
      } else {
        pc.threshold = 1.0;  // dead population: nothing to scale against
        pc.dead = true;
      }
      rep.populations.push_back(std::move(pc));
    }
  }
  return rep;
}

SnnModel convert(const AnnParams& p, const std::map<std::string, double>& thresholds,
                 AttentionMode mode, const PsaSchedule& schedule) {
  p.validate();
  schedule.validate();

  SnnModel m;
  m.params = p;  // weights carried unchanged; the thresholds hold all the scale
  m.thresholds = thresholds;
  if (mode == AttentionMode::sa) {
    m.mode = AttentionMode::sa;
    m.schedule = PsaSchedule::make(schedule.T, 1.0, false);
  } else if (schedule.rho == 1.0) {
    // A full-window psa schedule is self-attention in every observable way;
    // normalize the label so downstream artifacts are byte-identical.
    m.mode = AttentionMode::sa;
    m.schedule = PsaSchedule::make(schedule.T, 1.0, false);
  } else {
    m.mode = AttentionMode::psa;
    m.schedule = schedule;
  }
  m.validate();
  return m;
}

}  // namespace est
