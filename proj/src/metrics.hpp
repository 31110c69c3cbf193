#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace est {

struct SnnModel;
struct BatchResult;

// Per-layer, per-step spike totals accumulated over samples. Counts are
// integers, so merging partial records is commutative and the merged result
// does not depend on worker count or merge order.
struct SpikeRecord {
  std::vector<std::string> layer_names;
  std::vector<int> layer_sizes;  // neurons per layer (one sample)
  int T = 0;
  int64_t sample_count = 0;
  std::vector<std::vector<int64_t>> counts;  // [layer][step]

  static SpikeRecord make(std::vector<std::string> names, std::vector<int> sizes, int T);
  void add(int layer, int t, int64_t n);  // t in [1, T]
  void merge(const SpikeRecord& other);
  int64_t layer_total(int layer) const;
  int64_t total() const;
  void validate() const;
};

// Score-population pair totals for one block: counts[i*n + j] is how often
// query token i fired for key token j, summed over steps and samples.
struct ScorePairCounts {
  int n = 0;
  int T = 0;
  int64_t sample_count = 0;
  std::vector<int64_t> counts;

  static ScorePairCounts make(int n, int T);
  void merge(const ScorePairCounts& other);
};

// spikes / (T * samples) per layer, in record layer order.
std::vector<double> mean_spike_count(const SpikeRecord& rec);

// Accumulate-operation accounting. Each layer row carries the formula its
// number came from; mixing spike-driven and dense step-gated terms is
// deliberate and disclosed there.
struct OpsLayer {
  std::string layer;
  uint64_t ops = 0;
  std::string formula;
};

struct OpsReport {
  std::vector<OpsLayer> layers;
  uint64_t total = 0;
  uint64_t qk_score_ops = 0;  // q + k + score rows, the PSA-sensitive bucket
  std::string to_json() const;
};

OpsReport synops(const SpikeRecord& rec, const SnnModel& model);

// Fraction of correct argmax predictions; ties resolve to the lowest class
// index. logits[i] is 1 x n_classes.
double accuracy(const std::vector<Tensor>& logits, const std::vector<int>& labels);

// Per-pair firing rates in [0, 1]: counts / (T * samples).
Tensor attention_heatmap(const ScorePairCounts& pairs);

// File writers. Both formats put a fixed column order and 9-significant-digit
// decimals on disk so reruns diff clean.
void write_metrics_csv(const BatchResult& res, const std::string& run_id, const std::string& path,
                       bool per_layer_rows);
void write_heatmap_csv(const ScorePairCounts& pairs, const std::string& path);
void write_compare_csv(const BatchResult& sa, const BatchResult& psa, const std::string& run_id,
                       const std::string& path);
void write_sweep_csv(const std::vector<BatchResult>& runs, const std::string& run_id,
                     const std::string& path);

// One summary row shared by the writers (layer = "total").
std::string metrics_total_row(const BatchResult& res, const std::string& run_id);

}  // namespace est
