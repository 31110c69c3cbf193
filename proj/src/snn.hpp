#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ann.hpp"
#include "metrics.hpp"
#include "neuron.hpp"

namespace est {

// Partial-information schedule. Q and K populations run only for the first
// t_qk = ceil(rho * T) steps; V always runs the full window. The score
// population keeps stepping after t_qk with zero input so residual membrane
// charge can still fire. The gain multiplies the score input current during
// the active window to compensate for the shortened accumulation; auto mode
// uses T / t_qk, fixed mode pins it to 1. rho = 1 collapses the schedule to
// plain self-attention (gain forced to 1).
struct PsaSchedule {
  int T = 0;
  double rho = 1.0;
  int t_qk = 0;
  double gain = 1.0;
  bool auto_gain = true;

  static PsaSchedule make(int T, double rho, bool fixed_unit_gain);
  PsaSchedule with_timesteps(int new_T) const;
  void validate() const;
};

enum class AttentionMode { sa, psa };

const char* mode_name(AttentionMode m);

// Population naming: block 0 uses the bare names (q, k, v, score, context,
// mlp1, mlp2); later blocks append the block index (q1, score2, ...).
std::string population_name(const char* base, int block);

// Converted spiking model: the ANN weights byte-for-byte, one calibrated
// threshold per population, a schedule, and the attention mode.
struct SnnModel {
  AnnParams params;
  std::map<std::string, double> thresholds;
  PsaSchedule schedule;
  AttentionMode mode = AttentionMode::sa;

  double threshold(const std::string& population) const;
  std::vector<std::string> population_names() const;
  void validate() const;
};

// Bit stream for one population: T x rows x cols, entries 0/1.
struct SpikeTrain {
  int T = 0;
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> data;

  static SpikeTrain make(int T, int rows, int cols);
  uint8_t at(int t, int r, int c) const;  // t in [1, T]
  void set(int t, const std::vector<uint8_t>& frame);
  uint64_t total() const;
};

// Full per-population bit streams; only filled when tracing is requested.
using SnnTrace = std::map<std::string, SpikeTrain>;

// Steps every population of the model over T steps for one sample.
//
// All inter-population currents are kept in ANN activation units: a spike
// leaving a population is worth its threshold v downstream (rate_decode of a
// train times v reproduces the activation it stands for). Residual paths add
// the upstream current unchanged. With all thresholds at 1 this reduces to
// feeding raw 0/1 spikes forward.
class SnnRunner {
 public:
  struct Options {
    bool trace = false;
    bool pair_counts = false;
  };

  SnnRunner(const SnnModel& model, int T);
  SnnRunner(const SnnModel& model, int T, Options opt);

  // One full step (all blocks) driven by the analog input frame x.
  void step(const Tensor& x);
  // Logits after exactly T steps: time-averaged readout current, mean-pooled
  // over tokens, through W_cls once. The classifier itself never spikes.
  Tensor finish();

  struct QkvOut {
    std::vector<uint8_t> q, k, v;
    bool qk_active = false;
  };
  // Sub-steps, exposed so the schedule semantics can be driven directly.
  // t is the 1-based global step index; it must stay within [1, T].
  QkvOut qkv_step(int t, int block, const Tensor& input_current);
  std::vector<uint8_t> score_step(int t, int block, const std::vector<uint8_t>& q_t,
                                  const std::vector<uint8_t>& k_t);
  std::vector<uint8_t> context_step(int block, const std::vector<uint8_t>& a_t,
                                    const std::vector<uint8_t>& v_t);

  const SpikeRecord& record() const { return record_; }
  const SnnTrace& trace() const { return trace_; }
  const ScorePairCounts& pair_counts() const { return pairs_; }
  uint64_t fires_total() const;  // sum of the IfState lifetime counters
  int steps_taken() const { return t_; }

 private:
  struct BlockStates {
    IfState q, k, v, score, context, mlp1, mlp2;
  };

  const SnnModel& model_;
  int T_ = 0;
  int t_ = 0;
  Options opt_;
  std::vector<BlockStates> states_;
  Tensor readout_accum_;
  SpikeRecord record_;
  SnnTrace trace_;
  ScorePairCounts pairs_;

  int layer_index(int block, int which) const { return block * 7 + which; }
};

// One sample end to end. Returns logits; optionally exposes the record,
// trace and block-0 score pair counts from the run.
Tensor snn_forward(const SnnModel& model, const Tensor& x, int T, SpikeRecord* record = nullptr,
                   SnnTrace* trace = nullptr, ScorePairCounts* pairs = nullptr);

// Batch inference. Samples are split over workers; every per-sample result
// lands in its own slot and the integer records merge in fixed order, so the
// output is identical for any worker count.
struct BatchResult {
  std::vector<Tensor> logits;  // per sample, 1 x n_classes
  SpikeRecord record;
  ScorePairCounts pairs;
  OpsReport ops;
  double acc = 0.0;
  int T = 0;
  AttentionMode mode = AttentionMode::sa;
  double rho = 1.0;
  double gain = 1.0;
};

BatchResult snn_infer_batch(const SnnModel& model, const Dataset& data, int T, int workers);

}  // namespace est
