#include "metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "ioutil.hpp"
#include "snn.hpp"

namespace est {

SpikeRecord SpikeRecord::make(std::vector<std::string> names, std::vector<int> sizes, int T) {
  if (names.empty() || names.size() != sizes.size())
    fail(ErrorCode::invalid_argument, "record: layer names/sizes mismatch");
  if (T < 1) fail(ErrorCode::invalid_argument, "record: T must be >= 1");
  SpikeRecord r;
  r.layer_names = std::move(names);
  r.layer_sizes = std::move(sizes);
  r.T = T;
  r.sample_count = 1;
  r.counts.assign(r.layer_names.size(), std::vector<int64_t>(T, 0));
  return r;
}

void SpikeRecord::add(int layer, int t, int64_t n) {
  if (layer < 0 || layer >= static_cast<int>(counts.size()))
    fail(ErrorCode::accounting, "record: layer index out of range");
  if (t < 1 || t > T) fail(ErrorCode::accounting, "record: step out of range");
  if (n < 0) fail(ErrorCode::accounting, "record: negative spike count");
  counts[layer][t - 1] += n;
}

void SpikeRecord::merge(const SpikeRecord& other) {
  if (layer_names != other.layer_names || layer_sizes != other.layer_sizes || T != other.T)
    fail(ErrorCode::accounting, "record merge: incompatible records");
  for (size_t l = 0; l < counts.size(); ++l)
    for (int t = 0; t < T; ++t) counts[l][t] += other.counts[l][t];
  sample_count += other.sample_count;
}

int64_t SpikeRecord::layer_total(int layer) const {
  int64_t n = 0;
  for (int64_t c : counts[layer]) n += c;
  return n;
}

int64_t SpikeRecord::total() const {
  int64_t n = 0;
  for (size_t l = 0; l < counts.size(); ++l) n += layer_total(static_cast<int>(l));
  return n;
}

void SpikeRecord::validate() const {
  if (sample_count < 1) fail(ErrorCode::accounting, "record: no samples");
  for (size_t l = 0; l < counts.size(); ++l) {
    for (int t = 0; t < T; ++t) {
      int64_t c = counts[l][t];
      if (c < 0 || c > static_cast<int64_t>(layer_sizes[l]) * sample_count)
        fail(ErrorCode::accounting, "record: count exceeds layer capacity at layer " +
                                        layer_names[l] + ", step " + std::to_string(t + 1));
    }
  }
}

ScorePairCounts ScorePairCounts::make(int n, int T) {
  if (n < 1 || T < 1) fail(ErrorCode::invalid_argument, "pair counts: bad shape");
  ScorePairCounts p;
  p.n = n;
  p.T = T;
  p.sample_count = 1;
  p.counts.assign(static_cast<size_t>(n) * n, 0);
  return p;
}

void ScorePairCounts::merge(const ScorePairCounts& other) {
  if (n != other.n || T != other.T)
    fail(ErrorCode::accounting, "pair counts merge: incompatible shapes");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  sample_count += other.sample_count;
}

std::vector<double> mean_spike_count(const SpikeRecord& rec) {
  if (rec.sample_count < 1) fail(ErrorCode::invalid_argument, "mean_spike_count: empty record");
  std::vector<double> out(rec.counts.size());
  for (size_t l = 0; l < rec.counts.size(); ++l)
    out[l] = static_cast<double>(rec.layer_total(static_cast<int>(l))) /
             (static_cast<double>(rec.T) * rec.sample_count);
  return out;
}

// Op accounting scheme, disclosed per row in the formula strings:
//  - q, k, v rows charge the dense projection of the (analog) block input,
//    gated by how many steps the population actually ran. Skipped Q/K steps
//    are exactly the work PSA avoids.
//  - the score row is spike-driven: every Q or K spike feeds d_head
//    multiply-accumulate positions of the score dot products.
//  - downstream rows are spike-driven with their consumers' fan-out, plus a
//    dense term where an analog residual makes the matmul dense anyway.
OpsReport synops(const SpikeRecord& rec, const SnnModel& model) {
  rec.validate();
  const AnnDims& d = model.params.dims;
  if (rec.layer_names != model.population_names())
    fail(ErrorCode::accounting, "synops: record layers do not match the model's populations");
  PsaSchedule eff = model.schedule.with_timesteps(rec.T);
  int64_t steps_qk = model.mode == AttentionMode::psa ? eff.t_qk : rec.T;
  int64_t S = rec.sample_count;

  OpsReport rep;
  // Record rows are laid out 7 per block in a fixed order.
  enum { row_q = 0, row_k, row_v, row_score, row_context, row_mlp1, row_mlp2 };
  auto layer_idx = [](int base, int b) { return b * 7 + base; };

  for (int b = 0; b < d.n_blocks; ++b) {
    int64_t s_q = rec.layer_total(layer_idx(row_q, b));
    int64_t s_k = rec.layer_total(layer_idx(row_k, b));
    int64_t s_v = rec.layer_total(layer_idx(row_v, b));
    int64_t s_score = rec.layer_total(layer_idx(row_score, b));
    int64_t s_ctx = rec.layer_total(layer_idx(row_context, b));
    int64_t s_m1 = rec.layer_total(layer_idx(row_mlp1, b));

    uint64_t dense_proj = static_cast<uint64_t>(d.n_tokens) * d.d_model * d.d_head;
    uint64_t dense_mlp1 = static_cast<uint64_t>(d.n_tokens) * d.d_model * d.d_ff;

    rep.layers.push_back({population_name("q", b), static_cast<uint64_t>(steps_qk) * dense_proj * S,
                          "dense input projection x*W_q, stepped_steps * n_tokens * d_model * d_head"});
    rep.layers.push_back({population_name("k", b), static_cast<uint64_t>(steps_qk) * dense_proj * S,
                          "dense input projection x*W_k, stepped_steps * n_tokens * d_model * d_head"});
    rep.layers.push_back({population_name("v", b), static_cast<uint64_t>(rec.T) * dense_proj * S,
                          "dense input projection x*W_v, T * n_tokens * d_model * d_head"});
    rep.layers.push_back({population_name("score", b),
                          static_cast<uint64_t>(s_q + s_k) * d.d_head,
                          "spike-driven: each Q/K spike feeds d_head accumulate positions of the "
                          "score dot products"});
    rep.layers.push_back({population_name("context", b),
                          static_cast<uint64_t>(s_score) * d.d_head +
                              static_cast<uint64_t>(s_v) * d.d_model,
                          "spike-driven: each score spike pulls a d_head row of V; each V spike "
                          "adds a d_model row of W_o"});
    rep.layers.push_back({population_name("mlp1", b),
                          static_cast<uint64_t>(s_ctx) * d.d_ff +
                              static_cast<uint64_t>(rec.T) * dense_mlp1 * S,
                          "spike-driven context spikes * d_ff, plus dense analog residual "
                          "r1*W_mlp1, T * n_tokens * d_model * d_ff"});
    rep.layers.push_back({population_name("mlp2", b), static_cast<uint64_t>(s_m1) * d.d_model,
                          "spike-driven: each mlp1 spike adds a d_model row of W_mlp2"});
  }

  for (const OpsLayer& l : rep.layers) rep.total += l.ops;
  for (int b = 0; b < d.n_blocks; ++b)
    rep.qk_score_ops += rep.layers[b * 7 + 0].ops + rep.layers[b * 7 + 1].ops +
                        rep.layers[b * 7 + 3].ops;
  return rep;
}

std::string OpsReport::to_json() const {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const OpsLayer& l : layers)
    j["layers"].push_back({{"layer", l.layer}, {"ops", l.ops}, {"formula", l.formula}});
  j["total"] = total;
  j["qk_score_ops"] = qk_score_ops;
  j["mean_spike_count_definition"] = "total spikes / (T * samples), per layer";
  return j.dump();
}

double accuracy(const std::vector<Tensor>& logits, const std::vector<int>& labels) {
  if (logits.empty()) fail(ErrorCode::invalid_argument, "accuracy: no predictions");
  if (logits.size() != labels.size())
    fail(ErrorCode::dimension, "accuracy: predictions/labels length mismatch");
  int64_t correct = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const Tensor& l = logits[i];
    int best = 0;
    for (int j = 1; j < l.cols(); ++j)
      if (l.values[j] > l.values[best]) best = j;  // ties keep the lowest index
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / logits.size();
}

Tensor attention_heatmap(const ScorePairCounts& pairs) {
  if (pairs.n < 1 || pairs.sample_count < 1 || pairs.T < 1)
    fail(ErrorCode::invalid_argument, "heatmap: empty pair counts");
  Tensor rates(pairs.n, pairs.n);
  double denom = static_cast<double>(pairs.T) * pairs.sample_count;
  for (size_t i = 0; i < pairs.counts.size(); ++i) {
    double r = static_cast<double>(pairs.counts[i]) / denom;
    if (r < 0.0 || r > 1.0) fail(ErrorCode::accounting, "heatmap: rate outside [0, 1]");
    rates.values[i] = r;
  }
  return rates;
}

namespace {

const char* metrics_comment =
    "# mean_spike_count = total spikes / (T x samples) per layer; synops formulas are carried in "
    "the ops report (infer --ops)\n";
const char* metrics_header = "run_id,mode,T,rho,gain,layer,mean_spike_count,synops,accuracy\n";

std::string metrics_row(const BatchResult& res, const std::string& run_id,
                        const std::string& layer, double msc, const std::string& synops_text) {
  std::string row = run_id;
  row += ',';
  row += mode_name(res.mode);
  row += ',';
  row += std::to_string(res.T);
  row += ',';
  row += format_g9(res.rho);
  row += ',';
  row += format_g9(res.gain);
  row += ',';
  row += layer;
  row += ',';
  row += format_g9(msc);
  row += ',';
  row += synops_text;
  row += ',';
  row += format_g9(res.acc);
  row += '\n';
  return row;
}

}  // namespace

std::string metrics_total_row(const BatchResult& res, const std::string& run_id) {
  std::vector<double> msc = mean_spike_count(res.record);
  double msc_sum = 0.0;
  for (double m : msc) msc_sum += m;
  return metrics_row(res, run_id, "total", msc_sum, std::to_string(res.ops.total));
}

void write_metrics_csv(const BatchResult& res, const std::string& run_id, const std::string& path,
                       bool per_layer_rows) {
  std::string out = metrics_comment;
  out += metrics_header;
  if (per_layer_rows) {
    std::vector<double> msc = mean_spike_count(res.record);
    for (size_t l = 0; l < res.record.layer_names.size(); ++l)
      out += metrics_row(res, run_id, res.record.layer_names[l], msc[l],
                         std::to_string(res.ops.layers[l].ops));
  }
  out += metrics_total_row(res, run_id);
  write_file_atomic(path, out);
}

void write_heatmap_csv(const ScorePairCounts& pairs, const std::string& path) {
  Tensor rates = attention_heatmap(pairs);
  std::string out = "q\\k";
  for (int j = 0; j < pairs.n; ++j) out += ",k" + std::to_string(j);
  out += '\n';
  for (int i = 0; i < pairs.n; ++i) {
    out += "q" + std::to_string(i);
    for (int j = 0; j < pairs.n; ++j) {
      out += ',';
      out += format_g9(rates.at(i, j));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_compare_csv(const BatchResult& sa, const BatchResult& psa, const std::string& run_id,
                       const std::string& path) {
  std::string out = metrics_comment;
  out += metrics_header;
  out += metrics_total_row(sa, run_id);
  out += metrics_total_row(psa, run_id);

  // Reduction row: mean_spike_count column carries the Q/K spike-count
  // reduction, synops carries the Q/K+score accumulate-op reduction,
  // accuracy carries the SA-minus-PSA accuracy delta.
  auto qk_spikes = [](const BatchResult& r) {
    int64_t n = 0;
    for (size_t l = 0; l < r.record.layer_names.size(); ++l) {
      const std::string& name = r.record.layer_names[l];
      if (name.rfind("q", 0) == 0 || name.rfind("k", 0) == 0)
        n += r.record.layer_total(static_cast<int>(l));
    }
    return n;
  };
  double spike_red = 0.0;
  if (int64_t sa_qk = qk_spikes(sa); sa_qk > 0)
    spike_red = 1.0 - static_cast<double>(qk_spikes(psa)) / static_cast<double>(sa_qk);
  double ops_red = 0.0;
  if (sa.ops.qk_score_ops > 0)
    ops_red = 1.0 - static_cast<double>(psa.ops.qk_score_ops) /
                        static_cast<double>(sa.ops.qk_score_ops);

  std::string row = run_id;
  row += ",reduction,";
  row += std::to_string(psa.T);
  row += ',';
  row += format_g9(psa.rho);
  row += ',';
  row += format_g9(psa.gain);
  row += ",qk+score,";
  row += format_g9(spike_red);
  row += ',';
  row += format_g9(ops_red);
  row += ',';
  row += format_g9(sa.acc - psa.acc);
  row += '\n';
  out += row;
  write_file_atomic(path, out);
}

void write_sweep_csv(const std::vector<BatchResult>& runs, const std::string& run_id,
                     const std::string& path) {
  if (runs.empty()) fail(ErrorCode::invalid_argument, "sweep: no runs");
  std::string out = metrics_comment;
  out += metrics_header;
  for (const BatchResult& r : runs) out += metrics_total_row(r, run_id);
  write_file_atomic(path, out);
}

}  // namespace est
