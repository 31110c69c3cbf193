#include "snn.hpp"

#include <cmath>
#include <exception>
#include <thread>

#include "error.hpp"

namespace est {

PsaSchedule PsaSchedule::make(int T, double rho, bool fixed_unit_gain) {
  if (T < 1) fail(ErrorCode::invalid_argument, "schedule: T must be >= 1");
  if (!(rho > 0.0) || rho > 1.0)
    fail(ErrorCode::invalid_argument, "schedule: rho must be in (0, 1]");
  PsaSchedule s;
  s.T = T;
  s.rho = rho;
  s.t_qk = static_cast<int>(std::ceil(rho * T));
  if (s.t_qk < 1) s.t_qk = 1;
  if (s.t_qk > T) s.t_qk = T;
  s.auto_gain = !fixed_unit_gain;
  if (rho == 1.0) {
    s.gain = 1.0;  // full window: nothing to compensate
  } else {
    s.gain = fixed_unit_gain ? 1.0 : static_cast<double>(T) / s.t_qk;
  }
  return s;
}

PsaSchedule PsaSchedule::with_timesteps(int new_T) const {
  PsaSchedule s = make(new_T, rho, !auto_gain);
  return s;
}

void PsaSchedule::validate() const {
  if (T < 1) fail(ErrorCode::config, "schedule: T must be >= 1");
  if (!(rho > 0.0) || rho > 1.0) fail(ErrorCode::config, "schedule: rho must be in (0, 1]");
  if (t_qk < 1 || t_qk > T || t_qk != static_cast<int>(std::ceil(rho * T)))
    fail(ErrorCode::config, "schedule: t_qk does not match ceil(rho * T)");
  if (!(gain > 0.0)) fail(ErrorCode::config, "schedule: gain must be > 0");
  if (rho == 1.0 && gain != 1.0) fail(ErrorCode::config, "schedule: rho = 1 requires gain = 1");
}

const char* mode_name(AttentionMode m) { return m == AttentionMode::sa ? "sa" : "psa"; }

std::string population_name(const char* base, int block) {
  return block == 0 ? std::string(base) : std::string(base) + std::to_string(block);
}

double SnnModel::threshold(const std::string& population) const {
  auto it = thresholds.find(population);
  if (it == thresholds.end())
    fail(ErrorCode::config, "model has no threshold for population '" + population + "'");
  return it->second;
}

std::vector<std::string> SnnModel::population_names() const {
  static const char* bases[7] = {"q", "k", "v", "score", "context", "mlp1", "mlp2"};
  std::vector<std::string> names;
  for (int b = 0; b < params.dims.n_blocks; ++b)
    for (const char* base : bases) names.push_back(population_name(base, b));
  return names;
}

void SnnModel::validate() const {
  params.validate();
  schedule.validate();
  if (mode == AttentionMode::sa && schedule.rho != 1.0)
    fail(ErrorCode::config, "sa model must carry a rho = 1 schedule");
  for (const std::string& name : population_names()) {
    double v = threshold(name);
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrorCode::config, "threshold for '" + name + "' must be finite and > 0");
  }
}

SpikeTrain SpikeTrain::make(int T, int rows, int cols) {
  if (T < 1 || rows < 1 || cols < 1) fail(ErrorCode::invalid_argument, "spike train: bad shape");
  SpikeTrain s;
  s.T = T;
  s.rows = rows;
  s.cols = cols;
  s.data.assign(static_cast<size_t>(T) * rows * cols, 0);
  return s;
}

uint8_t SpikeTrain::at(int t, int r, int c) const {
  if (t < 1 || t > T) fail(ErrorCode::sequencing, "spike train: step out of range");
  return data[(static_cast<size_t>(t - 1) * rows + r) * cols + c];
}

void SpikeTrain::set(int t, const std::vector<uint8_t>& frame) {
  if (t < 1 || t > T) fail(ErrorCode::sequencing, "spike train: step out of range");
  if (frame.size() != static_cast<size_t>(rows) * cols)
    fail(ErrorCode::dimension, "spike train: frame size mismatch");
  std::copy(frame.begin(), frame.end(), data.begin() + static_cast<size_t>(t - 1) * rows * cols);
}

uint64_t SpikeTrain::total() const {
  uint64_t n = 0;
  for (uint8_t b : data) n += b;
  return n;
}

namespace {

int64_t count_ones(const std::vector<uint8_t>& bits) {
  int64_t n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

}  // namespace

SnnRunner::SnnRunner(const SnnModel& model, int T) : SnnRunner(model, T, Options{}) {}

SnnRunner::SnnRunner(const SnnModel& model, int T, Options opt) : model_(model), opt_(opt) {
  model.validate();
  if (T < 1) fail(ErrorCode::invalid_argument, "runner: T must be >= 1");
  T_ = T;

  const AnnDims& d = model.params.dims;
  std::vector<std::string> names = model.population_names();
  std::vector<int> sizes;
  for (int b = 0; b < d.n_blocks; ++b) {
    BlockStates st;
    st.q = if_init(d.n_tokens * d.d_head, model.threshold(population_name("q", b)));
    st.k = if_init(d.n_tokens * d.d_head, model.threshold(population_name("k", b)));
    st.v = if_init(d.n_tokens * d.d_head, model.threshold(population_name("v", b)));
    st.score = if_init(d.n_tokens * d.n_tokens, model.threshold(population_name("score", b)));
    st.context = if_init(d.n_tokens * d.d_model, model.threshold(population_name("context", b)));
    st.mlp1 = if_init(d.n_tokens * d.d_ff, model.threshold(population_name("mlp1", b)));
    st.mlp2 = if_init(d.n_tokens * d.d_model, model.threshold(population_name("mlp2", b)));
    states_.push_back(std::move(st));
    sizes.insert(sizes.end(),
                 {d.n_tokens * d.d_head, d.n_tokens * d.d_head, d.n_tokens * d.d_head,
                  d.n_tokens * d.n_tokens, d.n_tokens * d.d_model, d.n_tokens * d.d_ff,
                  d.n_tokens * d.d_model});
  }
  record_ = SpikeRecord::make(names, sizes, T);
  readout_accum_ = Tensor(d.n_tokens, d.d_model);

  if (opt_.trace) {
    for (int b = 0; b < d.n_blocks; ++b) {
      trace_[population_name("q", b)] = SpikeTrain::make(T, d.n_tokens, d.d_head);
      trace_[population_name("k", b)] = SpikeTrain::make(T, d.n_tokens, d.d_head);
      trace_[population_name("v", b)] = SpikeTrain::make(T, d.n_tokens, d.d_head);
      trace_[population_name("score", b)] = SpikeTrain::make(T, d.n_tokens, d.n_tokens);
      trace_[population_name("context", b)] = SpikeTrain::make(T, d.n_tokens, d.d_model);
      trace_[population_name("mlp1", b)] = SpikeTrain::make(T, d.n_tokens, d.d_ff);
      trace_[population_name("mlp2", b)] = SpikeTrain::make(T, d.n_tokens, d.d_model);
    }
  }
  if (opt_.pair_counts) pairs_ = ScorePairCounts::make(d.n_tokens, T);
}

SnnRunner::QkvOut SnnRunner::qkv_step(int t, int block, const Tensor& input_current) {
  if (t < 1 || t > T_)
    fail(ErrorCode::sequencing, "qkv_step: step " + std::to_string(t) + " outside [1, " +
                                    std::to_string(T_) + "]");
  const AnnDims& d = model_.params.dims;
  const BlockWeights& w = model_.params.blocks[block];
  BlockStates& st = states_[block];
  if (st.v.t != t - 1)
    fail(ErrorCode::sequencing, "qkv_step: block " + std::to_string(block) + " expected step " +
                                    std::to_string(st.v.t + 1) + ", got " + std::to_string(t));

  PsaSchedule sched = model_.schedule.with_timesteps(T_);
  bool active = model_.mode == AttentionMode::sa || t <= sched.t_qk;

  QkvOut out;
  out.qk_active = active;
  if (active) {
    // Q and K integrate the projected input like any other step.
    out.q = if_step(st.q, matmul(input_current, w.w_q).values);
    out.k = if_step(st.k, matmul(input_current, w.w_k).values);
  } else {
    // Past the partial window the Q/K populations are skipped outright:
    // no current, no membrane update, no spikes. This is where the work
    // saving comes from.
    out.q.assign(static_cast<size_t>(d.n_tokens) * d.d_head, 0);
    out.k.assign(static_cast<size_t>(d.n_tokens) * d.d_head, 0);
  }
  out.v = if_step(st.v, matmul(input_current, w.w_v).values);

  record_.add(layer_index(block, 0), t, count_ones(out.q));
  record_.add(layer_index(block, 1), t, count_ones(out.k));
  record_.add(layer_index(block, 2), t, count_ones(out.v));
  if (opt_.trace) {
    trace_[population_name("q", block)].set(t, out.q);
    trace_[population_name("k", block)].set(t, out.k);
    trace_[population_name("v", block)].set(t, out.v);
  }
  return out;
}

std::vector<uint8_t> SnnRunner::score_step(int t, int block, const std::vector<uint8_t>& q_t,
                                           const std::vector<uint8_t>& k_t) {
  if (t < 1 || t > T_) fail(ErrorCode::sequencing, "score_step: step out of range");
  const AnnDims& d = model_.params.dims;
  BlockStates& st = states_[block];
  if (q_t.size() != static_cast<size_t>(d.n_tokens) * d.d_head ||
      k_t.size() != static_cast<size_t>(d.n_tokens) * d.d_head)
    fail(ErrorCode::dimension, "score_step: spike frame size mismatch");

  PsaSchedule sched = model_.schedule.with_timesteps(T_);
  bool active = model_.mode == AttentionMode::sa || t <= sched.t_qk;

  // Input current per (i, j): the spike-train dot product over the head
  // dimension, divided by d_head, in activation units (each spike is worth
  // its source threshold), with the schedule gain during the active window.
  // The population still steps with zero current after the window so
  // residual charge can fire.
  Tensor cur(d.n_tokens, d.n_tokens);
  if (active) {
    double unit = model_.threshold(population_name("q", block)) *
                  model_.threshold(population_name("k", block));
    for (int i = 0; i < d.n_tokens; ++i) {
      for (int j = 0; j < d.n_tokens; ++j) {
        int pc = 0;
        for (int e = 0; e < d.d_head; ++e)
          pc += q_t[static_cast<size_t>(i) * d.d_head + e] & k_t[static_cast<size_t>(j) * d.d_head + e];
        cur.at(i, j) = sched.gain * unit * (static_cast<double>(pc) / d.d_head);
      }
    }
  }
  std::vector<uint8_t> a = if_step(st.score, cur.values);

  record_.add(layer_index(block, 3), t, count_ones(a));
  if (opt_.trace) trace_[population_name("score", block)].set(t, a);
  if (opt_.pair_counts && block == 0)
    for (size_t i = 0; i < a.size(); ++i) pairs_.counts[i] += a[i];
  return a;
}

std::vector<uint8_t> SnnRunner::context_step(int block, const std::vector<uint8_t>& a_t,
                                             const std::vector<uint8_t>& v_t) {
  const AnnDims& d = model_.params.dims;
  const BlockWeights& w = model_.params.blocks[block];
  BlockStates& st = states_[block];
  if (a_t.size() != static_cast<size_t>(d.n_tokens) * d.n_tokens ||
      v_t.size() != static_cast<size_t>(d.n_tokens) * d.d_head)
    fail(ErrorCode::dimension, "context_step: spike frame size mismatch");

  // (a_t . v_t) is an integer matrix; scale it into activation units before
  // the output projection.
  double unit = model_.threshold(population_name("score", block)) *
                model_.threshold(population_name("v", block));
  Tensor av(d.n_tokens, d.d_head);
  for (int i = 0; i < d.n_tokens; ++i) {
    for (int e = 0; e < d.d_head; ++e) {
      int acc = 0;
      for (int j = 0; j < d.n_tokens; ++j)
        acc += a_t[static_cast<size_t>(i) * d.n_tokens + j] * v_t[static_cast<size_t>(j) * d.d_head + e];
      av.at(i, e) = unit * acc;
    }
  }
  Tensor cur = matmul(av, w.w_o);
  std::vector<uint8_t> ctx = if_step(st.context, cur.values);

  int t = static_cast<int>(st.context.t);
  record_.add(layer_index(block, 4), t, count_ones(ctx));
  if (opt_.trace) trace_[population_name("context", block)].set(t, ctx);
  return ctx;
}

void SnnRunner::step(const Tensor& x) {
  if (t_ >= T_) fail(ErrorCode::sequencing, "step: already ran " + std::to_string(T_) + " steps");
  const AnnDims& d = model_.params.dims;
  if (x.rank() != 2 || x.rows() != d.n_tokens || x.cols() != d.d_model)
    fail(ErrorCode::dimension, "step: input frame has shape " + x.shape_str());
  int t = ++t_;

  Tensor cur = x;
  for (int b = 0; b < d.n_blocks; ++b) {
    const BlockWeights& w = model_.params.blocks[b];
    BlockStates& st = states_[b];

    QkvOut qkv = qkv_step(t, b, cur);
    std::vector<uint8_t> a = score_step(t, b, qkv.q, qkv.k);
    std::vector<uint8_t> ctx = context_step(b, a, qkv.v);

    // First residual: the block input current plus the context spikes in
    // activation units.
    double v_ctx = model_.threshold(population_name("context", b));
    Tensor r1_cur = cur;
    for (int i = 0; i < d.n_tokens; ++i)
      for (int j = 0; j < d.d_model; ++j)
        r1_cur.at(i, j) += v_ctx * ctx[static_cast<size_t>(i) * d.d_model + j];

    std::vector<uint8_t> m1 = if_step(st.mlp1, matmul(r1_cur, w.w_mlp1).values);
    record_.add(layer_index(b, 5), t, count_ones(m1));
    if (opt_.trace) trace_[population_name("mlp1", b)].set(t, m1);

    double v_m1 = model_.threshold(population_name("mlp1", b));
    Tensor m1_units(d.n_tokens, d.d_ff);
    for (int i = 0; i < d.n_tokens; ++i)
      for (int j = 0; j < d.d_ff; ++j)
        m1_units.at(i, j) = v_m1 * m1[static_cast<size_t>(i) * d.d_ff + j];

    std::vector<uint8_t> m2 = if_step(st.mlp2, matmul(m1_units, w.w_mlp2).values);
    record_.add(layer_index(b, 6), t, count_ones(m2));
    if (opt_.trace) trace_[population_name("mlp2", b)].set(t, m2);

    // Second residual feeds the next block (or the readout) as current.
    double v_m2 = model_.threshold(population_name("mlp2", b));
    Tensor r2_cur = r1_cur;
    for (int i = 0; i < d.n_tokens; ++i)
      for (int j = 0; j < d.d_model; ++j)
        r2_cur.at(i, j) += v_m2 * m2[static_cast<size_t>(i) * d.d_model + j];
    cur = r2_cur;
  }

  readout_accum_ = add(readout_accum_, cur);
}

Tensor SnnRunner::finish() {
  if (t_ != T_)
    fail(ErrorCode::sequencing, "finish: ran " + std::to_string(t_) + " of " + std::to_string(T_) +
                                    " steps");
  const AnnDims& d = model_.params.dims;
  Tensor pooled(1, d.d_model);
  for (int j = 0; j < d.d_model; ++j) {
    double acc = 0.0;
    for (int i = 0; i < d.n_tokens; ++i) acc += readout_accum_.at(i, j);
    pooled.at(0, j) = acc / (static_cast<double>(d.n_tokens) * T_);
  }
  Tensor logits = matmul(pooled, model_.params.w_cls);
  check_finite(logits, "snn logits");
  return logits;
}

uint64_t SnnRunner::fires_total() const {
  uint64_t n = 0;
  for (const BlockStates& st : states_)
    n += st.q.fires_total + st.k.fires_total + st.v.fires_total + st.score.fires_total +
         st.context.fires_total + st.mlp1.fires_total + st.mlp2.fires_total;
  return n;
}

Tensor snn_forward(const SnnModel& model, const Tensor& x, int T, SpikeRecord* record,
                   SnnTrace* trace, ScorePairCounts* pairs) {
  SnnRunner::Options opt;
  opt.trace = trace != nullptr;
  opt.pair_counts = pairs != nullptr;
  SnnRunner runner(model, T, opt);
  CurrentStream stream = encode_direct(x, T);
  for (int t = 1; t <= T; ++t) runner.step(stream.at(t));
  Tensor logits = runner.finish();

  // Cross-check the record against the neuron-level lifetime counters before
  // handing it out.
  if (static_cast<uint64_t>(runner.record().total()) != runner.fires_total())
    fail(ErrorCode::accounting, "snn_forward: spike record disagrees with neuron counters");

  if (record) {
    SpikeRecord r = runner.record();
    r.sample_count = 1;
    *record = std::move(r);
  }
  if (trace) *trace = runner.trace();
  if (pairs) {
    ScorePairCounts pc = runner.pair_counts();
    pc.sample_count = 1;
    *pairs = std::move(pc);
  }
  return logits;
}

BatchResult snn_infer_batch(const SnnModel& model, const Dataset& data, int T, int workers) {
  model.validate();
  data.validate();
  if (T < 1) fail(ErrorCode::invalid_argument, "infer: T must be >= 1");
  if (workers < 1) fail(ErrorCode::invalid_argument, "infer: workers must be >= 1");
  const AnnDims& d = model.params.dims;
  if (data.n_tokens != d.n_tokens || data.d_model != d.d_model)
    fail(ErrorCode::dimension, "infer: dataset shape does not match model dims");
  if (data.n_classes > d.n_classes)
    fail(ErrorCode::dimension, "infer: dataset has more classes than the model");

  const int S = data.size();
  int W = std::min(workers, S);

  BatchResult res;
  res.logits.assign(S, Tensor());
  res.T = T;
  res.mode = model.mode;
  PsaSchedule eff = model.schedule.with_timesteps(T);
  res.rho = eff.rho;
  res.gain = eff.gain;

  std::vector<SpikeRecord> records(W);
  std::vector<ScorePairCounts> pair_parts(W);
  std::vector<std::exception_ptr> errors(W);
  std::vector<std::thread> threads;

  // Contiguous slices; every sample writes only its own slot, and the
  // per-worker integer records merge in fixed worker order below.
  int base = S / W, rem = S % W, lo = 0;
  for (int w = 0; w < W; ++w) {
    int n = base + (w < rem ? 1 : 0);
    int hi = lo + n;
    threads.emplace_back([&, w, lo, hi]() {
      try {
        SpikeRecord local;
        ScorePairCounts local_pairs;
        bool first = true;
        for (int i = lo; i < hi; ++i) {
          SpikeRecord rec;
          ScorePairCounts pc;
          res.logits[i] = snn_forward(model, data.inputs[i], T, &rec, nullptr, &pc);
          if (first) {
            local = std::move(rec);
            local_pairs = std::move(pc);
            first = false;
          } else {
            local.merge(rec);
            local_pairs.merge(pc);
          }
        }
        records[w] = std::move(local);
        pair_parts[w] = std::move(local_pairs);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
    lo = hi;
  }
  for (auto& th : threads) th.join();
  for (int w = 0; w < W; ++w)
    if (errors[w]) std::rethrow_exception(errors[w]);

  res.record = std::move(records[0]);
  res.pairs = std::move(pair_parts[0]);
  for (int w = 1; w < W; ++w) {
    res.record.merge(records[w]);
    res.pairs.merge(pair_parts[w]);
  }
  res.record.validate();
  res.acc = accuracy(res.logits, data.labels);
  res.ops = synops(res.record, model);
  return res;
}

}  // namespace est
