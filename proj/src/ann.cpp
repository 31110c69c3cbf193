#include "ann.hpp"

#include <cmath>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace est {

void AnnDims::validate() const {
  if (n_tokens < 1 || d_model < 1 || d_head < 1 || d_ff < 1 || n_classes < 1)
    fail(ErrorCode::invalid_argument, "dims: all sizes must be >= 1");
  if (n_blocks < 1 || n_blocks > 4)
    fail(ErrorCode::invalid_argument, "dims: n_blocks must be in [1, 4]");
}

namespace {

void require_shape(const Tensor& t, int r, int c, const char* name) {
  if (t.rank() != 2 || t.rows() != r || t.cols() != c)
    fail(ErrorCode::dimension, std::string(name) + " has shape " + t.shape_str() + ", expected [" +
                                   std::to_string(r) + "x" + std::to_string(c) + "]");
}

}  // namespace

void AnnParams::validate() const {
  dims.validate();
  if (static_cast<int>(blocks.size()) != dims.n_blocks)
    fail(ErrorCode::dimension, "params: block count does not match dims");
  for (const BlockWeights& b : blocks) {
    require_shape(b.w_q, dims.d_model, dims.d_head, "W_q");
    require_shape(b.w_k, dims.d_model, dims.d_head, "W_k");
    require_shape(b.w_v, dims.d_model, dims.d_head, "W_v");
    require_shape(b.w_o, dims.d_head, dims.d_model, "W_o");
    require_shape(b.w_mlp1, dims.d_model, dims.d_ff, "W_mlp1");
    require_shape(b.w_mlp2, dims.d_ff, dims.d_model, "W_mlp2");
  }
  require_shape(w_cls, dims.d_model, dims.n_classes, "W_cls");
}

uint64_t AnnParams::fingerprint() const {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a over the weight bit patterns
  auto feed = [&h](const Tensor& t) {
    for (double v : t.values) {
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      __builtin_memcpy(&bits, &v, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const BlockWeights& b : blocks) {
    feed(b.w_q);
    feed(b.w_k);
    feed(b.w_v);
    feed(b.w_o);
    feed(b.w_mlp1);
    feed(b.w_mlp2);
  }
  feed(w_cls);
  return h;
}

AnnParams ann_init(const AnnDims& dims, uint64_t seed) {
  dims.validate();
  Rng rng(mix_seed(seed, seed_tag::weights));
  auto draw = [&rng](int r, int c) {
    Tensor t(r, c);
    double s = 1.0 / std::sqrt(static_cast<double>(r));  // scale by fan-in
    for (double& v : t.values) v = s * rng.normal();
    return t;
  };
  AnnParams p;
  p.dims = dims;
  for (int b = 0; b < dims.n_blocks; ++b) {
    BlockWeights w;
    w.w_q = draw(dims.d_model, dims.d_head);
    w.w_k = draw(dims.d_model, dims.d_head);
    w.w_v = draw(dims.d_model, dims.d_head);
    w.w_o = draw(dims.d_head, dims.d_model);
    w.w_mlp1 = draw(dims.d_model, dims.d_ff);
    w.w_mlp2 = draw(dims.d_ff, dims.d_model);
    p.blocks.push_back(std::move(w));
  }
  p.w_cls = draw(dims.d_model, dims.n_classes);
  return p;
}

Tensor ann_forward(const AnnParams& p, const Tensor& x, ForwardCache* cache) {
  p.validate();
  require_shape(x, p.dims.n_tokens, p.dims.d_model, "input");
  check_finite(x, "input");

  if (cache) {
    cache->blocks.clear();
    cache->params_fingerprint = p.fingerprint();
  }

  Tensor cur = x;
  for (const BlockWeights& w : p.blocks) {
    BlockCache c;
    c.x_in = cur;
    c.q_pre = matmul(cur, w.w_q);
    c.q = relu(c.q_pre);
    c.k_pre = matmul(cur, w.w_k);
    c.k = relu(c.k_pre);
    c.v_pre = matmul(cur, w.w_v);
    c.v = relu(c.v_pre);
    c.a_pre = scale(matmul(c.q, transpose(c.k)), 1.0 / p.dims.d_head);
    c.a = relu(c.a_pre);
    c.av = matmul(c.a, c.v);
    c.ctx_pre = matmul(c.av, w.w_o);
    c.ctx = relu(c.ctx_pre);
    c.r1 = add(cur, c.ctx);
    c.m1_pre = matmul(c.r1, w.w_mlp1);
    c.m1 = relu(c.m1_pre);
    c.m2_pre = matmul(c.m1, w.w_mlp2);
    c.m2 = relu(c.m2_pre);
    c.r2 = add(c.r1, c.m2);
    cur = c.r2;
    if (cache) cache->blocks.push_back(std::move(c));
  }

  Tensor pooled(1, p.dims.d_model);
  for (int j = 0; j < p.dims.d_model; ++j) {
    double acc = 0.0;
    for (int i = 0; i < p.dims.n_tokens; ++i) acc += cur.at(i, j);
    pooled.at(0, j) = acc / p.dims.n_tokens;
  }
  Tensor logits = matmul(pooled, p.w_cls);
  check_finite(logits, "logits");

  if (cache) {
    cache->pooled = pooled;
    cache->logits = logits;
  }
  return logits;
}

AnnGrads ann_backward(const AnnParams& p, const ForwardCache& cache, const Tensor& grad_logits) {
  p.validate();
  if (cache.params_fingerprint != p.fingerprint())
    fail(ErrorCode::config, "ann_backward: cache was built against different params");
  if (static_cast<int>(cache.blocks.size()) != p.dims.n_blocks)
    fail(ErrorCode::config, "ann_backward: cache block count mismatch");
  require_shape(grad_logits, 1, p.dims.n_classes, "grad_logits");

  AnnGrads g;
  g.w_cls = matmul(transpose(cache.pooled), grad_logits);
  Tensor grad_pooled = matmul(grad_logits, transpose(p.w_cls));  // 1 x d_model

  // Mean pool spreads the gradient evenly over tokens.
  Tensor grad_cur(p.dims.n_tokens, p.dims.d_model);
  for (int i = 0; i < p.dims.n_tokens; ++i)
    for (int j = 0; j < p.dims.d_model; ++j)
      grad_cur.at(i, j) = grad_pooled.at(0, j) / p.dims.n_tokens;

  g.blocks.resize(p.blocks.size());
  for (int b = p.dims.n_blocks - 1; b >= 0; --b) {
    const BlockWeights& w = p.blocks[b];
    const BlockCache& c = cache.blocks[b];
    BlockWeights& gw = g.blocks[b];

    // r2 = r1 + m2
    Tensor g_m2 = grad_cur;
    Tensor g_r1 = grad_cur;

    Tensor g_m2_pre = relu_gate(g_m2, c.m2_pre);
    gw.w_mlp2 = matmul(transpose(c.m1), g_m2_pre);
    Tensor g_m1 = matmul(g_m2_pre, transpose(w.w_mlp2));

    Tensor g_m1_pre = relu_gate(g_m1, c.m1_pre);
    gw.w_mlp1 = matmul(transpose(c.r1), g_m1_pre);
    g_r1 = add(g_r1, matmul(g_m1_pre, transpose(w.w_mlp1)));

    // r1 = x_in + ctx
    Tensor g_x = g_r1;
    Tensor g_ctx_pre = relu_gate(g_r1, c.ctx_pre);
    gw.w_o = matmul(transpose(c.av), g_ctx_pre);
    Tensor g_av = matmul(g_ctx_pre, transpose(w.w_o));

    Tensor g_a = matmul(g_av, transpose(c.v));
    Tensor g_v = matmul(transpose(c.a), g_av);

    Tensor g_a_pre = relu_gate(g_a, c.a_pre);
    Tensor g_q = scale(matmul(g_a_pre, c.k), 1.0 / p.dims.d_head);
    Tensor g_k = scale(matmul(transpose(g_a_pre), c.q), 1.0 / p.dims.d_head);

    Tensor g_q_pre = relu_gate(g_q, c.q_pre);
    gw.w_q = matmul(transpose(c.x_in), g_q_pre);
    g_x = add(g_x, matmul(g_q_pre, transpose(w.w_q)));

    Tensor g_k_pre = relu_gate(g_k, c.k_pre);
    gw.w_k = matmul(transpose(c.x_in), g_k_pre);
    g_x = add(g_x, matmul(g_k_pre, transpose(w.w_k)));

    Tensor g_v_pre = relu_gate(g_v, c.v_pre);
    gw.w_v = matmul(transpose(c.x_in), g_v_pre);
    g_x = add(g_x, matmul(g_v_pre, transpose(w.w_v)));

    grad_cur = g_x;
  }
  return g;
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* grad_logits) {
  if (logits.rank() != 2 || logits.rows() != 1)
    fail(ErrorCode::dimension, "softmax_cross_entropy: logits must be 1 x n_classes");
  int n = logits.cols();
  if (label < 0 || label >= n)
    fail(ErrorCode::invalid_argument, "softmax_cross_entropy: label out of range");

  double mx = logits.values[0];
  for (double v : logits.values) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits.values) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  double loss = lse - logits.values[label];

  if (grad_logits) {
    *grad_logits = Tensor(1, n);
    for (int j = 0; j < n; ++j)
      grad_logits->values[j] = std::exp(logits.values[j] - lse) - (j == label ? 1.0 : 0.0);
  }
  return loss;
}

namespace {

void accumulate(BlockWeights& acc, const BlockWeights& g) {
  auto addto = [](Tensor& a, const Tensor& b) {
    for (size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
  };
  addto(acc.w_q, g.w_q);
  addto(acc.w_k, g.w_k);
  addto(acc.w_v, g.w_v);
  addto(acc.w_o, g.w_o);
  addto(acc.w_mlp1, g.w_mlp1);
  addto(acc.w_mlp2, g.w_mlp2);
}

void apply_update(Tensor& w, const Tensor& g, double step) {
  for (size_t i = 0; i < w.values.size(); ++i) w.values[i] -= step * g.values[i];
}

int argmax_lowest(const Tensor& logits) {
  int best = 0;
  for (int j = 1; j < logits.cols(); ++j)
    if (logits.values[j] > logits.values[best]) best = j;  // ties keep the lowest index
  return best;
}

}  // namespace

TrainResult train_sgd(AnnParams& p, const Dataset& data, int epochs, double lr, uint64_t seed) {
  p.validate();
  data.validate();
  if (epochs < 1) fail(ErrorCode::invalid_argument, "train_sgd: epochs must be >= 1");
  if (!(lr > 0.0)) fail(ErrorCode::invalid_argument, "train_sgd: lr must be > 0");
  if (data.n_tokens != p.dims.n_tokens || data.d_model != p.dims.d_model)
    fail(ErrorCode::dimension, "train_sgd: dataset shape does not match model dims");
  if (data.n_classes > p.dims.n_classes)
    fail(ErrorCode::dimension, "train_sgd: dataset has more classes than the model");

  Rng rng(mix_seed(seed, seed_tag::training));
  const int S = data.size();
  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.epoch_losses.reserve(epochs);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);

    AnnGrads acc;
    acc.blocks.resize(p.blocks.size());
    for (size_t b = 0; b < p.blocks.size(); ++b) {
      acc.blocks[b].w_q = Tensor(p.dims.d_model, p.dims.d_head);
      acc.blocks[b].w_k = Tensor(p.dims.d_model, p.dims.d_head);
      acc.blocks[b].w_v = Tensor(p.dims.d_model, p.dims.d_head);
      acc.blocks[b].w_o = Tensor(p.dims.d_head, p.dims.d_model);
      acc.blocks[b].w_mlp1 = Tensor(p.dims.d_model, p.dims.d_ff);
      acc.blocks[b].w_mlp2 = Tensor(p.dims.d_ff, p.dims.d_model);
    }
    acc.w_cls = Tensor(p.dims.d_model, p.dims.n_classes);

    double loss_sum = 0.0;
    for (int idx : order) {
      ForwardCache fc;
      Tensor logits = ann_forward(p, data.inputs[idx], &fc);
      Tensor grad_logits;
      loss_sum += softmax_cross_entropy(logits, data.labels[idx], &grad_logits);
      AnnGrads g = ann_backward(p, fc, grad_logits);
      for (size_t b = 0; b < p.blocks.size(); ++b) accumulate(acc.blocks[b], g.blocks[b]);
      for (size_t i = 0; i < acc.w_cls.values.size(); ++i)
        acc.w_cls.values[i] += g.w_cls.values[i];
    }

    double mean_loss = loss_sum / S;
    if (!std::isfinite(mean_loss))
      fail(ErrorCode::divergence, "train_sgd: non-finite loss at epoch " + std::to_string(epoch));
    result.epoch_losses.push_back(mean_loss);

    double step = lr / S;
    for (size_t b = 0; b < p.blocks.size(); ++b) {
      apply_update(p.blocks[b].w_q, acc.blocks[b].w_q, step);
      apply_update(p.blocks[b].w_k, acc.blocks[b].w_k, step);
      apply_update(p.blocks[b].w_v, acc.blocks[b].w_v, step);
      apply_update(p.blocks[b].w_o, acc.blocks[b].w_o, step);
      apply_update(p.blocks[b].w_mlp1, acc.blocks[b].w_mlp1, step);
      apply_update(p.blocks[b].w_mlp2, acc.blocks[b].w_mlp2, step);
    }
    apply_update(p.w_cls, acc.w_cls, step);
  }

  result.final_loss = result.epoch_losses.back();
  result.final_accuracy = ann_accuracy(p, data);
  return result;
}

double ann_accuracy(const AnnParams& p, const Dataset& data) {
  data.validate();
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    Tensor logits = ann_forward(p, data.inputs[i]);
    if (argmax_lowest(logits) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

}  // namespace est
