#include <doctest.h>

#include <cmath>
#include <vector>

#include "ann.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace est;

namespace {

AnnParams ones_model() {
  // Smallest possible network with every weight at 1: each stage doubles or
  // squares predictably, so the whole trace is checkable by hand.
  AnnDims dims;
  dims.n_tokens = 1;
  dims.d_model = 1;
  dims.d_head = 1;
  dims.d_ff = 1;
  dims.n_blocks = 1;
  dims.n_classes = 2;
  AnnParams p;
  p.dims = dims;
  BlockWeights w;
  w.w_q = Tensor::from_rows({{1}});
  w.w_k = Tensor::from_rows({{1}});
  w.w_v = Tensor::from_rows({{1}});
  w.w_o = Tensor::from_rows({{1}});
  w.w_mlp1 = Tensor::from_rows({{1}});
  w.w_mlp2 = Tensor::from_rows({{1}});
  p.blocks.push_back(w);
  p.w_cls = Tensor::from_rows({{1, 1}});
  return p;
}

// Plain-loop duplicate of the forward pass, written independently of the
// Tensor helpers. Summation order matches (innermost index, left to right).
Tensor forward_by_loops(const AnnParams& p, const Tensor& x0) {
  int N = p.dims.n_tokens, D = p.dims.d_model, H = p.dims.d_head, F = p.dims.d_ff;
  std::vector<std::vector<double>> x(N, std::vector<double>(D));
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) x[i][d] = x0.at(i, d);

  auto relu_s = [](double v) { return v > 0.0 ? v : 0.0; };

  for (const BlockWeights& w : p.blocks) {
    std::vector<std::vector<double>> q(N, std::vector<double>(H)), k = q, v = q;
    for (int i = 0; i < N; ++i)
      for (int h = 0; h < H; ++h) {
        double sq = 0, sk = 0, sv = 0;
        for (int d = 0; d < D; ++d) {
          sq += x[i][d] * w.w_q.at(d, h);
          sk += x[i][d] * w.w_k.at(d, h);
          sv += x[i][d] * w.w_v.at(d, h);
        }
        q[i][h] = relu_s(sq);
        k[i][h] = relu_s(sk);
        v[i][h] = relu_s(sv);
      }
    std::vector<std::vector<double>> a(N, std::vector<double>(N));
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        double s = 0;
        for (int h = 0; h < H; ++h) s += q[i][h] * k[j][h];
        a[i][j] = relu_s(s * (1.0 / H));  // scores divide by the head width itself
      }
    std::vector<std::vector<double>> av(N, std::vector<double>(H));
    for (int i = 0; i < N; ++i)
      for (int h = 0; h < H; ++h) {
        double s = 0;
        for (int j = 0; j < N; ++j) s += a[i][j] * v[j][h];
        av[i][h] = s;
      }
    std::vector<std::vector<double>> r1(N, std::vector<double>(D));
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < D; ++d) {
        double s = 0;
        for (int h = 0; h < H; ++h) s += av[i][h] * w.w_o.at(h, d);
        r1[i][d] = x[i][d] + relu_s(s);
      }
    std::vector<std::vector<double>> m1(N, std::vector<double>(F));
    for (int i = 0; i < N; ++i)
      for (int f = 0; f < F; ++f) {
        double s = 0;
        for (int d = 0; d < D; ++d) s += r1[i][d] * w.w_mlp1.at(d, f);
        m1[i][f] = relu_s(s);
      }
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < D; ++d) {
        double s = 0;
        for (int f = 0; f < F; ++f) s += m1[i][f] * w.w_mlp2.at(f, d);
        x[i][d] = r1[i][d] + relu_s(s);
      }
  }

  Tensor logits(1, p.dims.n_classes);
  for (int c = 0; c < p.dims.n_classes; ++c) {
    double s = 0;
    for (int d = 0; d < D; ++d) {
      double pooled = 0;
      for (int i = 0; i < N; ++i) pooled += x[i][d];
      s += (pooled / N) * p.w_cls.at(d, c);
    }
    logits.at(0, c) = s;
  }
  return logits;
}

Tensor random_input(const AnnDims& dims, Rng& rng) {
  Tensor x(dims.n_tokens, dims.d_model);
  for (auto& v : x.values) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("hand trace: all-ones weights double and square as expected") {
  AnnParams p = ones_model();
  Tensor x = Tensor::from_rows({{2}});
  ForwardCache fc;
  Tensor logits = ann_forward(p, x, &fc);
  const BlockCache& c = fc.blocks[0];
  CHECK(c.q.at(0, 0) == 2.0);
  CHECK(c.k.at(0, 0) == 2.0);
  CHECK(c.v.at(0, 0) == 2.0);
  CHECK(c.a.at(0, 0) == 4.0);     // q*k / d_head = 4/1
  CHECK(c.av.at(0, 0) == 8.0);    // a*v
  CHECK(c.ctx.at(0, 0) == 8.0);
  CHECK(c.r1.at(0, 0) == 10.0);   // x + ctx
  CHECK(c.m1.at(0, 0) == 10.0);
  CHECK(c.m2.at(0, 0) == 10.0);
  CHECK(c.r2.at(0, 0) == 20.0);   // r1 + m2
  CHECK(logits.at(0, 0) == 20.0);
  CHECK(logits.at(0, 1) == 20.0);
}

TEST_CASE("forward matches an independent plain-loop implementation") {
  AnnDims dims;
  dims.n_tokens = 4;
  dims.d_model = 8;
  dims.d_head = 4;
  dims.d_ff = 16;
  dims.n_classes = 3;
  for (int blocks : {1, 2}) {
    dims.n_blocks = blocks;
    AnnParams p = ann_init(dims, 11);
    Rng rng(22);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor x = random_input(dims, rng);
      Tensor got = ann_forward(p, x);
      Tensor want = forward_by_loops(p, x);
      CHECK(max_abs_diff(got, want) <= 1e-10);
    }
  }
}

TEST_CASE("logits are linear in the classifier weights") {
  AnnDims dims;
  dims.n_tokens = 3;
  dims.d_model = 4;
  dims.d_head = 2;
  dims.d_ff = 4;
  dims.n_classes = 2;
  AnnParams p = ann_init(dims, 5);
  Rng rng(6);
  Tensor x = random_input(dims, rng);
  Tensor base = ann_forward(p, x);
  AnnParams scaled = p;
  scaled.w_cls = scale(p.w_cls, 3.0);
  Tensor got = ann_forward(scaled, x);
  CHECK(max_abs_diff(got, scale(base, 3.0)) <= 1e-12);
}

TEST_CASE("softmax cross entropy on symmetric logits") {
  Tensor logits = Tensor::from_rows({{0, 0}});
  Tensor grad;
  double loss = softmax_cross_entropy(logits, 0, &grad);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(grad.at(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(grad.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy is shift-invariant and rejects bad labels") {
  Tensor a = Tensor::from_rows({{1.0, -2.0, 0.5}});
  Tensor b = Tensor::from_rows({{1001.0, 998.0, 1000.5}});  // same up to a constant
  CHECK(softmax_cross_entropy(a, 2) == doctest::Approx(softmax_cross_entropy(b, 2)).epsilon(1e-9));
  CHECK_THROWS_AS(softmax_cross_entropy(a, 3), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(a, -1), Error);
}

TEST_CASE("analytic gradients match central differences") {
  AnnDims dims;
  dims.n_tokens = 3;
  dims.d_model = 4;
  dims.d_head = 2;
  dims.d_ff = 4;
  dims.n_classes = 2;
  dims.n_blocks = 1;
  AnnParams p = ann_init(dims, 17);
  Rng rng(18);
  Tensor x = random_input(dims, rng);
  int label = 1;

  ForwardCache fc;
  Tensor logits = ann_forward(p, x, &fc);
  Tensor grad_logits;
  softmax_cross_entropy(logits, label, &grad_logits);
  AnnGrads g = ann_backward(p, fc, grad_logits);

  const double h = 1e-5;
  double worst = 0.0;
  auto check_block = [&](Tensor& w, const Tensor& gw) {
    for (int64_t i = 0; i < w.size(); ++i) {
      double keep = w.values[i];
      w.values[i] = keep + h;
      double up = softmax_cross_entropy(ann_forward(p, x), label);
      w.values[i] = keep - h;
      double dn = softmax_cross_entropy(ann_forward(p, x), label);
      w.values[i] = keep;
      double fd = (up - dn) / (2 * h);
      double denom = std::max({std::fabs(fd), std::fabs(gw.values[i]), 1e-6});
      worst = std::max(worst, std::fabs(fd - gw.values[i]) / denom);
    }
  };
  check_block(p.blocks[0].w_q, g.blocks[0].w_q);
  check_block(p.blocks[0].w_k, g.blocks[0].w_k);
  check_block(p.blocks[0].w_v, g.blocks[0].w_v);
  check_block(p.blocks[0].w_o, g.blocks[0].w_o);
  check_block(p.blocks[0].w_mlp1, g.blocks[0].w_mlp1);
  check_block(p.blocks[0].w_mlp2, g.blocks[0].w_mlp2);
  check_block(p.w_cls, g.w_cls);
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradients vanish behind a dead relu") {
  AnnDims dims;
  dims.n_tokens = 2;
  dims.d_model = 3;
  dims.d_head = 2;
  dims.d_ff = 3;
  dims.n_classes = 2;
  AnnParams p = ann_init(dims, 31);
  // Push every first-mlp pre-activation negative: its output is zero, so the
  // loss cannot depend on W_mlp2 and its gradient must be exactly zero.
  for (auto& v : p.blocks[0].w_mlp1.values) v = -std::fabs(v) - 1.0;
  Tensor x = Tensor::from_rows({{0.5, 0.25, 0.75}, {1.0, 0.1, 0.2}});
  ForwardCache fc;
  Tensor logits = ann_forward(p, x, &fc);
  Tensor grad_logits;
  softmax_cross_entropy(logits, 0, &grad_logits);
  AnnGrads g = ann_backward(p, fc, grad_logits);
  for (double v : g.blocks[0].w_mlp2.values) CHECK(v == 0.0);
}

TEST_CASE("backward rejects a cache built against different params") {
  AnnDims dims;
  dims.n_tokens = 2;
  dims.d_model = 3;
  dims.d_head = 2;
  dims.d_ff = 3;
  dims.n_classes = 2;
  AnnParams p = ann_init(dims, 1);
  Rng rng(2);
  Tensor x = random_input(dims, rng);
  ForwardCache fc;
  ann_forward(p, x, &fc);
  AnnParams other = ann_init(dims, 99);
  Tensor grad = Tensor::from_rows({{1.0, -1.0}});
  try {
    ann_backward(other, fc, grad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

TEST_CASE("training reduces the loss and is deterministic in the seed") {
  Dataset data = gen_synthetic(20, 2, 3, 4, 77);
  AnnDims dims;
  dims.n_tokens = 3;
  dims.d_model = 4;
  dims.d_head = 2;
  dims.d_ff = 8;
  dims.n_classes = 2;

  AnnParams a = ann_init(dims, 7);
  TrainResult ra = train_sgd(a, data, 60, 0.05, 7);
  CHECK(ra.epoch_losses.size() == 60);
  CHECK(ra.epoch_losses.back() < ra.epoch_losses.front());
  CHECK(ra.final_accuracy >= 0.95);

  AnnParams b = ann_init(dims, 7);
  TrainResult rb = train_sgd(b, data, 60, 0.05, 7);
  CHECK(ra.final_loss == rb.final_loss);
  for (size_t i = 0; i < a.blocks.size(); ++i)
    CHECK(max_abs_diff(a.blocks[i].w_q, b.blocks[i].w_q) == 0.0);
  CHECK(max_abs_diff(a.w_cls, b.w_cls) == 0.0);
}

TEST_CASE("training with a small learning rate never increases the loss") {
  Dataset data = gen_synthetic(10, 2, 3, 4, 123);
  AnnDims dims;
  dims.n_tokens = 3;
  dims.d_model = 4;
  dims.d_head = 2;
  dims.d_ff = 8;
  dims.n_classes = 2;
  AnnParams p = ann_init(dims, 9);
  TrainResult r = train_sgd(p, data, 40, 0.005, 9);
  for (size_t e = 1; e < r.epoch_losses.size(); ++e)
    CHECK(r.epoch_losses[e] <= r.epoch_losses[e - 1] + 1e-12);
}

TEST_CASE("dims validation") {
  AnnDims dims;
  dims.n_tokens = 2;
  dims.d_model = 3;
  dims.d_head = 2;
  dims.d_ff = 3;
  dims.n_classes = 2;
  dims.n_blocks = 5;
  CHECK_THROWS_AS(dims.validate(), Error);
  dims.n_blocks = 0;
  CHECK_THROWS_AS(dims.validate(), Error);
  dims.n_blocks = 4;
  CHECK_NOTHROW(dims.validate());
  dims.d_model = 0;
  CHECK_THROWS_AS(dims.validate(), Error);
}

TEST_CASE("forward rejects inputs of the wrong shape") {
  AnnDims dims;
  dims.n_tokens = 2;
  dims.d_model = 3;
  dims.d_head = 2;
  dims.d_ff = 3;
  dims.n_classes = 2;
  AnnParams p = ann_init(dims, 3);
  CHECK_THROWS_AS(ann_forward(p, Tensor::zeros(3, 3)), Error);
  CHECK_THROWS_AS(ann_forward(p, Tensor::zeros(2, 2)), Error);
}
