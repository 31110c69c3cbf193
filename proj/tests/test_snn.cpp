#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ann.hpp"
#include "converter.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "snn.hpp"
#include "tensor.hpp"

using namespace est;

namespace {

AnnDims small_dims(int n_tokens = 4, int d_model = 8, int d_head = 4) {
  AnnDims d;
  d.n_tokens = n_tokens;
  d.d_model = d_model;
  d.d_head = d_head;
  d.d_ff = 8;
  d.n_blocks = 1;
  d.n_classes = 2;
  return d;
}

std::map<std::string, double> unit_thresholds(const AnnDims& dims) {
  std::map<std::string, double> th;
  for (int b = 0; b < dims.n_blocks; ++b)
    for (const char* base : {"q", "k", "v", "score", "context", "mlp1", "mlp2"})
      th[population_name(base, b)] = 1.0;
  return th;
}

SnnModel unit_model(const AnnDims& dims, uint64_t seed, AttentionMode mode, int T, double rho,
                    bool fixed_unit_gain) {
  AnnParams p = ann_init(dims, seed);
  return convert(p, unit_thresholds(dims), mode, PsaSchedule::make(T, rho, fixed_unit_gain));
}

Tensor random_input(const AnnDims& dims, Rng& rng, double amplitude = 2.0) {
  Tensor x(dims.n_tokens, dims.d_model);
  for (auto& v : x.values) v = rng.uniform() * amplitude;
  return x;
}

}  // namespace

TEST_CASE("partial schedule arithmetic") {
  PsaSchedule s = PsaSchedule::make(64, 0.5, false);
  CHECK(s.t_qk == 32);
  CHECK(s.gain == doctest::Approx(2.0));
  CHECK(s.auto_gain);

  PsaSchedule odd = PsaSchedule::make(5, 0.5, false);
  CHECK(odd.t_qk == 3);  // ceil(2.5)
  CHECK(odd.gain == doctest::Approx(5.0 / 3.0));

  PsaSchedule fixed = PsaSchedule::make(64, 0.5, true);
  CHECK(fixed.gain == doctest::Approx(1.0));

  PsaSchedule full = PsaSchedule::make(64, 1.0, false);
  CHECK(full.t_qk == 64);
  CHECK(full.gain == doctest::Approx(1.0));  // no window, no compensation

  PsaSchedule tiny = PsaSchedule::make(4, 0.01, false);
  CHECK(tiny.t_qk == 1);  // window is clamped to at least one step

  CHECK_THROWS_AS(PsaSchedule::make(0, 0.5, false), Error);
  CHECK_THROWS_AS(PsaSchedule::make(8, 0.0, false), Error);
  CHECK_THROWS_AS(PsaSchedule::make(8, 1.5, false), Error);
}

TEST_CASE("rescheduling to a new T keeps the policy") {
  PsaSchedule s = PsaSchedule::make(64, 0.5, false);
  PsaSchedule r = s.with_timesteps(256);
  CHECK(r.T == 256);
  CHECK(r.t_qk == 128);
  CHECK(r.gain == doctest::Approx(2.0));
  PsaSchedule f = PsaSchedule::make(64, 0.5, true).with_timesteps(256);
  CHECK(f.gain == doctest::Approx(1.0));
}

TEST_CASE("q and k populations are skipped after the partial window") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 3, AttentionMode::psa, 4, 0.5, true);
  Rng rng(4);
  Tensor x = random_input(dims, rng);
  SnnTrace trace;
  SpikeRecord rec;
  snn_forward(m, x, 4, &rec, &trace);

  const SpikeTrain& q = trace.at("q");
  const SpikeTrain& k = trace.at("k");
  for (int t = 3; t <= 4; ++t)
    for (int r = 0; r < q.rows; ++r)
      for (int c = 0; c < q.cols; ++c) {
        CHECK(q.at(t, r, c) == 0);
        CHECK(k.at(t, r, c) == 0);
      }
  // The record agrees with the trace: no q/k spikes land after t_qk.
  CHECK(rec.counts[0][2] == 0);
  CHECK(rec.counts[0][3] == 0);
  CHECK(rec.counts[1][2] == 0);
  CHECK(rec.counts[1][3] == 0);
  // V keeps running the full window: the schedule never touches it, so its
  // stream is bit-identical to the same model run without a window.
  SnnModel full = unit_model(dims, 3, AttentionMode::sa, 4, 1.0, false);
  SnnTrace full_trace;
  snn_forward(full, x, 4, nullptr, &full_trace);
  const SpikeTrain& v = trace.at("v");
  const SpikeTrain& v_full = full_trace.at("v");
  REQUIRE(v.data.size() == v_full.data.size());
  CHECK(v.data == v_full.data);
}

TEST_CASE("partial attention matches full attention inside the window") {
  AnnDims dims = small_dims();
  for (uint64_t seed : {1u, 2u, 3u}) {
    int T = 16;
    SnnModel sa = unit_model(dims, seed, AttentionMode::sa, T, 1.0, false);
    SnnModel psa = unit_model(dims, seed, AttentionMode::psa, T, 0.5, true);  // gain pinned to 1
    Rng rng(seed + 100);
    Tensor x = random_input(dims, rng);

    SnnTrace sa_trace, psa_trace;
    SpikeRecord sa_rec, psa_rec;
    snn_forward(sa, x, T, &sa_rec, &sa_trace);
    snn_forward(psa, x, T, &psa_rec, &psa_trace);

    int t_qk = psa.schedule.with_timesteps(T).t_qk;
    REQUIRE(t_qk == 8);
    for (const char* pop : {"q", "k", "score"}) {
      const SpikeTrain& a = sa_trace.at(pop);
      const SpikeTrain& b = psa_trace.at(pop);
      for (int t = 1; t <= t_qk; ++t)
        for (int r = 0; r < a.rows; ++r)
          for (int c = 0; c < a.cols; ++c) CHECK(a.at(t, r, c) == b.at(t, r, c));
    }
    // Totals: the partial run's q/k spikes are exactly the full run's
    // first-window spikes.
    for (int layer : {0, 1}) {
      int64_t sa_first_half = 0;
      for (int t = 1; t <= t_qk; ++t) sa_first_half += sa_rec.counts[layer][t - 1];
      CHECK(psa_rec.layer_total(layer) == sa_first_half);
    }
  }
}

TEST_CASE("score input is the spike dot product over the head dimension") {
  // One token, d_head 4, all thresholds 1: overlap(q, k) = 2 bits out of 4
  // gives current 0.5 per step, so the first score spike lands on step 3.
  AnnDims dims = small_dims(1, 4, 4);
  SnnModel m = unit_model(dims, 7, AttentionMode::sa, 8, 1.0, false);
  SnnRunner runner(m, 8);
  std::vector<uint8_t> q = {1, 0, 1, 1};
  std::vector<uint8_t> k = {1, 1, 0, 1};
  CHECK(runner.score_step(1, 0, q, k)[0] == 0);  // u = 0.5
  CHECK(runner.score_step(2, 0, q, k)[0] == 0);  // u = 1.0, strictly-greater rule holds it
  CHECK(runner.score_step(3, 0, q, k)[0] == 1);  // u = 1.5 fires
}

TEST_CASE("score population keeps draining residual charge after the window") {
  // rho = 0.25 of T = 8 gives a 2-step window. gain = T / t_qk = 4, so a
  // 2-bit overlap puts 0.5 * 4 = 2.0 per step into the score membrane:
  // step 1 fires (2.0 > 1), step 2 fires (3.0 - 1 > 1), and the residual
  // 2.0 after the window still fires twice with zero input.
  AnnDims dims = small_dims(1, 4, 4);
  SnnModel m = unit_model(dims, 7, AttentionMode::psa, 8, 0.25, false);
  SnnRunner runner(m, 8);
  std::vector<uint8_t> q = {1, 0, 1, 1};
  std::vector<uint8_t> k = {1, 1, 0, 1};
  std::vector<uint8_t> none(4, 0);
  CHECK(runner.score_step(1, 0, q, k)[0] == 1);
  CHECK(runner.score_step(2, 0, q, k)[0] == 1);
  CHECK(runner.score_step(3, 0, none, none)[0] == 1);  // residual 3.0 - 1 = 2.0 > 1
  CHECK(runner.score_step(4, 0, none, none)[0] == 0);  // 2.0 - 1 - 0 = 1.0, strict rule
}

TEST_CASE("a full-rho partial model is the same model as plain attention") {
  AnnDims dims = small_dims();
  int T = 12;
  SnnModel sa = unit_model(dims, 9, AttentionMode::sa, T, 1.0, false);
  SnnModel psa = unit_model(dims, 9, AttentionMode::psa, T, 1.0, false);
  CHECK(psa.mode == AttentionMode::sa);  // collapsed at conversion time

  Rng rng(10);
  Tensor x = random_input(dims, rng);
  SpikeRecord ra, rb;
  Tensor la = snn_forward(sa, x, T, &ra);
  Tensor lb = snn_forward(psa, x, T, &rb);
  CHECK(max_abs_diff(la, lb) == 0.0);
  for (size_t l = 0; l < ra.counts.size(); ++l)
    for (int t = 0; t < T; ++t) CHECK(ra.counts[l][t] == rb.counts[l][t]);
}

TEST_CASE("spikes are binary everywhere") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 21, AttentionMode::psa, 8, 0.5, false);
  Rng rng(22);
  Tensor x = random_input(dims, rng);
  SnnTrace trace;
  snn_forward(m, x, 8, nullptr, &trace);
  for (const auto& [name, train] : trace)
    for (uint8_t bit : train.data) CHECK(bit <= 1);
}

TEST_CASE("zero input yields zero spikes and zero logits") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 5, AttentionMode::sa, 1, 1.0, false);
  Tensor x = Tensor::zeros(dims.n_tokens, dims.d_model);
  SpikeRecord rec;
  Tensor logits = snn_forward(m, x, 1, &rec);
  CHECK(rec.total() == 0);
  for (double v : logits.values) CHECK(v == 0.0);
}

TEST_CASE("the record counts every spike the neurons counted") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 31, AttentionMode::psa, 16, 0.5, false);
  Rng rng(32);
  Tensor x = random_input(dims, rng);
  SnnRunner runner(m, 16, SnnRunner::Options{});
  for (int t = 1; t <= 16; ++t) runner.step(x);
  runner.finish();
  CHECK(runner.record().total() == runner.fires_total());
  CHECK(runner.record().total() > 0);  // the probe actually spiked
}

TEST_CASE("finish demands exactly T steps") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 1, AttentionMode::sa, 4, 1.0, false);
  SnnRunner runner(m, 4);
  Tensor x = Tensor::zeros(dims.n_tokens, dims.d_model);
  runner.step(x);
  CHECK_THROWS_AS(runner.finish(), Error);
  runner.step(x);
  runner.step(x);
  runner.step(x);
  CHECK_NOTHROW(runner.finish());
  CHECK_THROWS_AS(runner.step(x), Error);  // no stepping past T
}

TEST_CASE("batch inference is independent of the worker count") {
  AnnDims dims = small_dims();
  dims.n_classes = 3;
  SnnModel m = unit_model(dims, 41, AttentionMode::psa, 12, 0.5, false);
  Dataset data = gen_synthetic(7, 3, dims.n_tokens, dims.d_model, 43);

  BatchResult one = snn_infer_batch(m, data, 12, 1);
  BatchResult four = snn_infer_batch(m, data, 12, 4);
  BatchResult many = snn_infer_batch(m, data, 12, 64);  // more workers than samples

  REQUIRE(one.logits.size() == four.logits.size());
  for (size_t i = 0; i < one.logits.size(); ++i) {
    CHECK(max_abs_diff(one.logits[i], four.logits[i]) == 0.0);
    CHECK(max_abs_diff(one.logits[i], many.logits[i]) == 0.0);
  }
  CHECK(one.acc == four.acc);
  CHECK(one.record.total() == four.record.total());
  for (size_t l = 0; l < one.record.counts.size(); ++l)
    CHECK(one.record.counts[l] == four.record.counts[l]);
  CHECK(one.pairs.counts == four.pairs.counts);
  CHECK(one.ops.total == four.ops.total);
}

TEST_CASE("batch result carries the effective schedule") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 51, AttentionMode::psa, 64, 0.5, false);
  Dataset data = gen_synthetic(3, 2, dims.n_tokens, dims.d_model, 52);
  BatchResult r = snn_infer_batch(m, data, 16, 2);  // override the stored T
  CHECK(r.T == 16);
  CHECK(r.rho == doctest::Approx(0.5));
  CHECK(r.gain == doctest::Approx(2.0));  // recomputed for the new horizon
  CHECK(r.mode == AttentionMode::psa);
}

TEST_CASE("inference rejects bad arguments") {
  AnnDims dims = small_dims();
  SnnModel m = unit_model(dims, 61, AttentionMode::sa, 8, 1.0, false);
  Dataset data = gen_synthetic(2, 2, dims.n_tokens, dims.d_model, 62);
  CHECK_THROWS_AS(snn_infer_batch(m, data, 0, 1), Error);
  CHECK_THROWS_AS(snn_infer_batch(m, data, 8, 0), Error);
  Dataset bad = gen_synthetic(2, 2, dims.n_tokens + 1, dims.d_model, 63);
  CHECK_THROWS_AS(snn_infer_batch(m, bad, 8, 1), Error);
}

TEST_CASE("missing thresholds are a config error") {
  AnnDims dims = small_dims();
  AnnParams p = ann_init(dims, 71);
  auto th = unit_thresholds(dims);
  th.erase("mlp2");
  CHECK_THROWS_AS(convert(p, th, AttentionMode::sa, PsaSchedule::make(8, 1.0, false)), Error);
}
