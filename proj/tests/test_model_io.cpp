#include <doctest.h>

#include <filesystem>
#include <string>

#include "ann.hpp"
#include "converter.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "ioutil.hpp"
#include "model_io.hpp"
#include "snn.hpp"

using namespace est;
namespace fs = std::filesystem;

namespace {

fs::path tmp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "est_model_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

AnnParams make_params(int blocks = 1) {
  AnnDims dims;
  dims.n_tokens = 3;
  dims.d_model = 4;
  dims.d_head = 2;
  dims.d_ff = 4;
  dims.n_blocks = blocks;
  dims.n_classes = 2;
  return ann_init(dims, 17);
}

SnnModel make_snn(const AnnParams& p, AttentionMode mode, double rho) {
  Dataset calib = gen_synthetic(4, 2, 3, 4, 18);
  auto th = calibrate_thresholds(p, calib, 99.9).thresholds();
  return convert(p, th, mode, PsaSchedule::make(64, rho, false));
}

}  // namespace

TEST_CASE("analog model json round trips bit for bit") {
  for (int blocks : {1, 3}) {
    AnnParams p = make_params(blocks);
    std::string text = ann_to_json(p);
    AnnParams back = ann_from_json(text);
    CHECK(back.dims.n_blocks == blocks);
    CHECK(back.fingerprint() == p.fingerprint());
    for (int b = 0; b < blocks; ++b) {
      CHECK(back.blocks[b].w_q.values == p.blocks[b].w_q.values);
      CHECK(back.blocks[b].w_o.values == p.blocks[b].w_o.values);
      CHECK(back.blocks[b].w_mlp2.values == p.blocks[b].w_mlp2.values);
    }
    CHECK(back.w_cls.values == p.w_cls.values);
    // Re-serialization is byte-stable.
    CHECK(ann_to_json(back) == text);
  }
}

TEST_CASE("analog model file round trip") {
  AnnParams p = make_params();
  fs::path f = tmp_path("ann.json");
  save_ann(p, f.string());
  AnnParams back = load_ann(f.string());
  CHECK(back.fingerprint() == p.fingerprint());
}

TEST_CASE("spiking model json round trips thresholds schedule and mode") {
  AnnParams p = make_params();
  SnnModel m = make_snn(p, AttentionMode::psa, 0.5);
  std::string text = snn_to_json(m);
  SnnModel back = snn_from_json(text);
  CHECK(back.mode == AttentionMode::psa);
  CHECK(back.schedule.T == 64);
  CHECK(back.schedule.rho == 0.5);
  CHECK(back.schedule.t_qk == 32);
  CHECK(back.schedule.gain == 2.0);
  CHECK(back.schedule.auto_gain);
  CHECK(back.thresholds == m.thresholds);
  CHECK(back.params.fingerprint() == m.params.fingerprint());
  CHECK(snn_to_json(back) == text);
}

TEST_CASE("fixed-gain schedules keep their policy through serialization") {
  AnnParams p = make_params();
  Dataset calib = gen_synthetic(4, 2, 3, 4, 18);
  auto th = calibrate_thresholds(p, calib, 99.9).thresholds();
  SnnModel m = convert(p, th, AttentionMode::psa, PsaSchedule::make(64, 0.5, true));
  SnnModel back = snn_from_json(snn_to_json(m));
  CHECK(!back.schedule.auto_gain);
  CHECK(back.schedule.gain == 1.0);
  CHECK(back.schedule.with_timesteps(128).gain == 1.0);
}

TEST_CASE("a converted model serializes the identical weights object") {
  AnnParams p = make_params();
  SnnModel m = make_snn(p, AttentionMode::sa, 1.0);
  std::string ann_text = ann_to_json(p);
  std::string snn_text = snn_to_json(m);
  // Both documents embed "weights" the same way; extract and compare.
  auto weights_of = [](const std::string& text) {
    size_t start = text.find("\"weights\":");
    REQUIRE(start != std::string::npos);
    size_t brace = text.find('{', start);
    int depth = 0;
    for (size_t i = brace; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0) return text.substr(brace, i - brace + 1);
    }
    REQUIRE(false);
    return std::string();
  };
  CHECK(weights_of(ann_text) == weights_of(snn_text));
}

TEST_CASE("a full-window psa model loads back as plain attention") {
  AnnParams p = make_params();
  SnnModel m = make_snn(p, AttentionMode::psa, 1.0);
  std::string text = snn_to_json(m);
  CHECK(text.find("\"mode\":\"sa\"") != std::string::npos);
  SnnModel back = snn_from_json(text);
  CHECK(back.mode == AttentionMode::sa);
}

TEST_CASE("dims survive the round trip") {
  AnnParams p = make_params();
  std::string text = ann_to_json(p);
  AnnParams back = ann_from_json(text);
  CHECK(back.dims.n_tokens == 3);
  CHECK(back.dims.d_model == 4);
  CHECK(back.dims.d_head == 2);
  CHECK(back.dims.d_ff == 4);
  CHECK(back.dims.n_classes == 2);
}

TEST_CASE("malformed model documents are parse errors") {
  CHECK_THROWS_AS(ann_from_json("not json at all"), Error);
  CHECK_THROWS_AS(ann_from_json("[1,2,3]"), Error);
  CHECK_THROWS_AS(ann_from_json("{\"dims\":{}}"), Error);

  AnnParams p = make_params();
  std::string text = ann_to_json(p);
  // Drop one weight matrix.
  std::string broken = text;
  size_t pos = broken.find("\"W_q\"");
  REQUIRE(pos != std::string::npos);
  broken.replace(pos, 5, "\"Q_w\"");
  try {
    ann_from_json(broken);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
  }
}

TEST_CASE("spiking documents validate schedule and mode fields") {
  AnnParams p = make_params();
  SnnModel m = make_snn(p, AttentionMode::psa, 0.5);
  std::string text = snn_to_json(m);

  std::string bad_mode = text;
  size_t pos = bad_mode.find("\"psa\"");
  REQUIRE(pos != std::string::npos);
  bad_mode.replace(pos, 5, "\"xsa\"");
  CHECK_THROWS_AS(snn_from_json(bad_mode), Error);

  std::string no_sched = text;
  pos = no_sched.find("\"schedule\"");
  REQUIRE(pos != std::string::npos);
  no_sched.replace(pos, 10, "\"sched___\"");
  CHECK_THROWS_AS(snn_from_json(no_sched), Error);
}

TEST_CASE("loading a missing model file is an io error") {
  try {
    load_ann(tmp_path("missing.json").string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}

TEST_CASE("non-finite weights are rejected at load time") {
  AnnParams p = make_params();
  std::string text = ann_to_json(p);
  size_t pos = text.find("\"W_cls\":[[");
  REQUIRE(pos != std::string::npos);
  size_t open = text.find("[[", pos);
  size_t comma = text.find(',', open);
  std::string broken = text.substr(0, open + 2) + "1e999" + text.substr(comma);
  CHECK_THROWS_AS(ann_from_json(broken), Error);
}
