#include "model_io.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "ioutil.hpp"

namespace est {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
  json rows = json::array();
  for (int i = 0; i < t.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tensor_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    fail(ErrorCode::parse, std::string("model: ") + name + " must be an array of rows");
  int r = static_cast<int>(j.size());
  int c = static_cast<int>(j[0].size());
  Tensor t(r, c);
  for (int i = 0; i < r; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != c)
      fail(ErrorCode::parse, std::string("model: ") + name + " has ragged rows");
    for (int jj = 0; jj < c; ++jj) {
      if (!j[i][jj].is_number())
        fail(ErrorCode::parse, std::string("model: ") + name + " has a non-numeric entry");
      t.at(i, jj) = j[i][jj].get<double>();
    }
  }
  check_finite(t, name);
  return t;
}

std::string weight_key(const char* base, int block) {
  return block == 0 ? std::string(base) : std::string(base) + std::to_string(block);
}

int get_dim(const json& dims, const char* key) {
  if (!dims.contains(key) || !dims[key].is_number_integer())
    fail(ErrorCode::parse, std::string("model: dims.") + key + " missing or not an integer");
  return dims[key].get<int>();
}

json parse_text(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::parse, std::string(what) + ": not valid JSON");
  if (!j.is_object()) fail(ErrorCode::parse, std::string(what) + ": top level must be an object");
  return j;
}

json weights_to_json(const AnnParams& p) {
  json w;
  for (int b = 0; b < p.dims.n_blocks; ++b) {
    w[weight_key("W_q", b)] = tensor_to_json(p.blocks[b].w_q);
    w[weight_key("W_k", b)] = tensor_to_json(p.blocks[b].w_k);
    w[weight_key("W_v", b)] = tensor_to_json(p.blocks[b].w_v);
    w[weight_key("W_o", b)] = tensor_to_json(p.blocks[b].w_o);
    w[weight_key("W_mlp1", b)] = tensor_to_json(p.blocks[b].w_mlp1);
    w[weight_key("W_mlp2", b)] = tensor_to_json(p.blocks[b].w_mlp2);
  }
  w["W_cls"] = tensor_to_json(p.w_cls);
  return w;
}

AnnParams params_from_json(const json& j) {
  if (!j.contains("dims") || !j.contains("weights"))
    fail(ErrorCode::parse, "model: missing dims or weights");
  const json& dims = j["dims"];
  AnnParams p;
  p.dims.n_tokens = get_dim(dims, "n_tokens");
  p.dims.d_model = get_dim(dims, "d_model");
  p.dims.d_head = get_dim(dims, "d_head");
  p.dims.d_ff = get_dim(dims, "d_ff");
  p.dims.n_blocks = get_dim(dims, "n_blocks");
  p.dims.n_classes = get_dim(dims, "n_classes");

  const json& w = j["weights"];
  auto get_w = [&w](const std::string& key) -> const json& {
    if (!w.contains(key)) fail(ErrorCode::parse, "model: weights." + key + " missing");
    return w[key];
  };
  for (int b = 0; b < p.dims.n_blocks; ++b) {
    BlockWeights bw;
    bw.w_q = tensor_from_json(get_w(weight_key("W_q", b)), "W_q");
    bw.w_k = tensor_from_json(get_w(weight_key("W_k", b)), "W_k");
    bw.w_v = tensor_from_json(get_w(weight_key("W_v", b)), "W_v");
    bw.w_o = tensor_from_json(get_w(weight_key("W_o", b)), "W_o");
    bw.w_mlp1 = tensor_from_json(get_w(weight_key("W_mlp1", b)), "W_mlp1");
    bw.w_mlp2 = tensor_from_json(get_w(weight_key("W_mlp2", b)), "W_mlp2");
    p.blocks.push_back(std::move(bw));
  }
  p.w_cls = tensor_from_json(get_w("W_cls"), "W_cls");
  p.validate();
  return p;
}

json dims_to_json(const AnnDims& d) {
  return json{{"n_tokens", d.n_tokens},   {"d_model", d.d_model}, {"d_head", d.d_head},
              {"d_ff", d.d_ff},           {"n_blocks", d.n_blocks},
              {"n_classes", d.n_classes}};
}

}  // namespace

std::string ann_to_json(const AnnParams& p) {
  p.validate();
  json j;
  j["dims"] = dims_to_json(p.dims);
  j["weights"] = weights_to_json(p);
  return j.dump();
}

AnnParams ann_from_json(const std::string& text) {
  return params_from_json(parse_text(text, "ann model"));
}

void save_ann(const AnnParams& p, const std::string& path) {
  write_file_atomic(path, ann_to_json(p) + "\n");
}

AnnParams load_ann(const std::string& path) { return ann_from_json(read_file(path)); }

std::string snn_to_json(const SnnModel& m) {
  m.validate();
  json j;
  j["dims"] = dims_to_json(m.params.dims);
  j["weights"] = weights_to_json(m.params);
  json th;
  for (const auto& [name, v] : m.thresholds) th[name] = v;
  j["thresholds"] = th;
  j["schedule"] = json{{"T", m.schedule.T},
                       {"rho", m.schedule.rho},
                       {"gain", m.schedule.gain},
                       {"gain_mode", m.schedule.auto_gain ? "auto" : "fixed"}};
  j["mode"] = mode_name(m.mode);
  return j.dump();
}

SnnModel snn_from_json(const std::string& text) {
  json j = parse_text(text, "snn model");
  SnnModel m;
  m.params = params_from_json(j);

  if (!j.contains("thresholds") || !j["thresholds"].is_object())
    fail(ErrorCode::parse, "model: thresholds missing");
  for (const auto& [key, value] : j["thresholds"].items()) {
    if (!value.is_number()) fail(ErrorCode::parse, "model: threshold for " + key + " not numeric");
    m.thresholds[key] = value.get<double>();
  }

  if (!j.contains("schedule") || !j["schedule"].is_object())
    fail(ErrorCode::parse, "model: schedule missing");
  const json& s = j["schedule"];
  if (!s.contains("T") || !s.contains("rho"))
    fail(ErrorCode::parse, "model: schedule needs T and rho");
  bool fixed_gain = s.contains("gain_mode") && s["gain_mode"] == "fixed";
  m.schedule = PsaSchedule::make(s["T"].get<int>(), s["rho"].get<double>(), fixed_gain);
  if (s.contains("gain")) {
    double g = s["gain"].get<double>();
    if (std::fabs(g - m.schedule.gain) > 1e-9)
      fail(ErrorCode::parse, "model: stored gain does not match the schedule policy");
  }

  if (!j.contains("mode") || !j["mode"].is_string())
    fail(ErrorCode::parse, "model: mode missing");
  std::string mode = j["mode"].get<std::string>();
  if (mode == "sa")
    m.mode = AttentionMode::sa;
  else if (mode == "psa")
    m.mode = AttentionMode::psa;
  else
    fail(ErrorCode::parse, "model: mode must be 'sa' or 'psa'");

  m.validate();
  return m;
}

void save_snn(const SnnModel& m, const std::string& path) {
  write_file_atomic(path, snn_to_json(m) + "\n");
}

SnnModel load_snn(const std::string& path) { return snn_from_json(read_file(path)); }

}  // namespace est
