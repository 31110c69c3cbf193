// C ABI wrapper over the C++ core: opaque handles, status codes, and a
// thread-local last-error message.  Exceptions never cross this boundary.
#include "est/est.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "ann.hpp"
#include "converter.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "model_io.hpp"
#include "snn.hpp"

using namespace est;

struct est_dataset {
  Dataset data;
};
struct est_ann {
  AnnParams params;
};
struct est_snn {
  SnnModel model;
};
struct est_result {
  BatchResult res;
  std::string run_id_scratch;  // keeps layer-name pointers stable
};

namespace {

thread_local std::string g_last_error;

est_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return EST_ERR_INVALID_ARGUMENT;
    case ErrorCode::dimension: return EST_ERR_DIMENSION;
    case ErrorCode::io: return EST_ERR_IO;
    case ErrorCode::parse: return EST_ERR_PARSE;
    case ErrorCode::config: return EST_ERR_CONFIG;
    case ErrorCode::divergence: return EST_ERR_DIVERGENCE;
    case ErrorCode::sequencing: return EST_ERR_SEQUENCING;
    case ErrorCode::accounting: return EST_ERR_ACCOUNTING;
    case ErrorCode::internal: return EST_ERR_INTERNAL;
  }
  return EST_ERR_INTERNAL;
}

// Runs fn, translating exceptions to status codes and g_last_error.
template <typename Fn>
est_status guarded(Fn&& fn) {
  try {
    fn();
    return EST_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EST_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EST_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return EST_ERR_INTERNAL;
  }
}

est_status require(bool ok, const char* what) {
  if (ok) return EST_OK;
  g_last_error = std::string("null or invalid argument: ") + what;
  return EST_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* est_status_name(est_status status) {
  switch (status) {
    case EST_OK: return "ok";
    case EST_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case EST_ERR_DIMENSION: return "dimension";
    case EST_ERR_IO: return "io";
    case EST_ERR_PARSE: return "parse";
    case EST_ERR_CONFIG: return "config";
    case EST_ERR_DIVERGENCE: return "divergence";
    case EST_ERR_SEQUENCING: return "sequencing";
    case EST_ERR_ACCOUNTING: return "accounting";
    case EST_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* est_last_error(void) { return g_last_error.c_str(); }

void est_string_free(char* s) { delete[] s; }

/* ---- datasets ---- */

est_status est_dataset_generate(int n_per_class, int n_classes, int n_tokens,
                                int d_model, uint64_t seed, est_dataset** out) {
  if (est_status s = require(out != nullptr, "out")) return s;
  *out = nullptr;
  return guarded([&] {
    auto* h = new est_dataset{gen_synthetic(n_per_class, n_classes, n_tokens, d_model, seed)};
    *out = h;
  });
}

est_status est_dataset_load_csv(const char* path, int n_tokens, int d_model,
                                est_dataset** out) {
  if (est_status s = require(out && path, "path/out")) return s;
  *out = nullptr;
  return guarded([&] { *out = new est_dataset{load_csv(path, n_tokens, d_model)}; });
}

est_status est_dataset_load_idx(const char* image_path, const char* label_path,
                                int n_tokens, est_dataset** out) {
  if (est_status s = require(out && image_path && label_path, "paths/out")) return s;
  *out = nullptr;
  return guarded([&] { *out = new est_dataset{load_idx(image_path, label_path, n_tokens)}; });
}

est_status est_dataset_save_csv(const est_dataset* data, const char* path) {
  if (est_status s = require(data && path, "data/path")) return s;
  return guarded([&] { save_csv(data->data, path); });
}

est_status est_dataset_slice(const est_dataset* data, int begin, int end,
                             est_dataset** out) {
  if (est_status s = require(data && out, "data/out")) return s;
  *out = nullptr;
  return guarded([&] {
    if (begin < 0 || end > data->data.size() || begin >= end)
      fail(ErrorCode::invalid_argument, "slice: range out of bounds or empty");
    Dataset d;
    d.n_tokens = data->data.n_tokens;
    d.d_model = data->data.d_model;
    d.n_classes = data->data.n_classes;
    for (int i = begin; i < end; ++i) {
      d.inputs.push_back(data->data.inputs[i]);
      d.labels.push_back(data->data.labels[i]);
    }
    *out = new est_dataset{std::move(d)};
  });
}

int est_dataset_size(const est_dataset* data) { return data ? data->data.size() : 0; }
int est_dataset_classes(const est_dataset* data) { return data ? data->data.n_classes : 0; }
int est_dataset_tokens(const est_dataset* data) { return data ? data->data.n_tokens : 0; }
int est_dataset_dmodel(const est_dataset* data) { return data ? data->data.d_model : 0; }
void est_dataset_free(est_dataset* data) { delete data; }

/* ---- analog model ---- */

est_status est_ann_create(int n_tokens, int d_model, int d_head, int d_ff,
                          int n_blocks, int n_classes, uint64_t seed,
                          est_ann** out) {
  if (est_status s = require(out != nullptr, "out")) return s;
  *out = nullptr;
  return guarded([&] {
    AnnDims dims;
    dims.n_tokens = n_tokens;
    dims.d_model = d_model;
    dims.d_head = d_head;
    dims.d_ff = d_ff;
    dims.n_blocks = n_blocks;
    dims.n_classes = n_classes;
    *out = new est_ann{ann_init(dims, seed)};
  });
}

est_status est_ann_train(est_ann* ann, const est_dataset* data, int epochs,
                         double lr, uint64_t seed, double* final_loss,
                         double* final_accuracy) {
  if (est_status s = require(ann && data, "ann/data")) return s;
  return guarded([&] {
    TrainResult r = train_sgd(ann->params, data->data, epochs, lr, seed);
    if (final_loss) *final_loss = r.final_loss;
    if (final_accuracy) *final_accuracy = r.final_accuracy;
  });
}

est_status est_ann_accuracy(const est_ann* ann, const est_dataset* data,
                            double* accuracy) {
  if (est_status s = require(ann && data && accuracy, "ann/data/accuracy")) return s;
  return guarded([&] { *accuracy = ann_accuracy(ann->params, data->data); });
}

est_status est_ann_save(const est_ann* ann, const char* path) {
  if (est_status s = require(ann && path, "ann/path")) return s;
  return guarded([&] { save_ann(ann->params, path); });
}

est_status est_ann_load(const char* path, est_ann** out) {
  if (est_status s = require(path && out, "path/out")) return s;
  *out = nullptr;
  return guarded([&] { *out = new est_ann{load_ann(path)}; });
}

int est_ann_tokens(const est_ann* ann) { return ann ? ann->params.dims.n_tokens : 0; }
int est_ann_dmodel(const est_ann* ann) { return ann ? ann->params.dims.d_model : 0; }
int est_ann_classes(const est_ann* ann) { return ann ? ann->params.dims.n_classes : 0; }

void est_ann_free(est_ann* ann) { delete ann; }

/* ---- conversion ---- */

est_status est_calibration_report_json(const est_ann* ann,
                                       const est_dataset* calib,
                                       double percentile, char** out_json) {
  if (est_status s = require(ann && calib && out_json, "ann/calib/out_json")) return s;
  *out_json = nullptr;
  return guarded([&] {
    CalibrationReport rep = calibrate_thresholds(ann->params, calib->data, percentile);
    *out_json = dup_string(rep.to_json());
  });
}

est_status est_convert(const est_ann* ann, const est_dataset* calib,
                       double percentile, const char* mode, double rho,
                       int fixed_unit_gain, int default_timesteps,
                       est_snn** out) {
  if (est_status s = require(ann && calib && mode && out, "ann/calib/mode/out")) return s;
  *out = nullptr;
  return guarded([&] {
    AttentionMode m;
    if (std::string(mode) == "sa")
      m = AttentionMode::sa;
    else if (std::string(mode) == "psa")
      m = AttentionMode::psa;
    else
      fail(ErrorCode::invalid_argument, "mode must be 'sa' or 'psa'");
    double effective_rho = (m == AttentionMode::sa) ? 1.0 : rho;
    PsaSchedule sched = PsaSchedule::make(default_timesteps, effective_rho, fixed_unit_gain != 0);
    CalibrationReport rep = calibrate_thresholds(ann->params, calib->data, percentile);
    *out = new est_snn{convert(ann->params, rep.thresholds(), m, sched)};
  });
}

est_status est_snn_save(const est_snn* snn, const char* path) {
  if (est_status s = require(snn && path, "snn/path")) return s;
  return guarded([&] { save_snn(snn->model, path); });
}

est_status est_snn_load(const char* path, est_snn** out) {
  if (est_status s = require(path && out, "path/out")) return s;
  *out = nullptr;
  return guarded([&] { *out = new est_snn{load_snn(path)}; });
}

int est_snn_tokens(const est_snn* snn) { return snn ? snn->model.params.dims.n_tokens : 0; }
int est_snn_dmodel(const est_snn* snn) { return snn ? snn->model.params.dims.d_model : 0; }

void est_snn_free(est_snn* snn) { delete snn; }

/* ---- inference and reporting ---- */

est_status est_snn_infer(const est_snn* snn, const est_dataset* data,
                         int timesteps, int workers, est_result** out) {
  if (est_status s = require(snn && data && out, "snn/data/out")) return s;
  *out = nullptr;
  return guarded([&] {
    *out = new est_result{snn_infer_batch(snn->model, data->data, timesteps, workers), {}};
  });
}

double est_result_accuracy(const est_result* res) { return res ? res->res.acc : 0.0; }

int est_result_n_layers(const est_result* res) {
  return res ? static_cast<int>(res->res.record.layer_names.size()) : 0;
}

const char* est_result_layer_name(const est_result* res, int layer) {
  if (!res || layer < 0 || layer >= static_cast<int>(res->res.record.layer_names.size()))
    return nullptr;
  return res->res.record.layer_names[layer].c_str();
}

double est_result_layer_mean_spikes(const est_result* res, int layer) {
  if (!res) return 0.0;
  std::vector<double> msc = mean_spike_count(res->res.record);
  if (layer < 0 || layer >= static_cast<int>(msc.size())) return 0.0;
  return msc[layer];
}

double est_result_layer_synops(const est_result* res, int layer) {
  if (!res || layer < 0 || layer >= static_cast<int>(res->res.ops.layers.size())) return 0.0;
  return res->res.ops.layers[layer].ops;
}

double est_result_total_synops(const est_result* res) {
  return res ? res->res.ops.total : 0.0;
}

double est_result_qk_score_synops(const est_result* res) {
  return res ? res->res.ops.qk_score_ops : 0.0;
}

est_status est_result_write_metrics_csv(const est_result* res,
                                        const char* run_id, const char* path,
                                        int per_layer_rows) {
  if (est_status s = require(res && run_id && path, "res/run_id/path")) return s;
  return guarded([&] { write_metrics_csv(res->res, run_id, path, per_layer_rows != 0); });
}

est_status est_result_write_heatmap_csv(const est_result* res, const char* path) {
  if (est_status s = require(res && path, "res/path")) return s;
  return guarded([&] { write_heatmap_csv(res->res.pairs, path); });
}

est_status est_result_ops_json(const est_result* res, char** out_json) {
  if (est_status s = require(res && out_json, "res/out_json")) return s;
  *out_json = nullptr;
  return guarded([&] { *out_json = dup_string(res->res.ops.to_json()); });
}

void est_result_free(est_result* res) { delete res; }

est_status est_write_sweep_csv(const est_snn* snn, const est_dataset* data,
                               const int* timesteps, int n_timesteps,
                               int workers, const char* run_id,
                               const char* path) {
  if (est_status s = require(snn && data && timesteps && run_id && path, "snn/data/timesteps/run_id/path"))
    return s;
  return guarded([&] {
    if (n_timesteps < 1) fail(ErrorCode::invalid_argument, "sweep: need at least one T");
    std::vector<BatchResult> runs;
    for (int i = 0; i < n_timesteps; ++i)
      runs.push_back(snn_infer_batch(snn->model, data->data, timesteps[i], workers));
    write_sweep_csv(runs, run_id, path);
  });
}

est_status est_write_compare_csv(const est_ann* ann, const est_dataset* calib,
                                 const est_dataset* eval, double percentile,
                                 int timesteps, double rho, int fixed_unit_gain,
                                 int workers, const char* run_id,
                                 const char* path) {
  if (est_status s = require(ann && calib && eval && run_id && path, "ann/calib/eval/run_id/path"))
    return s;
  return guarded([&] {
    CalibrationReport rep = calibrate_thresholds(ann->params, calib->data, percentile);
    SnnModel sa = convert(ann->params, rep.thresholds(), AttentionMode::sa,
                          PsaSchedule::make(timesteps, 1.0, false));
    SnnModel psa = convert(ann->params, rep.thresholds(), AttentionMode::psa,
                           PsaSchedule::make(timesteps, rho, fixed_unit_gain != 0));
    BatchResult sa_res = snn_infer_batch(sa, eval->data, timesteps, workers);
    BatchResult psa_res = snn_infer_batch(psa, eval->data, timesteps, workers);
    write_compare_csv(sa_res, psa_res, run_id, path);
  });
}

}  // extern "C"
