// est -- command-line front end for the spiking-transformer engine.
//
// Batch-style subcommands: gen-data, train, calibrate, convert, infer,
// sweep, compare.  Everything is driven through the C API so the CLI
// exercises the same surface other embedders see.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime error.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "est/est.h"

namespace {

constexpr const char* kDefaultSweep = "2,4,8,16,32,64,128,256";

int exit_code_for(est_status s) {
  switch (s) {
    case EST_OK:
      return 0;
    case EST_ERR_INVALID_ARGUMENT:
    case EST_ERR_DIMENSION:
    case EST_ERR_CONFIG:
      return 2;
    default:
      return 3;
  }
}

// Reports a failed C API call on stderr and returns its process exit code.
int report(est_status s, const std::string& doing) {
  std::cerr << "error: " << doing << ": " << est_last_error() << " ["
            << est_status_name(s) << "]\n";
  return exit_code_for(s);
}

// RAII wrappers so early returns cannot leak handles.
struct DatasetHandle {
  est_dataset* p = nullptr;
  ~DatasetHandle() { est_dataset_free(p); }
};
struct AnnHandle {
  est_ann* p = nullptr;
  ~AnnHandle() { est_ann_free(p); }
};
struct SnnHandle {
  est_snn* p = nullptr;
  ~SnnHandle() { est_snn_free(p); }
};
struct ResultHandle {
  est_result* p = nullptr;
  ~ResultHandle() { est_result_free(p); }
};

// Shared data-source flags: either a CSV (--data) or an IDX pair
// (--images/--labels).  Token/feature counts come from `tokens`/`dmodel`,
// which callers either take from flags or from a loaded model.
struct DataFlags {
  std::string csv;
  std::string images;
  std::string labels;

  void attach(CLI::App* cmd, bool csv_required) {
    auto* d = cmd->add_option("--data", csv, "input dataset CSV");
    auto* i = cmd->add_option("--images", images, "IDX image file");
    auto* l = cmd->add_option("--labels", labels, "IDX label file");
    d->excludes(i)->excludes(l);
    i->needs(l);
    l->needs(i);
    if (csv_required) {
      // one of the two sources must be present; checked after parse
    }
  }

  bool present() const { return !csv.empty() || !images.empty(); }

  int load(int tokens, int dmodel, est_dataset** out) const {
    est_status s;
    if (!csv.empty())
      s = est_dataset_load_csv(csv.c_str(), tokens, dmodel, out);
    else
      s = est_dataset_load_idx(images.c_str(), labels.c_str(), tokens, out);
    if (s != EST_OK) return report(s, "loading dataset");
    return 0;
  }
};

// Writes text to path via a temp file + rename so failures leave nothing.
int write_text_file(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text) || !f.flush()) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      std::cerr << "error: cannot write " << path << "\n";
      return 3;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    std::cerr << "error: cannot rename into " << path << "\n";
    return 3;
  }
  return 0;
}

std::vector<int> parse_int_list(const std::string& text, bool& ok) {
  std::vector<int> out;
  ok = false;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) return out;
      out.push_back(v);
    } catch (...) {
      return out;
    }
  }
  ok = !out.empty();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"est -- desk-scale spiking-transformer engine"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset CSV");
  std::string gen_out;
  int gen_classes = 3, gen_n = 300, gen_tokens = 4, gen_dmodel = 8;
  std::uint64_t gen_seed = 42;
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--classes", gen_classes, "number of classes");
  gen->add_option("--n", gen_n, "total samples (must divide evenly by --classes)");
  gen->add_option("--tokens", gen_tokens, "tokens per sample");
  gen->add_option("--dmodel", gen_dmodel, "features per token");
  gen->add_option("--seed", gen_seed, "RNG seed")->envname("EST_SEED");

  // train
  auto* train = app.add_subcommand("train", "train the analog transformer on a dataset");
  DataFlags train_data;
  train_data.attach(train, true);
  std::string train_out;
  int train_tokens = 4, train_dmodel = 8, train_dhead = 4, train_dff = 16, train_blocks = 1;
  int train_epochs = 200;
  double train_lr = 0.05;
  std::uint64_t train_seed = 42;
  train->add_option("--out", train_out, "output model JSON path")->required();
  train->add_option("--tokens", train_tokens, "tokens per sample");
  train->add_option("--dmodel", train_dmodel, "features per token (CSV input)");
  train->add_option("--dhead", train_dhead, "attention head width");
  train->add_option("--dff", train_dff, "feed-forward width");
  train->add_option("--blocks", train_blocks, "encoder block count");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--seed", train_seed, "RNG seed")->envname("EST_SEED");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "report per-population thresholds for a model");
  DataFlags calib_data;
  calib_data.attach(calib, true);
  std::string calib_ann, calib_out;
  double calib_pct = 99.9;
  calib->add_option("--ann", calib_ann, "trained model JSON")->required();
  calib->add_option("--percentile", calib_pct, "calibration percentile (0, 100]");
  calib->add_option("--out", calib_out, "output report JSON path")->required();

  // convert
  auto* conv = app.add_subcommand("convert", "convert a trained model to a spiking model");
  DataFlags conv_data;
  conv_data.attach(conv, true);
  std::string conv_ann, conv_out, conv_mode = "sa", conv_gain = "auto", conv_report;
  double conv_pct = 99.9, conv_rho = 0.5;
  int conv_T = 256;
  conv->add_option("--ann", conv_ann, "trained model JSON")->required();
  conv->add_option("--percentile", conv_pct, "calibration percentile (0, 100]");
  conv->add_option("--mode", conv_mode, "attention mode")
      ->check(CLI::IsMember({"sa", "psa"}));
  conv->add_option("--rho", conv_rho, "PSA window fraction (psa mode)");
  conv->add_option("--gain", conv_gain, "PSA score gain: auto (T/T_qk) or 1")
      ->check(CLI::IsMember({"auto", "1"}));
  conv->add_option("--timesteps", conv_T, "default simulation steps stored with the model");
  conv->add_option("--out", conv_out, "output spiking model JSON path")->required();
  conv->add_option("--report", conv_report, "also write the calibration report JSON here");

  // infer
  auto* infer = app.add_subcommand("infer", "run spiking inference and write metrics CSV");
  DataFlags infer_data;
  infer_data.attach(infer, true);
  std::string infer_snn, infer_out, infer_run = "run", infer_heatmap, infer_ops;
  int infer_T = 256, infer_workers = 1;
  infer->add_option("--snn", infer_snn, "spiking model JSON")->required();
  infer->add_option("--timesteps", infer_T, "simulation steps");
  infer->add_option("--workers", infer_workers, "worker threads (output-invariant)");
  infer->add_option("--run-id", infer_run, "run identifier written into the CSV");
  infer->add_option("--out", infer_out, "output metrics CSV path")->required();
  infer->add_option("--heatmap", infer_heatmap, "also write the score heatmap CSV here");
  infer->add_option("--ops", infer_ops, "also write the operation-count report JSON here");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run inference across several timestep counts");
  DataFlags sweep_data;
  sweep_data.attach(sweep, true);
  std::string sweep_snn, sweep_out, sweep_run = "run", sweep_list = kDefaultSweep;
  int sweep_workers = 1;
  sweep->add_option("--snn", sweep_snn, "spiking model JSON")->required();
  sweep->add_option("--timesteps", sweep_list, "comma list of step counts");
  sweep->add_option("--workers", sweep_workers, "worker threads (output-invariant)");
  sweep->add_option("--run-id", sweep_run, "run identifier written into the CSV");
  sweep->add_option("--out", sweep_out, "output metrics CSV path")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "run SA and PSA on the same data and report the reduction");
  DataFlags cmp_data;
  cmp_data.attach(cmp, true);
  std::string cmp_ann, cmp_calib, cmp_out, cmp_run = "run", cmp_gain = "auto";
  double cmp_pct = 99.9, cmp_rho = 0.5;
  int cmp_T = 64, cmp_workers = 1;
  std::uint64_t cmp_seed = 42;
  cmp->add_option("--ann", cmp_ann, "trained model JSON")->required();
  cmp->add_option("--calib", cmp_calib, "calibration CSV (defaults to --data)");
  cmp->add_option("--percentile", cmp_pct, "calibration percentile (0, 100]");
  cmp->add_option("--timesteps", cmp_T, "simulation steps");
  cmp->add_option("--rho", cmp_rho, "PSA window fraction");
  cmp->add_option("--gain", cmp_gain, "PSA score gain: auto (T/T_qk) or 1")
      ->check(CLI::IsMember({"auto", "1"}));
  cmp->add_option("--seed", cmp_seed,
                  "accepted so pipelines can pass one seed everywhere; the comparison itself is deterministic")
      ->envname("EST_SEED");
  cmp->add_option("--workers", cmp_workers, "worker threads (output-invariant)");
  cmp->add_option("--run-id", cmp_run, "run identifier written into the CSV");
  cmp->add_option("--out", cmp_out, "output comparison CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  if (gen->parsed()) {
    if (gen_classes < 1 || gen_n < 1 || gen_n % gen_classes != 0) {
      std::cerr << "error: --n must be a positive multiple of --classes\n";
      return 2;
    }
    DatasetHandle data;
    est_status s = est_dataset_generate(gen_n / gen_classes, gen_classes, gen_tokens,
                                        gen_dmodel, gen_seed, &data.p);
    if (s != EST_OK) return report(s, "generating dataset");
    s = est_dataset_save_csv(data.p, gen_out.c_str());
    if (s != EST_OK) return report(s, "writing dataset");
    std::cout << "wrote " << gen_out << ": " << gen_n << " samples, " << gen_classes
              << " classes, tokens=" << gen_tokens << ", dmodel=" << gen_dmodel << "\n";
    return 0;
  }

  if (train->parsed()) {
    if (!train_data.present()) {
      std::cerr << "error: train needs --data or --images/--labels\n";
      return 2;
    }
    DatasetHandle data;
    if (int rc = train_data.load(train_tokens, train_dmodel, &data.p)) return rc;
    AnnHandle ann;
    est_status s = est_ann_create(est_dataset_tokens(data.p), est_dataset_dmodel(data.p),
                                  train_dhead, train_dff, train_blocks,
                                  est_dataset_classes(data.p), train_seed, &ann.p);
    if (s != EST_OK) return report(s, "creating model");
    double loss = 0.0, acc = 0.0;
    s = est_ann_train(ann.p, data.p, train_epochs, train_lr, train_seed, &loss, &acc);
    if (s != EST_OK) return report(s, "training");
    s = est_ann_save(ann.p, train_out.c_str());
    if (s != EST_OK) return report(s, "writing model");
    std::printf("trained %d epochs: loss=%.9g accuracy=%.9g\n", train_epochs, loss, acc);
    std::cout << "wrote " << train_out << "\n";
    return 0;
  }

  if (calib->parsed()) {
    if (!calib_data.present()) {
      std::cerr << "error: calibrate needs --data or --images/--labels\n";
      return 2;
    }
    AnnHandle ann;
    est_status s = est_ann_load(calib_ann.c_str(), &ann.p);
    if (s != EST_OK) return report(s, "loading model");
    DatasetHandle data;
    if (int rc = calib_data.load(est_ann_tokens(ann.p), est_ann_dmodel(ann.p), &data.p))
      return rc;
    char* json = nullptr;
    s = est_calibration_report_json(ann.p, data.p, calib_pct, &json);
    if (s != EST_OK) return report(s, "calibrating");
    std::string text(json);
    est_string_free(json);
    if (int rc = write_text_file(calib_out, text + "\n")) return rc;
    std::cout << "wrote " << calib_out << "\n";
    return 0;
  }

  if (conv->parsed()) {
    if (!conv_data.present()) {
      std::cerr << "error: convert needs --data or --images/--labels\n";
      return 2;
    }
    AnnHandle ann;
    est_status s = est_ann_load(conv_ann.c_str(), &ann.p);
    if (s != EST_OK) return report(s, "loading model");
    DatasetHandle data;
    if (int rc = conv_data.load(est_ann_tokens(ann.p), est_ann_dmodel(ann.p), &data.p))
      return rc;
    SnnHandle snn;
    s = est_convert(ann.p, data.p, conv_pct, conv_mode.c_str(), conv_rho,
                    conv_gain == "1" ? 1 : 0, conv_T, &snn.p);
    if (s != EST_OK) return report(s, "converting");
    s = est_snn_save(snn.p, conv_out.c_str());
    if (s != EST_OK) return report(s, "writing spiking model");
    if (!conv_report.empty()) {
      char* json = nullptr;
      s = est_calibration_report_json(ann.p, data.p, conv_pct, &json);
      if (s != EST_OK) return report(s, "writing calibration report");
      std::string text(json);
      est_string_free(json);
      if (int rc = write_text_file(conv_report, text + "\n")) return rc;
      std::cout << "wrote " << conv_report << "\n";
    }
    std::cout << "wrote " << conv_out << "\n";
    return 0;
  }

  if (infer->parsed()) {
    if (!infer_data.present()) {
      std::cerr << "error: infer needs --data or --images/--labels\n";
      return 2;
    }
    if (infer_T < 1) {
      std::cerr << "error: --timesteps must be >= 1\n";
      return 2;
    }
    SnnHandle snn;
    est_status s = est_snn_load(infer_snn.c_str(), &snn.p);
    if (s != EST_OK) return report(s, "loading spiking model");
    DatasetHandle data;
    if (int rc = infer_data.load(est_snn_tokens(snn.p), est_snn_dmodel(snn.p), &data.p))
      return rc;
    ResultHandle res;
    s = est_snn_infer(snn.p, data.p, infer_T, infer_workers, &res.p);
    if (s != EST_OK) return report(s, "running inference");
    s = est_result_write_metrics_csv(res.p, infer_run.c_str(), infer_out.c_str(), 1);
    if (s != EST_OK) return report(s, "writing metrics");
    if (!infer_heatmap.empty()) {
      s = est_result_write_heatmap_csv(res.p, infer_heatmap.c_str());
      if (s != EST_OK) return report(s, "writing heatmap");
      std::cout << "wrote " << infer_heatmap << "\n";
    }
    if (!infer_ops.empty()) {
      char* json = nullptr;
      s = est_result_ops_json(res.p, &json);
      if (s != EST_OK) return report(s, "writing ops report");
      std::string text(json);
      est_string_free(json);
      if (int rc = write_text_file(infer_ops, text + "\n")) return rc;
      std::cout << "wrote " << infer_ops << "\n";
    }
    std::printf("accuracy=%.9g over %d samples at T=%d\n",
                est_result_accuracy(res.p), est_dataset_size(data.p), infer_T);
    std::cout << "wrote " << infer_out << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    if (!sweep_data.present()) {
      std::cerr << "error: sweep needs --data or --images/--labels\n";
      return 2;
    }
    bool ok = false;
    std::vector<int> ts = parse_int_list(sweep_list, ok);
    if (!ok) {
      std::cerr << "error: --timesteps must be a comma list of integers\n";
      return 2;
    }
    SnnHandle snn;
    est_status s = est_snn_load(sweep_snn.c_str(), &snn.p);
    if (s != EST_OK) return report(s, "loading spiking model");
    DatasetHandle data;
    if (int rc = sweep_data.load(est_snn_tokens(snn.p), est_snn_dmodel(snn.p), &data.p))
      return rc;
    s = est_write_sweep_csv(snn.p, data.p, ts.data(), static_cast<int>(ts.size()),
                            sweep_workers, sweep_run.c_str(), sweep_out.c_str());
    if (s != EST_OK) return report(s, "running sweep");
    std::cout << "wrote " << sweep_out << "\n";
    return 0;
  }

  if (cmp->parsed()) {
    if (!cmp_data.present()) {
      std::cerr << "error: compare needs --data or --images/--labels\n";
      return 2;
    }
    if (cmp_T < 1) {
      std::cerr << "error: --timesteps must be >= 1\n";
      return 2;
    }
    AnnHandle ann;
    est_status s = est_ann_load(cmp_ann.c_str(), &ann.p);
    if (s != EST_OK) return report(s, "loading model");
    DatasetHandle eval;
    if (int rc = cmp_data.load(est_ann_tokens(ann.p), est_ann_dmodel(ann.p), &eval.p))
      return rc;
    DatasetHandle calib_set;
    if (!cmp_calib.empty()) {
      s = est_dataset_load_csv(cmp_calib.c_str(), est_ann_tokens(ann.p),
                               est_ann_dmodel(ann.p), &calib_set.p);
      if (s != EST_OK) return report(s, "loading calibration data");
    }
    s = est_write_compare_csv(ann.p, calib_set.p ? calib_set.p : eval.p, eval.p, cmp_pct,
                              cmp_T, cmp_rho, cmp_gain == "1" ? 1 : 0, cmp_workers,
                              cmp_run.c_str(), cmp_out.c_str());
    if (s != EST_OK) return report(s, "comparing");
    std::cout << "wrote " << cmp_out << "\n";
    return 0;
  }

  std::cerr << app.help() << std::flush;
  return 2;
}
