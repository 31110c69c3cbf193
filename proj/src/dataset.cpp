#include "dataset.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "ioutil.hpp"
#include "rng.hpp"

namespace est {

void Dataset::validate() const {
  if (n_tokens < 1 || d_model < 1) fail(ErrorCode::dimension, "dataset: n_tokens and d_model must be >= 1");
  if (inputs.empty()) fail(ErrorCode::invalid_argument, "dataset: no samples");
  if (inputs.size() != labels.size()) fail(ErrorCode::dimension, "dataset: inputs/labels length mismatch");
  for (const Tensor& x : inputs) {
    if (x.rank() != 2 || x.rows() != n_tokens || x.cols() != d_model)
      fail(ErrorCode::dimension, "dataset: sample shape " + x.shape_str() + " does not match header");
    check_finite(x, "dataset sample");
  }
  for (int y : labels)
    if (y < 0 || y >= n_classes) fail(ErrorCode::invalid_argument, "dataset: label out of range");
}

Dataset gen_synthetic(int n_per_class, int n_classes, int n_tokens, int d_model, uint64_t seed) {
  if (n_per_class < 1 || n_classes < 1 || n_tokens < 1 || d_model < 1)
    fail(ErrorCode::invalid_argument, "gen_synthetic: all counts must be >= 1");

  const double cluster_sigma = 0.25;  // per-sample spread around the class mean
  const double token_jitter = 0.10;   // per-token spread around the sample
  const double mean_scale = 3.0;
  const double min_separation = 6.0 * cluster_sigma;

  Rng rng(mix_seed(seed, seed_tag::dataset));

  // Draw class means until every pair is comfortably separated. At
  // mean_scale the first draw almost always passes; the loop is a guard,
  // not the common path.
  std::vector<std::vector<double>> means;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    means.assign(n_classes, std::vector<double>(d_model));
    for (auto& m : means)
      for (double& v : m) v = mean_scale * rng.normal();
    bool ok = true;
    for (int a = 0; a < n_classes && ok; ++a) {
      for (int b = a + 1; b < n_classes && ok; ++b) {
        double d2 = 0.0;
        for (int j = 0; j < d_model; ++j) {
          double d = means[a][j] - means[b][j];
          d2 += d * d;
        }
        if (std::sqrt(d2) < min_separation) ok = false;
      }
    }
    if (ok) break;
    if (attempt == 999) fail(ErrorCode::internal, "gen_synthetic: could not separate class means");
  }

  Dataset ds;
  ds.n_tokens = n_tokens;
  ds.d_model = d_model;
  ds.n_classes = n_classes;
  ds.inputs.reserve(static_cast<size_t>(n_per_class) * n_classes);
  ds.labels.reserve(static_cast<size_t>(n_per_class) * n_classes);

  // Classes interleaved so any contiguous split stays balanced.
  for (int s = 0; s < n_per_class; ++s) {
    for (int c = 0; c < n_classes; ++c) {
      std::vector<double> center(d_model);
      for (int j = 0; j < d_model; ++j) center[j] = means[c][j] + cluster_sigma * rng.normal();
      Tensor x(n_tokens, d_model);
      for (int t = 0; t < n_tokens; ++t)
        for (int j = 0; j < d_model; ++j) x.at(t, j) = center[j] + token_jitter * rng.normal();
      ds.inputs.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::string out;
  out.reserve(static_cast<size_t>(ds.size()) * ds.n_tokens * ds.d_model * 20);
  for (int i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.labels[i]);
    for (double v : ds.inputs[i].values) {
      out += ',';
      out += format_g17(v);
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, int field, const std::string& why) {
  fail(ErrorCode::parse,
       path + ":" + std::to_string(line) + ": field " + std::to_string(field) + ": " + why);
}

double parse_double(const std::string& tok, const std::string& path, int line, int field) {
  const char* s = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s || *end != '\0') parse_fail(path, line, field, "not a number: '" + tok + "'");
  if (!std::isfinite(v)) parse_fail(path, line, field, "non-finite value");
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, int n_tokens, int d_model) {
  if (n_tokens < 1 || d_model < 1)
    fail(ErrorCode::invalid_argument, "load_csv: n_tokens and d_model must be >= 1");
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path + " for reading");

  Dataset ds;
  ds.n_tokens = n_tokens;
  ds.d_model = d_model;

  const int want = n_tokens * d_model;
  std::string line;
  int line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (static_cast<int>(fields.size()) != 1 + want)
      parse_fail(path, line_no, static_cast<int>(fields.size()),
                 "expected 1 label + " + std::to_string(want) + " values, got " +
                     std::to_string(fields.size()) + " fields");

    char* end = nullptr;
    long label = std::strtol(fields[0].c_str(), &end, 10);
    if (end == fields[0].c_str() || *end != '\0' || label < 0)
      parse_fail(path, line_no, 1, "label must be a non-negative integer, got '" + fields[0] + "'");

    Tensor x(n_tokens, d_model);
    for (int i = 0; i < want; ++i)
      x.values[i] = parse_double(fields[i + 1], path, line_no, i + 2);

    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  if (ds.inputs.empty()) fail(ErrorCode::parse, path + ": no data rows");
  ds.n_classes = max_label + 1;
  ds.validate();
  return ds;
}

namespace {

uint32_t read_be32(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail(ErrorCode::parse, path + ": truncated while reading " + what);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& image_path, const std::string& label_path, int n_tokens) {
  if (n_tokens < 1) fail(ErrorCode::invalid_argument, "load_idx: n_tokens must be >= 1");

  std::ifstream img(image_path, std::ios::binary);
  if (!img) fail(ErrorCode::io, "cannot open " + image_path + " for reading");
  uint32_t magic = read_be32(img, image_path, "magic");
  if (magic != 0x00000803u)
    fail(ErrorCode::parse, image_path + ": bad image magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%08x", magic);
      return std::string(buf);
    }());
  uint32_t count = read_be32(img, image_path, "count");
  uint32_t rows = read_be32(img, image_path, "rows");
  uint32_t cols = read_be32(img, image_path, "cols");
  if (count == 0 || rows == 0 || cols == 0)
    fail(ErrorCode::parse, image_path + ": empty image set");
  if (rows % static_cast<uint32_t>(n_tokens) != 0)
    fail(ErrorCode::dimension, image_path + ": " + std::to_string(rows) + " rows not divisible by " +
                                   std::to_string(n_tokens) + " tokens");

  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) fail(ErrorCode::io, "cannot open " + label_path + " for reading");
  uint32_t lmagic = read_be32(lab, label_path, "magic");
  if (lmagic != 0x00000801u)
    fail(ErrorCode::parse, label_path + ": bad label magic");
  uint32_t lcount = read_be32(lab, label_path, "count");
  if (lcount != count)
    fail(ErrorCode::dimension, label_path + ": label count " + std::to_string(lcount) +
                                   " does not match image count " + std::to_string(count));

  const int rows_per_token = static_cast<int>(rows) / n_tokens;
  const int d_model = rows_per_token * static_cast<int>(cols);

  Dataset ds;
  ds.n_tokens = n_tokens;
  ds.d_model = d_model;

  std::vector<unsigned char> pix(static_cast<size_t>(rows) * cols);
  int max_label = -1;
  for (uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (!img) fail(ErrorCode::parse, image_path + ": truncated image data at image " + std::to_string(i));
    Tensor x(n_tokens, d_model);
    for (size_t p = 0; p < pix.size(); ++p)
      x.values[p] = static_cast<double>(pix[p]) / 255.0;  // row blocks are contiguous
    char y = 0;
    lab.read(&y, 1);
    if (!lab) fail(ErrorCode::parse, label_path + ": truncated label data at image " + std::to_string(i));
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(static_cast<unsigned char>(y));
    max_label = std::max(max_label, static_cast<int>(static_cast<unsigned char>(y)));
  }
  ds.n_classes = max_label + 1;
  ds.validate();
  return ds;
}

}  // namespace est
