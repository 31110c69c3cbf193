#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace est {

// A labelled batch of token grids. Every input is n_tokens x d_model.
struct Dataset {
  int n_tokens = 0;
  int d_model = 0;
  int n_classes = 0;
  std::vector<Tensor> inputs;
  std::vector<int> labels;

  int size() const { return static_cast<int>(inputs.size()); }
  void validate() const;
};

// Gaussian class clusters: one well-separated mean per class, a per-sample
// draw around that mean, broadcast over tokens with small per-token jitter.
// Deterministic in (all arguments); a nearest-class-mean classifier on the
// pooled inputs separates the classes almost perfectly by construction.
Dataset gen_synthetic(int n_per_class, int n_classes, int n_tokens, int d_model, uint64_t seed);

// CSV rows: label, then n_tokens*d_model values, row-major over tokens.
// No header line. Values are written with enough digits to round-trip.
Dataset load_csv(const std::string& path, int n_tokens, int d_model);
void save_csv(const Dataset& ds, const std::string& path);

// IDX pair (big-endian magic 0x00000803 images / 0x00000801 labels).
// Pixels are scaled to [0,1]; each image is split into n_tokens blocks of
// consecutive rows, each block flattened into one token.
Dataset load_idx(const std::string& image_path, const std::string& label_path, int n_tokens);

}  // namespace est
