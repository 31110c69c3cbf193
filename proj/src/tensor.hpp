#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace est {

// Dense row-major tensor of doubles. The engine only uses rank 2, but the
// shape is kept as a vector so loaders can carry rank-3 image stacks if they
// ever need to. Summations in every op run left-to-right over the innermost
// index — the result of a matmul is a deterministic function of the operand
// bytes, independent of build flags or thread count.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int rows, int cols) : shape{rows, cols}, values(static_cast<size_t>(rows) * cols, 0.0) {}

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  int64_t size() const { return static_cast<int64_t>(values.size()); }

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;
};

// C = A * B with shapes (m x k) x (k x n). Inner sum runs left-to-right.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// grad gated by the sign of the matching pre-activation: out = g * (pre > 0).
Tensor relu_gate(const Tensor& g, const Tensor& pre);

double max_abs_diff(const Tensor& a, const Tensor& b);
void check_finite(const Tensor& t, const char* what);

}  // namespace est
