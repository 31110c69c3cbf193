#include "tensor.hpp"

#include <cmath>
#include <cstdlib>

#include "error.hpp"

namespace est {

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  if (r == 0) fail(ErrorCode::invalid_argument, "from_rows: empty tensor");
  int c = static_cast<int>(rows.begin()->size());
  Tensor t(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c)
      fail(ErrorCode::dimension, "from_rows: ragged rows");
    int j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) fail(ErrorCode::dimension, "rows(): tensor is not rank 2, shape " + shape_str());
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) fail(ErrorCode::dimension, "cols(): tensor is not rank 2, shape " + shape_str());
  return shape[1];
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail(ErrorCode::dimension, "matmul: operands must be rank 2, got " + a.shape_str() + " and " + b.shape_str());
  if (a.cols() != b.rows())
    fail(ErrorCode::dimension,
         "matmul: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str());
  int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;  // left-to-right over the inner index, on purpose
      for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  }
  check_finite(c, "matmul result");
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    fail(ErrorCode::dimension,
         std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (size_t i = 0; i < c.values.size(); ++i) c.values[i] += b.values[i];
  check_finite(c, "add result");
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (size_t i = 0; i < c.values.size(); ++i) c.values[i] -= b.values[i];
  check_finite(c, "sub result");
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.values) v *= s;
  check_finite(c, "scale result");
  return c;
}

Tensor relu(const Tensor& a) {
  Tensor c = a;
  for (double& v : c.values) v = v > 0.0 ? v : 0.0;
  return c;
}

Tensor relu_gate(const Tensor& g, const Tensor& pre) {
  require_same_shape(g, pre, "relu_gate");
  Tensor c = g;
  for (size_t i = 0; i < c.values.size(); ++i)
    if (pre.values[i] <= 0.0) c.values[i] = 0.0;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::fabs(a.values[i] - b.values[i]));
  return m;
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.values)
    if (!std::isfinite(v))
      fail(ErrorCode::divergence, std::string(what) + ": non-finite value");
}

}  // namespace est
