#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "tensor.hpp"

using namespace est;

TEST_CASE("matmul small oracle") {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  Tensor b = Tensor::from_rows({{5}, {6}});
  Tensor c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);
  CHECK(c.at(0, 0) == 17.0);
  CHECK(c.at(1, 0) == 39.0);
}

TEST_CASE("matmul identity leaves operand unchanged") {
  Tensor a = Tensor::from_rows({{1.5, -2.25, 3.0}, {0.0, 4.0, -1.0}});
  Tensor eye = Tensor::zeros(3, 3);
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tensor c = matmul(a, eye);
  CHECK(max_abs_diff(a, c) == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dims with shape info") {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(4, 2);
  CHECK_THROWS_AS(matmul(a, b), Error);
  try {
    matmul(a, b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension);
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    CHECK(std::string(e.what()).find("4x2") != std::string::npos);
  }
}

TEST_CASE("transpose round trips") {
  Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  Tensor t = transpose(a);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.at(2, 1) == 6.0);
  CHECK(max_abs_diff(transpose(t), a) == 0.0);
}

TEST_CASE("elementwise ops") {
  Tensor a = Tensor::from_rows({{1, -2}, {3, -4}});
  Tensor b = Tensor::from_rows({{10, 20}, {30, 40}});
  CHECK(add(a, b).at(1, 1) == 36.0);
  CHECK(sub(b, a).at(0, 1) == 22.0);
  CHECK(scale(a, -2.0).at(1, 0) == -6.0);
  Tensor r = relu(a);
  CHECK(r.at(0, 0) == 1.0);
  CHECK(r.at(0, 1) == 0.0);
  CHECK(r.at(1, 1) == 0.0);
}

TEST_CASE("relu_gate zeroes gradient where the pre-activation is non-positive") {
  Tensor g = Tensor::from_rows({{5, 5, 5}});
  Tensor pre = Tensor::from_rows({{-1, 0, 2}});
  Tensor out = relu_gate(g, pre);
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(0, 1) == 0.0);  // gate is strict: zero pre-activation passes nothing
  CHECK(out.at(0, 2) == 5.0);
}

TEST_CASE("elementwise ops reject shape mismatches") {
  Tensor a = Tensor::zeros(2, 2);
  Tensor b = Tensor::zeros(2, 3);
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(sub(a, b), Error);
  CHECK_THROWS_AS(relu_gate(a, b), Error);
}

TEST_CASE("check_finite flags NaN and infinity as divergence") {
  Tensor a = Tensor::zeros(1, 2);
  a.at(0, 1) = std::nan("");
  try {
    check_finite(a, "probe");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::divergence);
  }
  a.at(0, 1) = INFINITY;
  CHECK_THROWS_AS(check_finite(a, "probe"), Error);
  a.at(0, 1) = 0.0;
  CHECK_NOTHROW(check_finite(a, "probe"));
}

TEST_CASE("from_rows rejects ragged input") {
  CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), Error);
}

TEST_CASE("max_abs_diff") {
  Tensor a = Tensor::from_rows({{1, 2}});
  Tensor b = Tensor::from_rows({{1.5, 1.25}});
  CHECK(max_abs_diff(a, b) == 0.75);
}
