#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace est {

// Integrate-and-fire population with soft reset and a one-step-lagged
// subtraction. Per step, elementwise:
//
//   u <- u + input - v * o_prev      (o_prev = last step's spike)
//   spike = (u > v)                  (strictly greater)
//   o_prev <- spike
//
// The membrane is never clamped; it may go negative under negative input.
// A spike emitted at step t is therefore subtracted from the membrane at
// step t+1, which gives the exact balance
//
//   u_T = sum(inputs over 1..T) - v * (spikes over 1..T-1).
//
// For a constant input x with 0 <= x <= v the firing count after T steps is
// max(0, ceil(T*x/v - 1)), so |count/T - x/v| <= 2/T.
struct IfState {
  std::vector<double> u;
  std::vector<uint8_t> o_prev;
  double v = 1.0;
  int64_t t = 0;                // steps taken
  uint64_t fires_total = 0;     // lifetime spike counter, independent of any record

  int size() const { return static_cast<int>(u.size()); }
};

// Fresh population of n neurons with threshold v > 0, membrane at zero.
IfState if_init(int n, double v);

// One step; input_current.size() must equal the population size. Returns the
// 0/1 spike vector for this step.
std::vector<uint8_t> if_step(IfState& s, std::span<const double> input_current);

// Constant-current encoding: the same analog frame is injected every step.
struct CurrentStream {
  Tensor frame;
  int T = 0;
  const Tensor& at(int t) const;  // t in [1, T]
};

CurrentStream encode_direct(const Tensor& x, int T);

// count * v / T per neuron; rejects counts outside [0, T].
std::vector<double> rate_decode(std::span<const uint64_t> counts, int T, double v);

}  // namespace est
