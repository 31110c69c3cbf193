#include "neuron.hpp"

#include <cmath>

#include "error.hpp"

namespace est {

IfState if_init(int n, double v) {
  if (n < 1) fail(ErrorCode::invalid_argument, "if_init: population size must be >= 1");
  if (!(v > 0.0) || !std::isfinite(v))
    fail(ErrorCode::invalid_argument, "if_init: threshold must be finite and > 0");
  IfState s;
  s.u.assign(n, 0.0);
  s.o_prev.assign(n, 0);
  s.v = v;
  return s;
}

std::vector<uint8_t> if_step(IfState& s, std::span<const double> input_current) {
  if (static_cast<int>(input_current.size()) != s.size())
    fail(ErrorCode::dimension, "if_step: current size " + std::to_string(input_current.size()) +
                                   " does not match population size " + std::to_string(s.size()));
  std::vector<uint8_t> spikes(s.u.size());
  for (size_t i = 0; i < s.u.size(); ++i) {
    double u = s.u[i] + input_current[i] - s.v * s.o_prev[i];
    uint8_t o = u > s.v ? 1 : 0;
    s.u[i] = u;
    s.o_prev[i] = o;
    spikes[i] = o;
    s.fires_total += o;
  }
  s.t += 1;
  return spikes;
}

const Tensor& CurrentStream::at(int t) const {
  if (t < 1 || t > T) fail(ErrorCode::sequencing, "current stream: step " + std::to_string(t) +
                                                      " outside [1, " + std::to_string(T) + "]");
  return frame;
}

CurrentStream encode_direct(const Tensor& x, int T) {
  if (T < 1) fail(ErrorCode::invalid_argument, "encode_direct: T must be >= 1");
  check_finite(x, "encode_direct input");
  return CurrentStream{x, T};
}

std::vector<double> rate_decode(std::span<const uint64_t> counts, int T, double v) {
  if (T < 1) fail(ErrorCode::invalid_argument, "rate_decode: T must be >= 1");
  if (!(v > 0.0)) fail(ErrorCode::invalid_argument, "rate_decode: threshold must be > 0");
  std::vector<double> out(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > static_cast<uint64_t>(T))
      fail(ErrorCode::accounting, "rate_decode: count " + std::to_string(counts[i]) +
                                      " exceeds T = " + std::to_string(T));
    out[i] = static_cast<double>(counts[i]) * v / T;
  }
  return out;
}

}  // namespace est
