#pragma once

#include <stdexcept>
#include <string>

namespace est {

// Error categories. These map 1:1 onto the C API status codes, so core code
// should pick the category the caller can actually act on.
enum class ErrorCode {
  invalid_argument = 1,  // bad value passed by the caller (n < 1, lr <= 0, ...)
  dimension = 2,         // shape mismatch between tensors / model / data
  io = 3,                // file could not be opened, read or written
  parse = 4,             // file opened fine but its contents are malformed
  config = 5,            // model/schedule is not in a runnable state
  divergence = 6,        // training produced a non-finite loss
  sequencing = 7,        // step-wise API driven out of order or past T
  accounting = 8,        // spike/op counters violate their invariants
  internal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace est
