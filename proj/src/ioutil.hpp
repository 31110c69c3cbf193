#pragma once

#include <string>

namespace est {

// Writes content to path via a temp file in the same directory plus an
// atomic rename, so a failed run never leaves a partial output behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Fixed-width-free decimal formatting used by the report writers: 9
// significant digits, locale-independent. Integers print without a point.
std::string format_g9(double v);
// Full-precision formatting (17 significant digits) used by the dataset
// writer so values survive a save/load round trip exactly.
std::string format_g17(double v);

}  // namespace est
