#pragma once

#include <string>

#include "ann.hpp"
#include "snn.hpp"

namespace est {

// Model files are JSON. An ANN file holds {"dims": {...}, "weights": {...}};
// a converted model adds {"thresholds": {...}, "schedule": {...}, "mode": ...}
// around the identical weights payload. Weight matrices are nested row
// arrays; block 0 uses the bare names (W_q, ...), later blocks append the
// block index (W_q1, ...). Serialization is weight-preserving: saving an ANN
// and its conversion produces byte-identical "weights" objects.

std::string ann_to_json(const AnnParams& p);
AnnParams ann_from_json(const std::string& text);
void save_ann(const AnnParams& p, const std::string& path);
AnnParams load_ann(const std::string& path);

std::string snn_to_json(const SnnModel& m);
SnnModel snn_from_json(const std::string& text);
void save_snn(const SnnModel& m, const std::string& path);
SnnModel load_snn(const std::string& path);

}  // namespace est
