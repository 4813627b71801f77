#pragma once

#include "dstl/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace dstl {

// Archive layout:
//   "DSTLARC1"                          8-byte magic
//   u64 LE manifest length, manifest    UTF-8 JSON with sorted keys
//   one block per manifest "blocks" entry, in order:
//     u64 LE rows, u64 LE cols, rows*cols f64 LE values in row-major order
//
// The manifest holds the hyperparameters, per-layer dictionary block names and
// source indices, the classifier block names (or null) and the train trace (or
// null).

struct ModelArchive {
  DstlModel model;
  std::optional<TrainTrace> trace;
};

nlohmann::json hyperparams_to_json(const Hyperparams& hp);
// Missing keys keep their defaults; unknown keys are a config error.
Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams base = {});

std::vector<unsigned char> serialize_model(const DstlModel& model, const TrainTrace* trace = nullptr);
ModelArchive deserialize_model(const std::vector<unsigned char>& bytes);

// Writes through a temporary file and a rename, so a failed save leaves no archive.
void save_model(const std::filesystem::path& path, const DstlModel& model, const TrainTrace* trace = nullptr);
ModelArchive load_model(const std::filesystem::path& path);

// iteration, residual_l1..residual_lL, validation_overall_accuracy, snaps
std::string trace_to_csv(const TrainTrace& trace);

}  // namespace dstl
