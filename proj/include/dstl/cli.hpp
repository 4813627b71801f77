#pragma once

#include "dstl/datapipe.hpp"
#include "dstl/network.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dstl::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// A CSV feature table or a raster sidecar. Rasters are cut into patches.
struct DataSource {
  std::filesystem::path csv;
  std::filesystem::path raster;
  Index stride = 1;
  Index max_samples = 0;  // 0 keeps every sample

  bool empty() const { return csv.empty() && raster.empty(); }
};

struct RunConfig {
  DataSource labeled;
  DataSource unlabeled;
  DataSource test;
  std::filesystem::path output_dir = "out";
  std::filesystem::path model;  // input archive for train/evaluate/encode
  std::uint64_t seed = 1;
  int threads = 0;
  Index patch_size = 5;
  bool gcn = false;
  Index n_train = 1000;
  Index n_val = 1000;
  int num_classes = 0;  // 0 infers the largest label
  bool pretrain_inline = false;
  bool metrics_json = true;
  bool metrics_csv = true;
  Hyperparams hyperparams;
  SynthParams synth;
};

// Relative paths resolve against `base_dir`.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

void cmd_pretrain(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_evaluate(const RunConfig& config);
void cmd_encode(const RunConfig& config);
void cmd_synth(const RunConfig& config);

ExitCode exit_code_for(ErrorKind kind);

// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace dstl::cli
