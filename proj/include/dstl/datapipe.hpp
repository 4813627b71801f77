#pragma once

#include "dstl/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dstl {

/// Feature matrix with 1-based labels and the matching 1-of-C targets.
struct LabeledDataset {
  FeatureMatrix X;
  std::vector<int> labels;
  Matrix targets;  // C x N
  int num_classes = 0;

  Index size() const { return X.cols(); }
};

LabeledDataset make_labeled(FeatureMatrix X, std::vector<int> labels, int num_classes);
LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& columns);

/// Multi-band raster, band-sequential: value(b, r, c) = values[(b * H + r) * W + c].
struct RasterImage {
  Index bands = 0;
  Index height = 0;
  Index width = 0;
  std::vector<double> values;
  std::vector<int> labels;  // H * W row-major, 0 = unlabeled; empty if absent
  std::optional<double> nodata;

  double at(Index band, Index row, Index col) const {
    return values[static_cast<std::size_t>((band * height + row) * width + col)];
  }
  int label_at(Index row, Index col) const {
    return labels.empty() ? 0 : labels[static_cast<std::size_t>(row * width + col)];
  }
  void validate() const;
};

struct PatchSet {
  FeatureMatrix X;
  std::vector<int> labels;  // centre-pixel labels, 0 = unlabeled
};

/// One column per patch centre whose full patch lies inside the raster,
/// flattened band-major then row-major, so dimension = bands * patch^2.
/// Centres are visited on a `stride` grid; patches touching a nodata value
/// are dropped. With `labeled_only`, centres with label 0 are dropped too.
PatchSet extract_patches(const RasterImage& raster, Index patch, bool labeled_only, Index stride = 1);

/// Per-column standardization (population std, floor 1e-8) followed by a
/// single global shift that moves the matrix minimum to zero.
FeatureMatrix gcn_shift(const FeatureMatrix& X);

struct Split {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

// Seeded uniform sampling without replacement; the remainder becomes the test set.
Split split(const LabeledDataset& data, Index n_train, Index n_val, std::uint64_t seed);

// Seeded uniform subsample of `count` columns (all columns if count >= N), in column order.
FeatureMatrix subsample(const FeatureMatrix& X, Index count, std::uint64_t seed);

struct Metrics {
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> confusion;  // rows true, cols predicted
  std::vector<double> per_class_accuracy;  // percent, NaN for classes without samples
  double overall_accuracy = 0.0;           // percent
  double average_accuracy = 0.0;           // percent, over classes with samples
  double kappa = 0.0;
};

Metrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes);

// --- file formats -----------------------------------------------------------

struct FeatureTable {
  FeatureMatrix X;
  std::vector<int> labels;  // 0 where the label column is absent or 0
  bool has_labels = false;
};

// Header f0..f{M-1}[,label]; one sample per row.
FeatureTable read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& X, const std::vector<int>* labels,
                       const std::string& prefix = "f");

/// Sidecar JSON: {"bands", "height", "width", "data": <f32 LE band-sequential
/// file>, optional "nodata", optional "labels": <i32 LE H*W file>}. Relative
/// paths resolve against the sidecar's directory.
RasterImage read_raster(const std::filesystem::path& sidecar);
void write_raster(const std::filesystem::path& sidecar, const RasterImage& raster);

std::string metrics_to_json(const std::vector<std::pair<std::string, Metrics>>& columns);
std::string metrics_to_csv(const std::vector<std::pair<std::string, Metrics>>& columns);

// --- synthetic planted-archetype data ---------------------------------------

enum class SynthWeights {
  Dirichlet,  // flat Dirichlet mixtures of all generators
  Vertices,   // sample i is generator i mod n_archetypes
};

struct SynthParams {
  Index dim = 20;
  Index n_archetypes = 12;
  int n_classes = 4;
  Index n_samples = 3500;
  Index n_unlabeled = 5000;  // mixtures in the pool, after the planted generators
  double noise_sigma = 0.05;
  double min_separation = 0.5;  // minimum pairwise generator distance
  SynthWeights weights = SynthWeights::Dirichlet;
  std::uint64_t seed = 1;
};

struct SynthData {
  LabeledDataset labeled;
  FeatureMatrix unlabeled;      // columns 0..n_archetypes-1 are the generators
  FeatureMatrix generators;     // M x n_archetypes
  std::vector<int> generator_class;  // 1-based class of every generator
  bool generators_on_hull = false;   // every generator outside the hull of the others
  bool samples_in_hull = false;      // every emitted sample inside the generator hull
};

/// Unit-norm generators with a guaranteed minimum pairwise separation; each
/// sample is a convex mixture plus isotropic Gaussian noise and takes the
/// class of its heaviest generator (generator g belongs to class g mod C + 1).
/// The unlabeled pool starts with the generators, followed by mixtures.
SynthData synth_generate(const SynthParams& params);

// Distance from x to the convex hull of the columns of `points`.
double distance_to_hull(const FeatureMatrix& points, const Vector& x);

}  // namespace dstl
