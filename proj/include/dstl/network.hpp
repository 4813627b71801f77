#pragma once

#include "dstl/classifier.hpp"
#include "dstl/common.hpp"
#include "dstl/datapipe.hpp"
#include "dstl/simplex_coding.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace dstl {

enum class StackMode {
  AllLayers,  // classifier sees [A^(1); ...; A^(L)]
  LastOnly,   // classifier sees A^(L)
};

struct Hyperparams {
  std::vector<Index> layer_sizes{20, 30};
  double clip_t1 = 1e-3;
  double clip_t2 = 1e-3;
  double lr_a = 1.0;
  double lr_gamma = 1.0;
  int max_outer_iter = 1000;
  double snap_threshold = 0.05;  // relative L2 drift of an atom that triggers a snap
  CodingOptions coding;
  FitOptions classifier;
  StackMode stack = StackMode::AllLayers;
  bool include_input = false;  // prepend the raw features to the stacked vector

  Index num_layers() const { return static_cast<Index>(layer_sizes.size()); }
  void validate() const;
};

struct DstlModel {
  std::vector<Dictionary> dictionaries;
  std::optional<SoftmaxParams> classifier;
  Hyperparams hyperparams;

  Index num_layers() const { return static_cast<Index>(dictionaries.size()); }
  Index input_dim() const;
  // Row count of the classifier input for this model's stacking mode.
  Index feature_dim() const;
  // Dictionary entries of every layer plus classifier weights and biases.
  Index parameter_count(Index num_classes) const;
};

// (M + K2) * K1 + (K2 + 1) * C: the learned-parameter count of a two-layer
// network whose classifier reads the last layer.
Index two_layer_parameter_count(Index input_dim, Index k1, Index k2, Index num_classes);

struct IterationRecord {
  int iteration = 0;
  std::vector<double> residuals;  // ||D^(l) A^(l) - A^(l-1)||_F on the training data
  double validation_overall = 0.0;  // percent
  int snaps = 0;
};

struct TrainTrace {
  std::vector<IterationRecord> records;
  int best_iteration = 0;
};

/// Layer-wise SiVM pre-training on unlabeled data. Layer 1 draws atoms from
/// the raw samples, deeper layers from the unlabeled codes of the layer below.
DstlModel pretrain(const FeatureMatrix& unlabeled, const Hyperparams& hp);

// Forward codes A^(1..L).
std::vector<CoefficientMatrix> encode(const DstlModel& model, const FeatureMatrix& X);

// Row-wise concatenation in layer order.
FeatureMatrix stack_features(const std::vector<CoefficientMatrix>& codes);

// Classifier input for the model's stacking mode.
FeatureMatrix classifier_features(const DstlModel& model, const FeatureMatrix& X,
                                  const std::vector<CoefficientMatrix>& codes);

Matrix clip_elementwise(const Matrix& g, double threshold);

/// Step 1: gradient step on the last-layer training codes. The gradient of
/// 1/2 ||t - t_hat||^2 is taken with respect to the full classifier input and
/// only its last-layer block is applied, clipped to t1.
CoefficientMatrix update_last_layer_reps(const DstlModel& model, const FeatureMatrix& X,
                                         const std::vector<CoefficientMatrix>& codes, const Matrix& targets);

/// Step 2: A*^(l) = D^(l+1) A*^(l+1) for l = L-1 .. 1. Returns A*^(1..L) with
/// the given last layer at the back. No simplex projection is applied.
std::vector<Matrix> backprop_reps(const DstlModel& model, const CoefficientMatrix& updated_last);

// (D A - T) A^T, the gradient of 1/2 ||D A - T||^2 with respect to D.
Matrix dictionary_gradient(const Matrix& atoms, const Matrix& codes, const Matrix& targets);

/// Step 3 on every layer: D^(l) - gamma * clip((D^(l) A^(l) - A*^(l-1)) A^(l)^T, t2).
/// `updated` holds A*^(0..L) with A*^(0) the training data, `forward` holds
/// A^(1..L). `base_atoms`, when given, replaces D^(l) as the point the step
/// starts from (the residual always uses the model's dictionaries).
std::vector<Matrix> update_dictionaries(const DstlModel& model, const std::vector<Matrix>& updated,
                                        const std::vector<CoefficientMatrix>& forward,
                                        const std::vector<Matrix>* base_atoms = nullptr);

struct SnapResult {
  Dictionary dictionary;
  std::vector<bool> snapped;  // per atom
  int changed = 0;            // atoms whose value differs from prev_atoms
};

/// Atoms that drifted from `prev_atoms` by more than `threshold` (relative L2)
/// move to their nearest pool column; the rest revert to `prev_atoms`. A pool
/// column whose value is already taken by another atom is skipped in favour
/// of the next nearest. A negative threshold snaps every atom.
SnapResult snap_to_pool(const Matrix& updated_atoms, const Dictionary& prev_atoms, const FeatureMatrix& pool,
                        double threshold);

/// Step 4: re-encode the labeled data and refit the classifier.
DstlModel refit(DstlModel model, const LabeledDataset& labeled);

struct TrainProgress {
  const IterationRecord& record;
  const DstlModel& model;
  const std::vector<FeatureMatrix>& pools;
};
using TrainCallback = std::function<void(const TrainProgress&)>;

struct TrainResult {
  DstlModel best;
  TrainTrace trace;
};

/// Iterates steps 1-4 plus snapping up to max_outer_iter times, keeping the
/// snapshot with the best validation overall accuracy (earliest on ties).
/// Stops early once an iteration leaves every dictionary unchanged and moves
/// no atom by more than 1e-12.
TrainResult train(DstlModel model, const LabeledDataset& labeled, const LabeledDataset& validation,
                  const FeatureMatrix& unlabeled, const TrainCallback& on_iteration = {});

// Unlabeled pools of every layer: raw data for layer 1, codes below for deeper layers.
std::vector<FeatureMatrix> layer_pools(const DstlModel& model, const FeatureMatrix& unlabeled);

}  // namespace dstl
