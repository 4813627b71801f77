#include "dstl/network.hpp"
#include "dstl/archetypes.hpp"
#include "dstl/log.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace dstl {
namespace {

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.kind(), context + ": " + e.what());
}

double overall_accuracy_percent(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double validation_accuracy(const DstlModel& model, const LabeledDataset& validation) {
  if (validation.size() == 0) return 0.0;
  const auto codes = encode(model, validation.X);
  const auto predicted = predict_label(*model.classifier, classifier_features(model, validation.X, codes));
  return overall_accuracy_percent(validation.labels, predicted);
}

std::vector<double> layer_residuals(const DstlModel& model, const FeatureMatrix& X,
                                    const std::vector<CoefficientMatrix>& codes) {
  std::vector<double> out;
  const Matrix* below = &X;
  for (Index l = 0; l < model.num_layers(); ++l) {
    out.push_back(residual_norm(model.dictionaries[l], *below, codes[l]));
    below = &codes[l];
  }
  return out;
}

}  // namespace

void Hyperparams::validate() const {
  if (layer_sizes.empty()) fail(ErrorKind::Config, "at least one layer is required");
  for (Index k : layer_sizes) {
    if (k < 2) fail(ErrorKind::Config, "every layer needs at least 2 atoms");
  }
  if (!(clip_t1 > 0.0) || !(clip_t2 > 0.0)) fail(ErrorKind::Config, "clipping thresholds must be positive");
  if (!(lr_a > 0.0) || !(lr_gamma > 0.0)) fail(ErrorKind::Config, "learning rates must be positive");
  if (max_outer_iter < 0) fail(ErrorKind::Config, "max_outer_iter must be non-negative");
  if (!(snap_threshold >= 0.0)) fail(ErrorKind::Config, "snap_threshold must be non-negative");
  if (!(coding.tol > 0.0) || coding.max_iter < 1) fail(ErrorKind::Config, "invalid coding settings");
  if (!(classifier.reg >= 0.0) || classifier.max_iter < 0 || !(classifier.tol > 0.0)) {
    fail(ErrorKind::Config, "invalid classifier settings");
  }
}

Index DstlModel::input_dim() const {
  if (dictionaries.empty()) fail(ErrorKind::InvalidInput, "model has no layers");
  return dictionaries.front().dim();
}

Index DstlModel::feature_dim() const {
  Index dim = hyperparams.include_input ? input_dim() : 0;
  if (hyperparams.stack == StackMode::LastOnly) return dim + dictionaries.back().size();
  for (const auto& d : dictionaries) dim += d.size();
  return dim;
}

Index DstlModel::parameter_count(Index num_classes) const {
  Index total = 0;
  for (const auto& d : dictionaries) total += d.dim() * d.size();
  return total + (feature_dim() + 1) * num_classes;
}

Index two_layer_parameter_count(Index input_dim, Index k1, Index k2, Index num_classes) {
  return (input_dim + k2) * k1 + (k2 + 1) * num_classes;
}

DstlModel pretrain(const FeatureMatrix& unlabeled, const Hyperparams& hp) {
  hp.validate();
  require_finite(unlabeled, "unlabeled data");
  DstlModel model;
  model.hyperparams = hp;
  FeatureMatrix pool = unlabeled;
  for (Index l = 0; l < hp.num_layers(); ++l) {
    try {
      const ArchetypeSelection selection = select_archetypes(pool, hp.layer_sizes[static_cast<std::size_t>(l)]);
      model.dictionaries.push_back(build_dictionary(pool, selection));
      log::debug("layer ", l + 1, ": selected ", selection.indices.size(), " archetypes from ", pool.cols(),
                 " pool columns");
      if (l + 1 < hp.num_layers()) pool = code_batch(model.dictionaries.back(), pool, hp.coding);
    } catch (const Error& e) {
      rethrow_with_context(e, "pretrain layer " + std::to_string(l + 1));
    }
  }
  return model;
}

std::vector<CoefficientMatrix> encode(const DstlModel& model, const FeatureMatrix& X) {
  if (X.rows() != model.input_dim()) {
    fail(ErrorKind::Dimension, "model expects " + std::to_string(model.input_dim()) + "-dimensional samples, got " +
                                   std::to_string(X.rows()));
  }
  std::vector<CoefficientMatrix> codes;
  codes.reserve(model.dictionaries.size());
  const Matrix* below = &X;
  for (std::size_t l = 0; l < model.dictionaries.size(); ++l) {
    codes.push_back(code_batch(model.dictionaries[l], *below, model.hyperparams.coding));
    below = &codes.back();
  }
  return codes;
}

FeatureMatrix stack_features(const std::vector<CoefficientMatrix>& codes) {
  if (codes.empty()) fail(ErrorKind::InvalidInput, "nothing to stack");
  Index rows = 0;
  for (const auto& c : codes) {
    if (c.cols() != codes.front().cols()) fail(ErrorKind::Dimension, "stacked layers differ in sample count");
    rows += c.rows();
  }
  FeatureMatrix out(rows, codes.front().cols());
  Index offset = 0;
  for (const auto& c : codes) {
    out.middleRows(offset, c.rows()) = c;
    offset += c.rows();
  }
  return out;
}

FeatureMatrix classifier_features(const DstlModel& model, const FeatureMatrix& X,
                                  const std::vector<CoefficientMatrix>& codes) {
  std::vector<CoefficientMatrix> blocks;
  if (model.hyperparams.include_input) blocks.push_back(X);
  if (model.hyperparams.stack == StackMode::LastOnly) {
    blocks.push_back(codes.back());
  } else {
    blocks.insert(blocks.end(), codes.begin(), codes.end());
  }
  return stack_features(blocks);
}

Matrix clip_elementwise(const Matrix& g, double threshold) {
  if (!(threshold > 0.0)) fail(ErrorKind::InvalidInput, "clipping threshold must be positive");
  return g.cwiseMax(-threshold).cwiseMin(threshold);
}

CoefficientMatrix update_last_layer_reps(const DstlModel& model, const FeatureMatrix& X,
                                         const std::vector<CoefficientMatrix>& codes, const Matrix& targets) {
  if (!model.classifier) fail(ErrorKind::InvalidInput, "classifier is not fit");
  if (static_cast<Index>(codes.size()) != model.num_layers()) {
    fail(ErrorKind::Dimension, "expected codes for every layer");
  }
  const Matrix gradient = input_gradient_batch(*model.classifier, classifier_features(model, X, codes), targets);
  const CoefficientMatrix& last = codes.back();
  const Matrix block = gradient.bottomRows(last.rows());
  return last - model.hyperparams.lr_a * clip_elementwise(block, model.hyperparams.clip_t1);
}

std::vector<Matrix> backprop_reps(const DstlModel& model, const CoefficientMatrix& updated_last) {
  const Index layers = model.num_layers();
  if (updated_last.rows() != model.dictionaries.back().size()) {
    fail(ErrorKind::Dimension, "updated last-layer codes do not match the last dictionary");
  }
  std::vector<Matrix> out(static_cast<std::size_t>(layers));
  out.back() = updated_last;
  for (Index l = layers - 2; l >= 0; --l) {
    out[static_cast<std::size_t>(l)] = model.dictionaries[static_cast<std::size_t>(l + 1)].atoms() *
                                       out[static_cast<std::size_t>(l + 1)];
  }
  return out;
}

Matrix dictionary_gradient(const Matrix& atoms, const Matrix& codes, const Matrix& targets) {
  if (atoms.cols() != codes.rows() || atoms.rows() != targets.rows() || codes.cols() != targets.cols()) {
    fail(ErrorKind::Dimension, "dictionary_gradient: shapes do not conform");
  }
  return (atoms * codes - targets) * codes.transpose();
}

std::vector<Matrix> update_dictionaries(const DstlModel& model, const std::vector<Matrix>& updated,
                                        const std::vector<CoefficientMatrix>& forward,
                                        const std::vector<Matrix>* base_atoms) {
  const auto layers = static_cast<std::size_t>(model.num_layers());
  if (updated.size() != layers + 1 || forward.size() != layers) {
    fail(ErrorKind::Dimension, "update_dictionaries expects A*^(0..L) and A^(1..L)");
  }
  if (base_atoms && base_atoms->size() != layers) fail(ErrorKind::Dimension, "base atoms per layer expected");
  const auto& hp = model.hyperparams;
  std::vector<Matrix> out;
  out.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& atoms = model.dictionaries[l].atoms();
    const Matrix step = clip_elementwise(dictionary_gradient(atoms, forward[l], updated[l]), hp.clip_t2);
    const Matrix& base = base_atoms ? (*base_atoms)[l] : atoms;
    if (base.rows() != atoms.rows() || base.cols() != atoms.cols()) {
      fail(ErrorKind::Dimension, "base atoms do not match the dictionary shape");
    }
    out.push_back(base - hp.lr_gamma * step);
  }
  return out;
}

SnapResult snap_to_pool(const Matrix& updated_atoms, const Dictionary& prev_atoms, const FeatureMatrix& pool,
                        double threshold) {
  if (pool.cols() == 0) fail(ErrorKind::InvalidInput, "snap pool is empty");
  if (pool.rows() != prev_atoms.dim() || updated_atoms.rows() != prev_atoms.dim() ||
      updated_atoms.cols() != prev_atoms.size()) {
    fail(ErrorKind::Dimension, "snap_to_pool: shapes do not conform");
  }
  const Index k = prev_atoms.size();
  const Matrix& prev = prev_atoms.atoms();

  std::vector<bool> snapped(static_cast<std::size_t>(k));
  for (Index a = 0; a < k; ++a) {
    const double scale = std::max(prev.col(a).norm(), std::numeric_limits<double>::min());
    snapped[static_cast<std::size_t>(a)] = threshold < 0.0 || (updated_atoms.col(a) - prev.col(a)).norm() / scale > threshold;
  }

  Matrix atoms = prev;
  std::vector<Index> sources(static_cast<std::size_t>(k), -1);
  if (prev_atoms.source_indices()) sources = *prev_atoms.source_indices();
  // value of atom a is final once it is either kept or already snapped
  std::vector<bool> fixed(static_cast<std::size_t>(k));
  for (Index a = 0; a < k; ++a) fixed[static_cast<std::size_t>(a)] = !snapped[static_cast<std::size_t>(a)];

  Vector dist(pool.cols());
  for (Index a = 0; a < k; ++a) {
    if (!snapped[static_cast<std::size_t>(a)]) continue;
    const Vector target = updated_atoms.col(a);
    parallel_for(pool.cols(), [&](Index q) { dist[q] = (pool.col(q) - target).squaredNorm(); });
    auto taken = [&](Index q) {
      for (Index b = 0; b < k; ++b) {
        if (b != a && fixed[static_cast<std::size_t>(b)] && columns_equal(atoms.col(b), pool.col(q))) return true;
      }
      return false;
    };
    Index best = -1;
    for (Index q = 0; q < pool.cols(); ++q) {
      if ((best < 0 || dist[q] < dist[best]) && !taken(q)) best = q;
    }
    if (best < 0) fail(ErrorKind::Infeasible, "snap pool has too few distinct columns");
    atoms.col(a) = pool.col(best);
    sources[static_cast<std::size_t>(a)] = best;
    fixed[static_cast<std::size_t>(a)] = true;
  }

  int changed = 0;
  for (Index a = 0; a < k; ++a) changed += columns_equal(atoms.col(a), prev.col(a)) ? 0 : 1;

  const bool all_known = std::none_of(sources.begin(), sources.end(), [](Index s) { return s < 0; });
  return {Dictionary(std::move(atoms), all_known ? std::optional(sources) : std::nullopt), std::move(snapped),
          changed};
}

DstlModel refit(DstlModel model, const LabeledDataset& labeled) {
  const auto codes = encode(model, labeled.X);
  model.classifier =
      fit_softmax(classifier_features(model, labeled.X, codes), labeled.targets, model.hyperparams.classifier).params;
  return model;
}

std::vector<FeatureMatrix> layer_pools(const DstlModel& model, const FeatureMatrix& unlabeled) {
  std::vector<FeatureMatrix> pools;
  pools.push_back(unlabeled);
  for (Index l = 1; l < model.num_layers(); ++l) {
    pools.push_back(code_batch(model.dictionaries[static_cast<std::size_t>(l - 1)], pools.back(),
                               model.hyperparams.coding));
  }
  return pools;
}

TrainResult train(DstlModel model, const LabeledDataset& labeled, const LabeledDataset& validation,
                  const FeatureMatrix& unlabeled, const TrainCallback& on_iteration) {
  const Hyperparams& hp = model.hyperparams;
  hp.validate();
  if (model.num_layers() != hp.num_layers()) fail(ErrorKind::InvalidInput, "model is not pretrained");
  if (labeled.size() == 0) fail(ErrorKind::InvalidInput, "no labeled training samples");
  if (validation.size() > 0 && validation.num_classes != labeled.num_classes) {
    fail(ErrorKind::InvalidInput, "training and validation class counts differ");
  }

  const auto layers = static_cast<std::size_t>(model.num_layers());
  std::vector<FeatureMatrix> pools = layer_pools(model, unlabeled);

  std::vector<CoefficientMatrix> codes = encode(model, labeled.X);
  model.classifier =
      fit_softmax(classifier_features(model, labeled.X, codes), labeled.targets, hp.classifier).params;
  double accuracy = validation_accuracy(model, validation);
  std::vector<double> residuals = layer_residuals(model, labeled.X, codes);

  TrainResult result{model, {}};
  result.trace.records.push_back({0, residuals, accuracy, 0});
  double best_accuracy = accuracy;
  if (on_iteration) on_iteration({result.trace.records.back(), model, pools});

  // Continuous atom positions accumulated since the last snap; the model
  // itself only ever holds pool columns.
  std::vector<Matrix> drift(layers);
  for (std::size_t l = 0; l < layers; ++l) drift[l] = model.dictionaries[l].atoms();

  for (int it = 1; it <= hp.max_outer_iter; ++it) {
    try {
      // steps 1 and 2
      const CoefficientMatrix last = update_last_layer_reps(model, labeled.X, codes, labeled.targets);
      std::vector<Matrix> updated = backprop_reps(model, last);
      updated.insert(updated.begin(), labeled.X);

      // step 3
      std::vector<Matrix> moved = update_dictionaries(model, updated, codes, &drift);
      double motion = 0.0;
      for (std::size_t l = 0; l < layers; ++l) {
        motion = std::max(motion, (moved[l] - drift[l]).cwiseAbs().maxCoeff());
      }
      drift = std::move(moved);

      // snapping, shallow to deep: a changed layer changes the pool of the next one
      int snaps = 0;
      bool any_changed = false;
      bool pool_changed = false;
      for (std::size_t l = 0; l < layers; ++l) {
        bool layer_changed = false;
        if (pool_changed) {
          pools[l] = code_batch(model.dictionaries[l - 1], pools[l - 1], hp.coding);
          SnapResult anchor = snap_to_pool(model.dictionaries[l].atoms(), model.dictionaries[l], pools[l], -1.0);
          layer_changed = anchor.changed > 0;
          model.dictionaries[l] = std::move(anchor.dictionary);
          drift[l] = model.dictionaries[l].atoms();
        }
        SnapResult snap = snap_to_pool(drift[l], model.dictionaries[l], pools[l], hp.snap_threshold);
        for (Index a = 0; a < snap.dictionary.size(); ++a) {
          if (!columns_equal(snap.dictionary.atoms().col(a), model.dictionaries[l].atoms().col(a))) {
            drift[l].col(a) = snap.dictionary.atoms().col(a);
          }
        }
        snaps += snap.changed;
        layer_changed = layer_changed || snap.changed > 0;
        model.dictionaries[l] = std::move(snap.dictionary);
        pool_changed = layer_changed;
        any_changed = any_changed || layer_changed;
      }

      // step 4
      if (any_changed) {
        codes = encode(model, labeled.X);
        model.classifier =
            fit_softmax(classifier_features(model, labeled.X, codes), labeled.targets, hp.classifier).params;
        accuracy = validation_accuracy(model, validation);
        residuals = layer_residuals(model, labeled.X, codes);
      }

      result.trace.records.push_back({it, residuals, accuracy, snaps});
      if (accuracy > best_accuracy) {
        best_accuracy = accuracy;
        result.best = model;
        result.trace.best_iteration = it;
      }
      log::debug("iteration ", it, ": validation ", accuracy, "%, snaps ", snaps, ", max motion ", motion);
      if (on_iteration) on_iteration({result.trace.records.back(), model, pools});

      if (!any_changed && motion <= 1e-12) {
        log::info("dictionaries converged after ", it, " iterations");
        break;
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "training iteration " + std::to_string(it));
    }
  }
  return result;
}

}  // namespace dstl
