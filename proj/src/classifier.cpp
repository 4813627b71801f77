#include "dstl/classifier.hpp"
#include "dstl/log.hpp"

#include <cmath>
#include <string>

namespace dstl {
namespace {

void softmax_columns(Matrix& logits) {
  for (Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

void check_shapes(const SoftmaxParams& params, const Matrix& features) {
  if (features.rows() != params.input_dim()) {
    fail(ErrorKind::Dimension, "classifier expects " + std::to_string(params.input_dim()) +
                                   "-dimensional features, got " + std::to_string(features.rows()));
  }
  if (params.bias.size() != params.num_classes()) fail(ErrorKind::Dimension, "bias length differs from class count");
}

struct Gradient {
  Matrix weights;
  Vector bias;
  double inf_norm() const {
    return std::max(weights.size() ? weights.cwiseAbs().maxCoeff() : 0.0,
                    bias.size() ? bias.cwiseAbs().maxCoeff() : 0.0);
  }
  double squared_norm() const { return weights.squaredNorm() + bias.squaredNorm(); }
};

Gradient loss_gradient(const SoftmaxParams& params, const Matrix& features, const Matrix& targets, double reg) {
  const double n = static_cast<double>(features.cols());
  const Matrix residual = predict_proba(params, features) - targets;
  return {residual * features.transpose() / n + reg * params.weights, residual.rowwise().sum() / n};
}

}  // namespace

void require_one_hot(const Matrix& targets) {
  for (Index j = 0; j < targets.cols(); ++j) {
    int ones = 0;
    for (Index c = 0; c < targets.rows(); ++c) {
      const double v = targets(c, j);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        fail(ErrorKind::InvalidInput, "target column " + std::to_string(j) + " is not 1-of-C");
      }
    }
    if (ones != 1) fail(ErrorKind::InvalidInput, "target column " + std::to_string(j) + " is not 1-of-C");
  }
}

Matrix predict_proba(const SoftmaxParams& params, const Matrix& features) {
  check_shapes(params, features);
  Matrix logits = params.weights * features;
  logits.colwise() += params.bias;
  softmax_columns(logits);
  return logits;
}

double softmax_loss(const SoftmaxParams& params, const Matrix& features, const Matrix& targets, double reg) {
  check_shapes(params, features);
  Matrix logits = params.weights * features;
  logits.colwise() += params.bias;
  double total = 0.0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const double peak = logits.col(j).maxCoeff();
    const double lse = peak + std::log((logits.col(j).array() - peak).exp().sum());
    total += lse - targets.col(j).dot(logits.col(j));
  }
  return total / static_cast<double>(features.cols()) + 0.5 * reg * params.weights.squaredNorm();
}

FitResult fit_softmax(const Matrix& features, const Matrix& targets, FitOptions options) {
  if (features.cols() != targets.cols()) {
    fail(ErrorKind::Dimension, "feature and target column counts differ");
  }
  if (features.cols() == 0) fail(ErrorKind::InvalidInput, "cannot fit a classifier on zero samples");
  if (targets.rows() < 2) fail(ErrorKind::InvalidInput, "classifier needs at least two classes");
  if (!(options.reg >= 0.0)) fail(ErrorKind::InvalidInput, "regularization must be non-negative");
  require_finite(features, "classifier features");
  require_one_hot(targets);

  const Vector counts = targets.rowwise().sum();
  for (Index c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0.0) log::warn("class ", c + 1, " is absent from the training targets");
  }

  FitResult result;
  SoftmaxParams& params = result.params;
  params.weights = Matrix::Zero(targets.rows(), features.rows());
  params.bias = Vector::Zero(targets.rows());

  double loss = softmax_loss(params, features, targets, options.reg);
  result.loss_history.push_back(loss);
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  for (int it = 0; it < options.max_iter; ++it) {
    const Gradient g = loss_gradient(params, features, targets, options.reg);
    result.gradient_norm = g.inf_norm();
    if (result.gradient_norm <= options.tol) break;
    const double g_sq = g.squared_norm();

    step *= 2.0;
    SoftmaxParams trial;
    double trial_loss = loss;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      trial.weights = params.weights - step * g.weights;
      trial.bias = params.bias - step * g.bias;
      trial_loss = softmax_loss(trial, features, targets, options.reg);
      if (trial_loss <= loss - kArmijo * step * g_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step underflow: no further descent is representable
    params = std::move(trial);
    loss = trial_loss;
    result.loss_history.push_back(loss);
    result.iterations = it + 1;
  }
  result.gradient_norm = loss_gradient(params, features, targets, options.reg).inf_norm();
  return result;
}

std::vector<int> argmax_labels(const Matrix& probabilities) {
  std::vector<int> labels(static_cast<std::size_t>(probabilities.cols()));
  for (Index j = 0; j < probabilities.cols(); ++j) {
    Index best = 0;
    for (Index c = 1; c < probabilities.rows(); ++c) {
      if (probabilities(c, j) > probabilities(best, j)) best = c;
    }
    labels[static_cast<std::size_t>(j)] = static_cast<int>(best) + 1;
  }
  return labels;
}

std::vector<int> predict_label(const SoftmaxParams& params, const Matrix& features) {
  return argmax_labels(predict_proba(params, features));
}

Vector input_gradient(const SoftmaxParams& params, const Vector& a, const Vector& t) {
  if (a.size() != params.input_dim() || t.size() != params.num_classes()) {
    fail(ErrorKind::Dimension, "input_gradient: shapes do not conform");
  }
  const Vector p = predict_proba(params, a);
  const Vector dloss_dp = p - t;
  // softmax Jacobian (diag(p) - p p^T) applied to dJ/dp
  const Vector dloss_dz = p.cwiseProduct(dloss_dp) - p * p.dot(dloss_dp);
  return params.weights.transpose() * dloss_dz;
}

Matrix input_gradient_batch(const SoftmaxParams& params, const Matrix& features, const Matrix& targets) {
  if (features.cols() != targets.cols() || targets.rows() != params.num_classes()) {
    fail(ErrorKind::Dimension, "input_gradient_batch: shapes do not conform");
  }
  const Matrix p = predict_proba(params, features);
  const Matrix dloss_dp = p - targets;
  Matrix dloss_dz = p.cwiseProduct(dloss_dp);
  const Eigen::RowVectorXd inner = p.cwiseProduct(dloss_dp).colwise().sum();
  dloss_dz -= p * inner.asDiagonal();
  return params.weights.transpose() * dloss_dz;
}

}  // namespace dstl
