#pragma once

#include "dstl/common.hpp"

#include <vector>

namespace dstl {

/// Multinomial logistic regression parameters: C x K_in weights plus a bias
/// per class.
struct SoftmaxParams {
  Matrix weights;
  Vector bias;

  Index num_classes() const { return weights.rows(); }
  Index input_dim() const { return weights.cols(); }
  Index parameter_count() const { return (input_dim() + 1) * num_classes(); }
};

struct FitOptions {
  double reg = 1e-4;
  int max_iter = 500;
  double tol = 1e-6;
};

struct FitResult {
  SoftmaxParams params;
  int iterations = 0;
  double gradient_norm = 0.0;  // infinity norm at the returned parameters
  std::vector<double> loss_history;
};

// Mean cross-entropy plus reg/2 * ||W||^2 (bias unregularized).
double softmax_loss(const SoftmaxParams& params, const Matrix& features, const Matrix& targets, double reg);

/// Full-batch gradient descent with Armijo backtracking from zero
/// initialization. Stops once the gradient infinity norm reaches `tol`.
FitResult fit_softmax(const Matrix& features, const Matrix& targets, FitOptions options = {});

Matrix predict_proba(const SoftmaxParams& params, const Matrix& features);

// 1-based class labels; ties resolve to the smallest class.
std::vector<int> argmax_labels(const Matrix& probabilities);
std::vector<int> predict_label(const SoftmaxParams& params, const Matrix& features);

/// Gradient of J(a) = 1/2 ||t - softmax(W a + b)||^2 with respect to a.
Vector input_gradient(const SoftmaxParams& params, const Vector& a, const Vector& t);
// Column-wise input_gradient for a batch of features and targets.
Matrix input_gradient_batch(const SoftmaxParams& params, const Matrix& features, const Matrix& targets);

// Validates a C x N 1-of-C target matrix.
void require_one_hot(const Matrix& targets);

}  // namespace dstl
