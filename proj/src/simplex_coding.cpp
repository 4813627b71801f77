#include "dstl/simplex_coding.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace dstl {

Dictionary::Dictionary(Matrix atoms, std::optional<std::vector<Index>> source_indices)
    : atoms_(std::move(atoms)), source_indices_(std::move(source_indices)) {
  if (atoms_.rows() < 1) fail(ErrorKind::InvalidInput, "dictionary atoms must have at least one row");
  if (atoms_.cols() < 2) fail(ErrorKind::InvalidInput, "dictionary needs at least two atoms");
  require_finite(atoms_, "dictionary");
  if (source_indices_ && static_cast<Index>(source_indices_->size()) != atoms_.cols()) {
    fail(ErrorKind::Dimension, "dictionary source_indices length differs from atom count");
  }
  for (Index i = 0; i < atoms_.cols(); ++i) {
    for (Index j = i + 1; j < atoms_.cols(); ++j) {
      if (columns_equal(atoms_.col(i), atoms_.col(j))) {
        fail(ErrorKind::InvalidInput,
             "dictionary atoms " + std::to_string(i) + " and " + std::to_string(j) + " are identical");
      }
    }
  }
}

Vector project_to_simplex(const Vector& v) {
  const Index n = v.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] > v[b]; });

  double cumsum = 0.0;
  double theta = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumsum += v[order[static_cast<std::size_t>(j)]];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (v[order[static_cast<std::size_t>(j)]] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

double power_iteration(const Matrix& sym, int iterations, double tol) {
  const Index n = sym.rows();
  Vector v = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = sym * v;
    const double norm = w.norm();
    if (norm == 0.0) break;
    const double next = v.dot(w);
    v = w / norm;
    const bool done = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
    lambda = next;
    if (done) break;
  }
  return lambda;
}

SimplexCoder::SimplexCoder(const Dictionary& dict, CodingOptions options)
    : atoms_(dict.atoms()), gram_(atoms_.transpose() * atoms_), options_(options) {
  if (!(options_.tol > 0.0)) fail(ErrorKind::InvalidInput, "coding tolerance must be positive");
  if (options_.max_iter < 1) fail(ErrorKind::InvalidInput, "coding max_iter must be at least 1");
  lipschitz_ = power_iteration(gram_);
  if (!(lipschitz_ > 0.0) || !std::isfinite(lipschitz_)) {
    fail(ErrorKind::Numerical, "could not estimate the Lipschitz constant of the coding problem");
  }
}

Vector SimplexCoder::code_unchecked(const Eigen::Ref<const Vector>& x) const {
  const Index k = atoms_.cols();
  const Vector dtx = atoms_.transpose() * x;
  const double step = 1.0 / lipschitz_;
  Vector alpha = Vector::Constant(k, 1.0 / static_cast<double>(k));
  for (int it = 0; it < options_.max_iter; ++it) {
    Vector next = project_to_simplex(alpha - step * (gram_ * alpha - dtx));
    const double change = (next - alpha).cwiseAbs().maxCoeff();
    alpha = std::move(next);
    if (change < options_.tol) break;
  }
  return alpha;
}

Vector SimplexCoder::code(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != atoms_.rows()) {
    fail(ErrorKind::Dimension, "sample has dimension " + std::to_string(x.size()) + ", dictionary expects " +
                                   std::to_string(atoms_.rows()));
  }
  if (!x.allFinite()) fail(ErrorKind::InvalidInput, "sample contains non-finite entries");
  return code_unchecked(x);
}

CoefficientMatrix SimplexCoder::code_batch(const FeatureMatrix& X) const {
  if (X.rows() != atoms_.rows()) {
    fail(ErrorKind::Dimension, "feature matrix has " + std::to_string(X.rows()) + " rows, dictionary expects " +
                                   std::to_string(atoms_.rows()));
  }
  for (Index j = 0; j < X.cols(); ++j) {
    if (!X.col(j).allFinite()) {
      fail(ErrorKind::InvalidInput, "column " + std::to_string(j) + " contains non-finite entries");
    }
  }
  CoefficientMatrix codes(atoms_.cols(), X.cols());
  parallel_for(X.cols(), [&](Index j) { codes.col(j) = code_unchecked(X.col(j)); });
  return codes;
}

Vector code_sample(const Dictionary& dict, const Vector& x, CodingOptions options) {
  return SimplexCoder(dict, options).code(x);
}

CoefficientMatrix code_batch(const Dictionary& dict, const FeatureMatrix& X, CodingOptions options) {
  return SimplexCoder(dict, options).code_batch(X);
}

FeatureMatrix reconstruct(const Dictionary& dict, const CoefficientMatrix& A) {
  if (A.rows() != dict.size()) {
    fail(ErrorKind::Dimension, "code matrix has " + std::to_string(A.rows()) + " rows, dictionary has " +
                                   std::to_string(dict.size()) + " atoms");
  }
  return dict.atoms() * A;
}

double residual_norm(const Dictionary& dict, const FeatureMatrix& X, const CoefficientMatrix& A) {
  if (X.rows() != dict.dim() || X.cols() != A.cols()) {
    fail(ErrorKind::Dimension, "residual_norm: shapes do not conform");
  }
  return (reconstruct(dict, A) - X).norm();
}

}  // namespace dstl
