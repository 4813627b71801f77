#pragma once

#include "dstl/common.hpp"

#include <optional>
#include <vector>

namespace dstl {

/// M x K matrix of archetype atoms. Atoms are pairwise distinct and there are
/// at least two of them; when the atoms were drawn from a sample pool the
/// pool column of each atom is kept in source_indices().
class Dictionary {
 public:
  explicit Dictionary(Matrix atoms, std::optional<std::vector<Index>> source_indices = std::nullopt);

  const Matrix& atoms() const { return atoms_; }
  Index dim() const { return atoms_.rows(); }
  Index size() const { return atoms_.cols(); }
  const std::optional<std::vector<Index>>& source_indices() const { return source_indices_; }

  friend bool operator==(const Dictionary& a, const Dictionary& b) {
    return a.atoms_.rows() == b.atoms_.rows() && a.atoms_.cols() == b.atoms_.cols() &&
           a.atoms_ == b.atoms_ && a.source_indices_ == b.source_indices_;
  }

 private:
  Matrix atoms_;
  std::optional<std::vector<Index>> source_indices_;
};

struct CodingOptions {
  double tol = 1e-8;
  int max_iter = 2000;
};

// Euclidean projection onto the probability simplex {a >= 0, sum a = 1}.
// Sort-based; equal entries keep their original index order.
Vector project_to_simplex(const Vector& v);

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double power_iteration(const Matrix& sym, int iterations = 50, double tol = 1e-10);

/// Projected gradient solver for min ||D a - x||^2 over the probability
/// simplex. Construction precomputes D^T D and the 1/L step, so one coder
/// can be shared across columns and threads.
class SimplexCoder {
 public:
  explicit SimplexCoder(const Dictionary& dict, CodingOptions options = {});

  Vector code(const Eigen::Ref<const Vector>& x) const;
  CoefficientMatrix code_batch(const FeatureMatrix& X) const;

  double lipschitz() const { return lipschitz_; }
  const CodingOptions& options() const { return options_; }

 private:
  Vector code_unchecked(const Eigen::Ref<const Vector>& x) const;

  Matrix atoms_;
  Matrix gram_;
  double lipschitz_;
  CodingOptions options_;
};

Vector code_sample(const Dictionary& dict, const Vector& x, CodingOptions options = {});
CoefficientMatrix code_batch(const Dictionary& dict, const FeatureMatrix& X, CodingOptions options = {});
FeatureMatrix reconstruct(const Dictionary& dict, const CoefficientMatrix& A);
// Frobenius norm of D*A - X.
double residual_norm(const Dictionary& dict, const FeatureMatrix& X, const CoefficientMatrix& A);

}  // namespace dstl
