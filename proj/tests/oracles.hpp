#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical kernels.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct GridResult {
  Vector alpha;
  double residual_sq = std::numeric_limits<double>::infinity();
};

/// Enumerates every point of the probability simplex on a lattice with
/// `divisions` steps per unit and keeps the smallest ||D a - x||^2.
inline GridResult simplex_grid_search(const Matrix& D, const Vector& x, int divisions) {
  const Index k = D.cols();
  GridResult best;
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  Vector alpha(k);
  const double step = 1.0 / divisions;
  std::function<void(Index, int)> rec = [&](Index pos, int remaining) {
    if (pos == k - 1) {
      counts[static_cast<std::size_t>(pos)] = remaining;
      for (Index i = 0; i < k; ++i) alpha[i] = counts[static_cast<std::size_t>(i)] * step;
      const double r = (D * alpha - x).squaredNorm();
      if (r < best.residual_sq) {
        best.residual_sq = r;
        best.alpha = alpha;
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[static_cast<std::size_t>(pos)] = c;
      rec(pos + 1, remaining - c);
    }
  };
  rec(0, divisions);
  return best;
}

/// Exact simplex-constrained least squares for small K: for every support
/// set solve the equality-constrained problem through its KKT system and keep
/// the best feasible candidate.
inline GridResult simplex_active_set(const Matrix& D, const Vector& x) {
  const Index k = D.cols();
  GridResult best;
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<Index> support;
    for (Index i = 0; i < k; ++i) {
      if (mask & (1u << i)) support.push_back(i);
    }
    const Index s = static_cast<Index>(support.size());
    Matrix kkt = Matrix::Zero(s + 1, s + 1);
    Vector rhs = Vector::Zero(s + 1);
    for (Index a = 0; a < s; ++a) {
      for (Index b = 0; b < s; ++b) kkt(a, b) = 2.0 * D.col(support[a]).dot(D.col(support[b]));
      kkt(a, s) = 1.0;
      kkt(s, a) = 1.0;
      rhs[a] = 2.0 * D.col(support[a]).dot(x);
    }
    rhs[s] = 1.0;
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Vector alpha = Vector::Zero(k);
    bool feasible = true;
    for (Index a = 0; a < s; ++a) {
      if (sol[a] < -1e-12) feasible = false;
      alpha[support[a]] = std::max(0.0, sol[a]);
    }
    if (!feasible || std::abs(alpha.sum() - 1.0) > 1e-9) continue;
    alpha /= alpha.sum();
    const double r = (D * alpha - x).squaredNorm();
    if (r < best.residual_sq) {
      best.residual_sq = r;
      best.alpha = alpha;
    }
  }
  return best;
}

inline Matrix naive_product(const Matrix& A, const Matrix& B) {
  Matrix C = Matrix::Zero(A.rows(), B.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < B.cols(); ++j) {
      long double acc = 0.0L;
      for (Index k = 0; k < A.cols(); ++k) acc += static_cast<long double>(A(i, k)) * B(k, j);
      C(i, j) = static_cast<double>(acc);
    }
  }
  return C;
}

inline double sum_of_squares(const Matrix& M) {
  long double acc = 0.0L;
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) acc += static_cast<long double>(M(i, j)) * M(i, j);
  }
  return static_cast<double>(acc);
}

/// Squared volume of the simplex spanned by the columns of P through the
/// Cayley-Menger determinant.
inline double cayley_menger_volume_sq(const Matrix& P) {
  const Index n = P.cols();
  Matrix cm = Matrix::Zero(n + 1, n + 1);
  for (Index i = 1; i <= n; ++i) {
    cm(0, i) = 1.0;
    cm(i, 0) = 1.0;
    for (Index j = 1; j <= n; ++j) cm(i, j) = (P.col(i - 1) - P.col(j - 1)).squaredNorm();
  }
  const Index k = n - 1;  // simplex dimension
  double factorial = 1.0;
  for (Index i = 2; i <= k; ++i) factorial *= static_cast<double>(i);
  const double sign = (k + 1) % 2 == 0 ? 1.0 : -1.0;
  return sign * cm.determinant() / (std::pow(2.0, static_cast<double>(k)) * factorial * factorial);
}

/// Area of the convex hull of 2-D points (monotone chain + shoelace).
inline double hull_area_2d(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;
  auto cross = [](auto o, auto a, auto b) {
    return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a.first * b.second - b.first * a.second;
  }
  return std::abs(area) / 2.0;
}

/// Volume of the K-subset of 2-D pool columns: Cayley-Menger simplex area for
/// three points, convex hull area for more.
inline double subset_volume_2d(const Matrix& pool, const std::vector<Index>& subset) {
  if (subset.size() == 3) {
    Matrix P(2, 3);
    for (std::size_t i = 0; i < 3; ++i) P.col(static_cast<Index>(i)) = pool.col(subset[i]);
    return std::sqrt(std::max(0.0, cayley_menger_volume_sq(P)));
  }
  std::vector<std::pair<double, double>> pts;
  for (Index i : subset) pts.emplace_back(pool(0, i), pool(1, i));
  return hull_area_2d(pts);
}

// Best K-subset by exhaustive enumeration; earliest subset in lexicographic order on ties.
inline std::vector<Index> max_volume_subset_2d(const Matrix& pool, Index k) {
  std::vector<Index> best;
  double best_volume = -1.0;
  std::vector<Index> current;
  std::function<void(Index)> rec = [&](Index start) {
    if (static_cast<Index>(current.size()) == k) {
      const double v = subset_volume_2d(pool, current);
      if (v > best_volume + 1e-12) {
        best_volume = v;
        best = current;
      }
      return;
    }
    for (Index i = start; i < pool.cols(); ++i) {
      current.push_back(i);
      rec(i + 1);
      current.pop_back();
    }
  };
  rec(0);
  return best;
}

/// Central finite-difference gradient of a scalar function of a matrix.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double h) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Index i = 0; i < at.rows(); ++i) {
    for (Index j = 0; j < at.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

/// Softmax probabilities with long double accumulation.
inline Vector softmax_extended(const Matrix& W, const Vector& b, const Vector& a) {
  const Index c = W.rows();
  std::vector<long double> z(static_cast<std::size_t>(c));
  long double peak = -std::numeric_limits<long double>::infinity();
  for (Index i = 0; i < c; ++i) {
    long double acc = b[i];
    for (Index j = 0; j < W.cols(); ++j) acc += static_cast<long double>(W(i, j)) * a[j];
    z[static_cast<std::size_t>(i)] = acc;
    peak = std::max(peak, acc);
  }
  long double total = 0.0L;
  for (auto& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  Vector p(c);
  for (Index i = 0; i < c; ++i) p[i] = static_cast<double>(z[static_cast<std::size_t>(i)] / total);
  return p;
}

/// Relative error used by gradient checks: ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline Vector random_simplex_point(std::mt19937_64& rng, Index k) {
  std::exponential_distribution<double> e(1.0);
  Vector v(k);
  for (Index i = 0; i < k; ++i) v[i] = e(rng);
  return v / v.sum();
}

/// 2-D pool whose convex hull has exactly k vertices: k points at sorted
/// random angles on a circle plus `interior` convex mixtures pulled toward the
/// centroid, shuffled. `hull` receives the sorted pool indices of the vertices.
inline Matrix hull_pool_2d(std::mt19937_64& rng, Index k, Index interior, std::vector<Index>& hull) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> radius(0.7, 1.3);
  std::vector<double> angles(static_cast<std::size_t>(k));
  for (auto& a : angles) a = angle(rng);
  std::sort(angles.begin(), angles.end());
  const double r = radius(rng);
  Matrix vertices(2, k);
  for (Index i = 0; i < k; ++i) {
    vertices(0, i) = r * std::cos(angles[static_cast<std::size_t>(i)]);
    vertices(1, i) = r * std::sin(angles[static_cast<std::size_t>(i)]);
  }
  const Vector centroid = vertices.rowwise().mean();
  Matrix points(2, k + interior);
  points.leftCols(k) = vertices;
  for (Index j = 0; j < interior; ++j) {
    const Vector mix = vertices * random_simplex_point(rng, k);
    points.col(k + j) = centroid + 0.95 * (mix - centroid);
  }
  std::vector<Index> perm(static_cast<std::size_t>(k + interior));
  for (Index i = 0; i < k + interior; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pool(2, k + interior);
  hull.clear();
  for (Index j = 0; j < k + interior; ++j) {
    pool.col(j) = points.col(perm[static_cast<std::size_t>(j)]);
    if (perm[static_cast<std::size_t>(j)] < k) hull.push_back(j);
  }
  return pool;
}

}  // namespace oracle
