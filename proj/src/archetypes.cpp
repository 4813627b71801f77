#include "dstl/archetypes.hpp"

#include <limits>
#include <numeric>
#include <string>

namespace dstl {
namespace {

Vector squared_distances(const FeatureMatrix& pool, const Eigen::Ref<const Vector>& point) {
  Vector d(pool.cols());
  parallel_for(pool.cols(), [&](Index q) { d[q] = (pool.col(q) - point).squaredNorm(); });
  return d;
}

// Largest score among eligible, unselected columns; smallest index on ties.
Index arg_best(const Vector& score, const std::vector<bool>& eligible) {
  Index best = -1;
  for (Index q = 0; q < score.size(); ++q) {
    if (!eligible[static_cast<std::size_t>(q)]) continue;
    if (best < 0 || score[q] > score[best]) best = q;
  }
  return best;
}

}  // namespace

std::vector<bool> first_occurrence_mask(const FeatureMatrix& pool) {
  const Index n = pool.cols();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto lex_less = [&](Index a, Index b) {
    for (Index r = 0; r < pool.rows(); ++r) {
      if (pool(r, a) != pool(r, b)) return pool(r, a) < pool(r, b);
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), lex_less);

  std::vector<bool> mask(static_cast<std::size_t>(n), true);
  for (std::size_t i = 1; i < order.size(); ++i) {
    // stable sort keeps equal columns in ascending index order
    if (columns_equal(pool.col(order[i - 1]), pool.col(order[i]))) mask[static_cast<std::size_t>(order[i])] = false;
  }
  return mask;
}

ArchetypeSelection select_archetypes(const FeatureMatrix& pool, Index k) {
  if (k < 2) fail(ErrorKind::InvalidInput, "archetype count must be at least 2");
  if (pool.cols() < 1 || pool.rows() < 1) fail(ErrorKind::InvalidInput, "empty archetype pool");
  require_finite(pool, "archetype pool");

  std::vector<bool> eligible = first_occurrence_mask(pool);
  const auto distinct = std::count(eligible.begin(), eligible.end(), true);
  if (k > distinct) {
    fail(ErrorKind::Infeasible, "requested " + std::to_string(k) + " archetypes but pool has only " +
                                    std::to_string(distinct) + " distinct columns");
  }

  const Vector centroid = pool.rowwise().mean();
  const Index first = arg_best(squared_distances(pool, centroid), eligible);
  Vector d = squared_distances(pool, pool.col(first));
  eligible[static_cast<std::size_t>(first)] = false;
  const Index second = arg_best(d, eligible);
  eligible[static_cast<std::size_t>(second)] = false;
  const double alpha = d[second];

  ArchetypeSelection selection;
  selection.pool_size = pool.cols();
  selection.indices = {first, second};

  const Index q_count = pool.cols();
  Vector sum_b = Vector::Zero(q_count);
  Vector sum_b_sq = Vector::Zero(q_count);
  Vector cross = Vector::Zero(q_count);
  auto absorb = [&](const Vector& b) {
    cross.array() += b.array() * sum_b.array();
    sum_b += b;
    sum_b_sq.array() += b.array().square();
  };
  absorb(d);
  absorb(squared_distances(pool, pool.col(second)));

  while (static_cast<Index>(selection.indices.size()) < k) {
    const double n = static_cast<double>(selection.indices.size());
    const Vector score = alpha * sum_b + cross - 0.5 * (n - 1.0) * sum_b_sq;
    const Index next = arg_best(score, eligible);
    eligible[static_cast<std::size_t>(next)] = false;
    selection.indices.push_back(next);
    if (static_cast<Index>(selection.indices.size()) < k) absorb(squared_distances(pool, pool.col(next)));
  }
  return selection;
}

Dictionary build_dictionary(const FeatureMatrix& pool, const ArchetypeSelection& selection) {
  if (selection.pool_size != pool.cols()) {
    fail(ErrorKind::Dimension, "selection was made on a pool of a different size");
  }
  Matrix atoms(pool.rows(), static_cast<Index>(selection.indices.size()));
  for (std::size_t i = 0; i < selection.indices.size(); ++i) {
    const Index idx = selection.indices[i];
    if (idx < 0 || idx >= pool.cols()) {
      fail(ErrorKind::InvalidInput, "selection index " + std::to_string(idx) + " out of range");
    }
    atoms.col(static_cast<Index>(i)) = pool.col(idx);
  }
  return Dictionary(std::move(atoms), selection.indices);
}

}  // namespace dstl
