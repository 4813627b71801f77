#pragma once

#include "dstl/common.hpp"
#include "dstl/simplex_coding.hpp"

#include <vector>

namespace dstl {

struct ArchetypeSelection {
  std::vector<Index> indices;
  Index pool_size = 0;
};

// Mask of columns eligible for selection: the first occurrence of every
// distinct column value.
std::vector<bool> first_occurrence_mask(const FeatureMatrix& pool);

/// Greedy simplex volume maximization over the columns of `pool`.
///
/// The first pair comes from two farthest-point passes: the column farthest
/// from the pool centroid, then the column farthest from that one. Every
/// further pick maximizes the Cayley-Menger volume of the grown simplex under
/// the assumption that all already selected vertices are mutually at the
/// squared distance `alpha` of the initial pair:
///
///   score(q) = alpha * sum_i b_iq + sum_{i<j} b_iq b_jq - (n - 1)/2 * sum_i b_iq^2
///
/// with b_iq the squared distance from candidate q to selected vertex i and n
/// the number of selected vertices. The three sums are updated incrementally,
/// so a selection of K atoms costs O(K * Q * M). Ties go to the smaller index.
ArchetypeSelection select_archetypes(const FeatureMatrix& pool, Index k);

Dictionary build_dictionary(const FeatureMatrix& pool, const ArchetypeSelection& selection);

}  // namespace dstl
