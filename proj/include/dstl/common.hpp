#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace dstl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Column-major sample matrix: one M-dimensional sample per column.
using FeatureMatrix = Matrix;
// K x N simplex-constrained codes, one column per sample.
using CoefficientMatrix = Matrix;

enum class ErrorKind {
  InvalidInput,
  Dimension,
  Infeasible,
  Io,
  Config,
  Numerical,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

// Global worker count for the column-parallel kernels. 0 selects the number
// of available cores. Every kernel writes disjoint outputs per index, so the
// results do not depend on this setting.
void set_thread_count(int threads);
int thread_count();

template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
  const Index workers = std::min<Index>(thread_count(), n);
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (n + workers - 1) / workers;
  for (Index w = 0; w < workers; ++w) {
    const Index begin = w * chunk;
    const Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (Index i = begin; i < end; ++i) fn(i);
    });
  }
}

// Exact bitwise comparison of two columns.
bool columns_equal(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

}  // namespace dstl
