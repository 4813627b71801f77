#include "dstl/datapipe.hpp"
#include "dstl/simplex_coding.hpp"

#include <random>
#include <string>

namespace dstl {
namespace {

constexpr double kHullTolerance = 1e-6;

Vector dirichlet_flat(std::mt19937_64& rng, Index n) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = gamma(rng);
  return w / w.sum();
}

}  // namespace

double distance_to_hull(const FeatureMatrix& points, const Vector& x) {
  if (points.cols() == 0) fail(ErrorKind::InvalidInput, "empty point set");
  if (points.cols() == 1) return (points.col(0) - x).norm();
  const Dictionary dict(points);
  const Vector alpha = code_sample(dict, x, {1e-12, 20000});
  return (points * alpha - x).norm();
}

SynthData synth_generate(const SynthParams& p) {
  if (p.n_classes < 2 || p.n_archetypes < p.n_classes) {
    fail(ErrorKind::Infeasible, "need n_archetypes >= n_classes >= 2");
  }
  if (p.dim < 1 || p.n_samples < 1 || p.n_unlabeled < 0 || !(p.noise_sigma >= 0.0) || !(p.min_separation >= 0.0)) {
    fail(ErrorKind::Infeasible, "invalid synthetic data parameters");
  }
  if (p.dim == 1 && p.n_archetypes > 2) {
    fail(ErrorKind::Infeasible, "a line has only two hull vertices");
  }

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SynthData out;
  out.generators.resize(p.dim, p.n_archetypes);
  constexpr int kMaxAttempts = 100000;
  int attempts = 0;
  for (Index g = 0; g < p.n_archetypes;) {
    if (++attempts > kMaxAttempts) {
      fail(ErrorKind::Infeasible, "could not place " + std::to_string(p.n_archetypes) +
                                      " unit generators with separation " + std::to_string(p.min_separation));
    }
    Vector v(p.dim);
    for (Index i = 0; i < p.dim; ++i) v[i] = normal(rng);
    if (v.norm() == 0.0) continue;
    v.normalize();
    bool separated = true;
    for (Index h = 0; h < g && separated; ++h) separated = (out.generators.col(h) - v).norm() >= p.min_separation;
    if (!separated) continue;
    out.generators.col(g++) = v;
  }
  for (Index g = 0; g < p.n_archetypes; ++g) out.generator_class.push_back(static_cast<int>(g % p.n_classes) + 1);

  out.generators_on_hull = true;
  for (Index g = 0; g < p.n_archetypes && out.generators_on_hull; ++g) {
    FeatureMatrix others(p.dim, p.n_archetypes - 1);
    for (Index h = 0, k = 0; h < p.n_archetypes; ++h) {
      if (h != g) others.col(k++) = out.generators.col(h);
    }
    out.generators_on_hull = distance_to_hull(others, out.generators.col(g)) > kHullTolerance;
  }

  auto draw = [&](Index i, bool vertices, int* label) {
    Vector w;
    if (vertices) {
      w = Vector::Zero(p.n_archetypes);
      w[i % p.n_archetypes] = 1.0;
    } else {
      w = dirichlet_flat(rng, p.n_archetypes);
    }
    Vector x = out.generators * w;
    if (p.noise_sigma > 0.0) {
      for (Index r = 0; r < p.dim; ++r) x[r] += p.noise_sigma * normal(rng);
    }
    if (label) {
      Index heaviest = 0;
      w.maxCoeff(&heaviest);
      *label = out.generator_class[static_cast<std::size_t>(heaviest)];
    }
    return x;
  };

  const bool vertices = p.weights == SynthWeights::Vertices;
  FeatureMatrix X(p.dim, p.n_samples);
  std::vector<int> labels(static_cast<std::size_t>(p.n_samples));
  for (Index i = 0; i < p.n_samples; ++i) X.col(i) = draw(i, vertices, &labels[static_cast<std::size_t>(i)]);
  // The generators themselves are planted, noise-free, at the front of the pool.
  out.unlabeled.resize(p.dim, p.n_archetypes + p.n_unlabeled);
  out.unlabeled.leftCols(p.n_archetypes) = out.generators;
  for (Index i = 0; i < p.n_unlabeled; ++i) out.unlabeled.col(p.n_archetypes + i) = draw(i, vertices, nullptr);

  // Noisy samples leave the hull almost surely; only the noise-free case is checked.
  if (out.generators_on_hull && p.noise_sigma == 0.0) {
    const Dictionary hull(out.generators);
    const SimplexCoder coder(hull, {1e-10, 20000});
    auto inside = [&](const FeatureMatrix& S) {
      std::vector<char> ok(static_cast<std::size_t>(S.cols()));
      parallel_for(S.cols(), [&](Index j) {
        ok[static_cast<std::size_t>(j)] = (out.generators * coder.code(S.col(j)) - S.col(j)).norm() <= kHullTolerance;
      });
      return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
    };
    out.samples_in_hull = inside(X) && inside(out.unlabeled);
  }
  out.labeled = make_labeled(std::move(X), std::move(labels), p.n_classes);
  return out;
}

}  // namespace dstl
