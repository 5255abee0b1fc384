#pragma once

#include <doctest.h>

#include "padr/config.hpp"

namespace padr::test {

/// Features uniform on [-1, 1]^p, outcomes uniform on [lo, hi]^m.
inline Dataset random_data(Rng& rng, Eigen::Index n, int p, int m = 1, double lo = 0.0, double hi = 20.0) {
  Matrix X(n, p), Y(n, m);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int j = 0; j < p; ++j) X(s, j) = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < m; ++j) Y(s, j) = rng.uniform(lo, hi);
  }
  return Dataset(std::move(X), std::move(Y));
}

inline Theta random_theta(const HypothesisConfig& hyp, Rng& rng, double radius) {
  Vector v(hyp.q());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-radius, radius);
  return Theta(hyp, std::move(v));
}

/// Surrogates of every listed sample under one mapping drawn at `ref`.
inline std::vector<ConvexSurrogate> surrogates_at(const PenalizedProblem& prob, const Dataset& data,
                                                  const Theta& ref, double eps, const Rng& rng,
                                                  std::vector<Eigen::Index> ids = {}) {
  const auto sets = rule::active_sets(ref, data, eps, ids);
  const auto mapping = rule::draw_index_mapping(sets, rng);
  const auto inner = rule::build_inner_surrogates(ref, data, mapping, ids);
  std::vector<ConvexSurrogate> out;
  const SurrogateOptions opts{eps, nullptr, inner_lipschitz(data)};
  for (std::size_t r = 0; r < inner.sample_ids.size(); ++r)
    out.push_back(penalized_surrogate(prob, inner, r, ref, data, opts));
  return out;
}

inline Dataset single(double y) { return Dataset(Matrix(1, 0), Matrix::Constant(1, 1, y)); }

}  // namespace padr::test
