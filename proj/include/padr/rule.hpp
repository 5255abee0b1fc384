#pragma once

// Piecewise-affine decision rule f(x; theta) = g - h per output, where g and h
// are max-affine in x, together with the epsilon-active index machinery and
// the affine-in-theta inner surrogates built from it.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "padr/core.hpp"

namespace padr::rule {

/// Value of piece `j` of output `out` at features x (j < K1: g piece, else h piece).
double piece_value(const Theta& theta, int out, int j, const Eigen::Ref<const Vector>& x);

/// Decision vector of length d: max_k g_k(x) - max_k h_k(x), second term dropped when K2 = 0.
Vector eval(const Theta& theta, const Eigen::Ref<const Vector>& x);

/// eval() row-wise over a feature matrix; result is n x d.
Matrix eval_all(const Theta& theta, const Matrix& features);

/// Fingerprint of theta's configuration and bits. Index mappings carry the
/// fingerprint of the reference point they were drawn at.
std::uint64_t theta_tag(const Theta& theta);

struct ActiveEntry {
  std::vector<int> g;  ///< epsilon-active pieces of the first component, ascending
  std::vector<int> h;  ///< same for the second component; empty when K2 = 0
};

/// Per (sample, output) epsilon-active piece sets at a reference point.
struct ActiveSets {
  double epsilon = 0.0;
  int d = 1;
  int K2 = 0;
  std::uint64_t ref_tag = 0;
  std::vector<Eigen::Index> sample_ids;  ///< distinct, ascending
  std::vector<ActiveEntry> entries;      ///< entries[r * d + out]

  const ActiveEntry& at(std::size_t r, int out) const { return entries[r * d + out]; }
  /// Product of set sizes, saturating at `cap + 1`.
  std::uint64_t mapping_count(std::uint64_t cap) const;
};

/// Active sets on the distinct ids in `sample_ids` (all samples when empty).
ActiveSets active_sets(const Theta& theta_ref, const Dataset& data, double epsilon,
                       std::span<const Eigen::Index> sample_ids = {});

/// Pieces of `values` within epsilon of the max; the first argmax is always included.
std::vector<int> active_indices(std::span<const double> values, double epsilon);

/// One epsilon-active choice (i1, i2) per (sample, output). i2 = -1 when K2 = 0.
struct IndexMapping {
  int d = 1;
  std::uint64_t ref_tag = 0;
  std::vector<Eigen::Index> sample_ids;  ///< distinct, ascending
  std::vector<int> i1;                   ///< i1[r * d + out]
  std::vector<int> i2;

  /// Row of `sample` in sample_ids; throws if absent.
  std::size_t row_of(Eigen::Index sample) const;
};

/// Uniform draw from the product of the active sets. Each sample's choice uses
/// a child stream keyed by its id, so a mapping drawn lazily on a minibatch
/// coincides with the restriction of a full-sample mapping under the same rng.
IndexMapping draw_index_mapping(const ActiveSets& sets, const Rng& rng);

/// Lowest-index argmax choice for every entry (the touching mapping at epsilon = 0).
IndexMapping first_index_mapping(const ActiveSets& sets);

/// Calls `fn(mapping)` for every mapping in the product of the active sets.
void for_each_mapping(const ActiveSets& sets, const std::function<void(const IndexMapping&)>& fn);

/// Affine function of theta: sum_i coef[i] * theta[idx[i]] + offset.
struct AffineForm {
  std::vector<Eigen::Index> idx;
  std::vector<double> coef;
  double offset = 0.0;

  double eval(const Vector& theta) const;
  void add_to(Vector& grad, double weight) const;
  AffineForm scaled(double factor, double shift) const;
};

/// Upper (convex) and lower (concave) piecewise-affine surrogates of one
/// inner function f(.; x) in theta.
struct InnerPair {
  std::vector<AffineForm> upper;  ///< f_hat = max over forms: g_k - h_{i2}
  std::vector<AffineForm> lower;  ///< f_check = min over forms: g_{i1} - h_k

  double upper_value(const Vector& theta, int* argmax = nullptr) const;
  double lower_value(const Vector& theta, int* argmin = nullptr) const;
};

struct InnerSurrogates {
  int d = 1;
  std::vector<Eigen::Index> sample_ids;  ///< as requested, duplicates allowed
  std::vector<InnerPair> entries;        ///< entries[r * d + out]

  const InnerPair& at(std::size_t r, int out) const { return entries[r * d + out]; }
};

/// Inner surrogates for `sample_ids` (all samples when empty) using `mapping`
/// drawn at `theta_ref`.
InnerSurrogates build_inner_surrogates(const Theta& theta_ref, const Dataset& data,
                                       const IndexMapping& mapping,
                                       std::span<const Eigen::Index> sample_ids = {});

}  // namespace padr::rule
