#pragma once

// Scenario-constrained ERM through the exact penalty
//   V(theta; lambda) = F(theta) + lambda * G_gamma(theta),
//   G_gamma(theta)   = (1/n) sum_s sum_j max{psi_j(f(x^s; theta)) + gamma, 0}.

#include <vector>

#include "padr/cost.hpp"

namespace padr {

struct ConstraintSpec {
  std::vector<SeparablePa> psi;  ///< psi_j(z) <= 0; convex or concave scalar terms
  double gamma = 0.0;
  double lambda = 0.0;
  bool nonnegative = false;      ///< add z >= 0 when projecting

  void validate(int d) const;
  bool empty() const { return psi.empty(); }
  bool convex() const;
};

/// z_1 + ... + z_d - C0 <= 0
SeparablePa capacity_sum(int d, double C0);
/// C(z_1) + ... + C(z_d) - C0 <= 0 with the concave capacity cost C.
SeparablePa capacity_concave_sum(int d, double C0);

/// Cost plus (possibly empty) penalized constraints. With no constraints or
/// lambda = 0 this is the plain ERM objective.
struct PenalizedProblem {
  CostSpec cost;
  ConstraintSpec cons;

  double sample_value(const Vector& z, const Vector& y) const;
  /// sum_j max{psi_j(z) + gamma, 0}, not yet multiplied by lambda.
  double penalty(const Vector& z, const Vector& y) const;
};

PenalizedProblem build_penalized(CostSpec cost, ConstraintSpec cons);
PenalizedProblem unconstrained(CostSpec cost);

/// Per-sample V(theta; xi), evaluated on `ids` (all rows when empty).
Vector sample_objective(const Theta& theta, const Dataset& data, const PenalizedProblem& prob);
/// V(theta; lambda) on the full dataset.
double penalized_objective(const Theta& theta, const Dataset& data, const PenalizedProblem& prob);
/// G_gamma(theta) on the full dataset (unweighted by lambda).
double constraint_violation(const Theta& theta, const Dataset& data, const ConstraintSpec& cons);

/// Whether psi_j(z) (+ gamma if use_margin) <= 1e-9 for every j.
bool feasible(const Vector& z, const ConstraintSpec& cons, bool use_margin);
double feasibility_rate(const Theta& theta, const Dataset& data, const ConstraintSpec& cons,
                        bool use_margin);

/// Euclidean projection onto {psi_j(z) <= 0} (and z >= 0 if configured).
/// Requires convex constraints; throws if the set is empty.
Vector project_convex(const Vector& z, const ConstraintSpec& cons);

/// Surrogate of V(.; xi) at theta_ref: the cost surrogate plus lambda times the
/// hinge max{psi_hat_j + gamma, 0}, where psi_hat_j composes each term of psi_j
/// with the inner surrogates.
ConvexSurrogate penalized_surrogate(const PenalizedProblem& prob, const rule::InnerSurrogates& inner,
                                    std::size_t row, const Theta& theta_ref, const Dataset& data,
                                    const SurrogateOptions& opts = {});

}  // namespace padr
