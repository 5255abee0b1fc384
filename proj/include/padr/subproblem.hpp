#pragma once

// Proximal subproblem: minimize the weighted average of convex surrogates plus
// (eta/2)||theta - theta_ref||^2 over the box [-mu, mu]^q.

#include <Eigen/SparseCore>

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "padr/cost.hpp"

namespace padr {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// min 0.5 x'diag(P)x + c'x + constant  s.t.  l <= A x <= u,  x = [theta; t].
struct EpigraphQp {
  Eigen::Index q = 0;
  Eigen::Index hinge_vars = 0;
  Eigen::Index hinge_rows = 0;  ///< rows [0, hinge_rows) are hinge rows, the rest box rows
  Vector P;                     ///< quadratic diagonal, length q + hinge_vars
  Vector c;
  double constant = 0.0;
  SparseMatrix A;
  Vector l, u;
  std::vector<int> row_owner;   ///< surrogate index of each hinge row

  Eigen::Index n() const { return q + hinge_vars; }
  Eigen::Index m() const { return A.rows(); }
  double objective(const Vector& x) const;
};

/// Epigraph form of sum_i w_i surrogate_i + (eta/2)||theta - theta_ref||^2 over the box.
/// Weights default to 1/N. Throws if a surrogate has no epigraph form.
EpigraphQp build_epigraph_qp(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                             double eta, double mu, std::span<const double> weights = {});

/// General QP in the same shape, for callers with their own rows.
EpigraphQp make_qp(Vector P, Vector c, SparseMatrix A, Vector l, Vector u);

enum class SolveStatus { optimal, max_iter, infeasible_numerics };
std::string_view status_name(SolveStatus s);

struct AdmmSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 4000;
  double rho = 1.0;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int adaptive_interval = 25;
  int check_interval = 5;
  int scaling_iters = 10;
  bool polish = true;
};

struct SolveReport {
  Vector x;
  Vector y;
  double objective = 0.0;
  double prim_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
  bool polished = false;
  SolveStatus status = SolveStatus::max_iter;
};

/// Operator-splitting QP solver with Ruiz equilibration, residual-balanced
/// step size and optional active-set polishing. Deterministic.
SolveReport admm_solve(const EpigraphQp& qp, const AdmmSettings& settings = {},
                       const Vector* warm_x = nullptr, const Vector* warm_y = nullptr);

struct ProxOptions {
  double eta = 0.0;
  double mu = 50.0;
  double tol = 1e-6;
  AdmmSettings admm;
  const Vector* warm_theta = nullptr;
};

struct ProxResult {
  Theta theta_half;
  double value = 0.0;        ///< surrogate average + prox term at theta_half
  double value_at_ref = 0.0; ///< same objective at theta_ref
  SolveReport report;
  bool used_qp = true;
};

/// Weighted surrogate average at theta.
double surrogate_average(const std::vector<ConvexSurrogate>& surrogates, const Vector& theta,
                         std::span<const double> weights = {});

/// Step 4 of the SMM loop. Exportable surrogates go through admm_solve; others
/// through the projected subgradient backend. The returned point is never worse
/// than theta_ref on the exact prox objective.
ProxResult solve_prox(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                      const ProxOptions& opts, std::span<const double> weights = {});

/// Projected subgradient on the prox objective, step 2 / (eta (k + 2)) when
/// eta > 0 and 1 / sqrt(k + 1) otherwise; returns the best iterate.
SolveReport subgradient_prox(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                             double eta, double mu, double tol, int max_iter,
                             std::span<const double> weights = {});

}  // namespace padr
