#pragma once

// Numerical checks of the surrogate conditions, the averaged proximal residual
// at a candidate point, and the grid interpolant behind the approximation bound.

#include <functional>
#include <string>
#include <vector>

#include "padr/penalty.hpp"
#include "padr/subproblem.hpp"

namespace padr {

struct SurrogationReport {
  int probes = 0;
  double epsilon = 0.0;
  double p1_gap = 0.0;          ///< max |F_hat(theta') - F(theta')| with the argmax mapping
  double p1_gap_eps = 0.0;      ///< same with a random epsilon-active mapping (reported only)
  double p2_violation = 0.0;    ///< max (F(theta) - F_hat(theta))_+
  double p3_violation = 0.0;    ///< max midpoint-convexity violation of F_hat
};

/// Random probes: theta', theta and a second point uniform on [-radius, radius]^q,
/// one sample drawn from `data` per probe. radius <= 0 means the rule's mu.
SurrogationReport check_surrogation(const Dataset& data, const HypothesisConfig& hyp,
                                    const PenalizedProblem& prob, double epsilon, int probes,
                                    const Rng& rng, double radius = 0.0);

struct ResidualReport {
  double epsilon = 0.0;
  double rho = 0.0;
  std::uint64_t mapping_count = 0;
  bool capped = false;      ///< mapping count exceeded the enumeration cap
  bool exact = false;
  int draws = 0;
  double residual = 0.0;
  double std_error = 0.0;   ///< sampled mode only
  std::vector<double> step_norms;
};

struct ResidualOptions {
  double tol = 1e-7;        ///< subproblem tolerance, also the slack of the gate
  std::uint64_t cap = 10000;
  int threads = 1;
  AdmmSettings admm;
};

/// ||theta' - P_I(theta')|| for one full-data mapping; P_I is the prox point
/// when its objective is <= F(theta') + tol and theta' otherwise.
double residual_step(const Dataset& data, const PenalizedProblem& prob, const Theta& theta_ref,
                     const rule::IndexMapping& mapping, double rho, const ResidualOptions& opts);

/// Average over every epsilon-active mapping. Throws Error when the count
/// exceeds opts.cap; use residual_sampled then.
ResidualReport residual_exact(const Dataset& data, const PenalizedProblem& prob, const Theta& theta_ref,
                              double epsilon, double rho, const ResidualOptions& opts = {});

/// Monte-Carlo estimate from `draws` uniform mappings.
ResidualReport residual_sampled(const Dataset& data, const PenalizedProblem& prob,
                                const Theta& theta_ref, double epsilon, double rho, int draws,
                                const Rng& rng, const ResidualOptions& opts = {});

/// Threshold above which every index mapping is epsilon-active:
/// 2 mu sqrt(q) sqrt(max_s ||x^s||^2 + 1).
double eps_all_threshold(const HypothesisConfig& cfg, const Dataset& data);

struct InterpolationTarget {
  std::function<double(const Vector&)> f;
  int p = 1;
  double L0 = 1.0;  ///< Lipschitz constant of f on the cube
  double M0 = 1.0;  ///< bound on |f| on the cube
};

struct InterpolationReport {
  int p = 1;
  double grid_eps = 0.0;
  double xbar = 1.0;
  int per_axis = 0;
  double spacing = 0.0;
  double cover_radius = 0.0;
  double C = 0.0;
  std::size_t K = 0;
  double grid_error = 0.0;       ///< max |f_C(x_hat) - f(x_hat)| over grid points
  double sup_error = 0.0;        ///< max error on the probe grid
  double error_bound = 0.0;      ///< 2 (sqrt p + 3) sqrt p L0 Xbar K^(-1/p)
  double lipschitz = 0.0;        ///< largest slope seen on probe pairs
  double lipschitz_bound = 0.0;  ///< (sqrt p + 2) L0
  double mu_required = 0.0;
};

struct Interpolant {
  Theta theta;  ///< PADR(K, K) with d = 1
  InterpolationReport report;
};

/// Max-affine difference interpolating f on a cell-centred grid of [-xbar, xbar]^p
/// with spacing at most 2 eps / sqrt(p). `probes_per_axis` sets the error grid.
Interpolant interpolate_pa(const InterpolationTarget& target, double grid_eps, double xbar,
                           int probes_per_axis = 0);

/// Necessary-condition probe for d-stationarity of the full objective: one-sided
/// difference quotients along coordinate directions (both signs) and random
/// unit directions, restricted to directions feasible for the box.
struct DirectionalProbe {
  int directions = 0;
  double min_slope = 0.0;
  double step = 0.0;
};

DirectionalProbe directional_probe(const Dataset& data, const PenalizedProblem& prob,
                                   const Theta& theta, int random_directions, const Rng& rng,
                                   double step = 1e-7);

std::string to_json(const SurrogationReport& r);
std::string to_json(const ResidualReport& r);
std::string to_json(const InterpolationReport& r);
std::string to_json(const DirectionalProbe& r);

}  // namespace padr
