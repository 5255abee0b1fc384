#pragma once

// Outer cost functions phi(z; y) and convex majorants of theta -> phi(f(theta; x); y)
// built from the inner surrogates of rule.hpp.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "padr/core.hpp"
#include "padr/rule.hpp"

namespace padr {

/// slope * z + intercept + y_coef * y
struct PaPiece {
  double slope = 0.0;
  double intercept = 0.0;
  double y_coef = 0.0;
};

/// Scalar piecewise-affine term of one decision coordinate: the max of its
/// pieces, or the min when `concave`. y_index < 0 means no outcome dependence.
struct PaTerm {
  int output = 0;
  int y_index = -1;
  bool concave = false;
  std::vector<PaPiece> pieces;

  double piece_value(std::size_t j, double z, const Vector& y) const;
  double value(double z, const Vector& y) const;
};

/// Sum of scalar PA terms plus a constant. Used both for costs and for the
/// constraint functions psi_j of the penalty module.
struct SeparablePa {
  std::vector<PaTerm> terms;
  double constant = 0.0;

  double value(const Vector& z, const Vector& y) const;
  bool convex() const;
};

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};
using CostFn = std::function<ValueGrad(const Vector& z, const Vector& y)>;

/// phi = up + down with `up` nondecreasing convex and `down` nonincreasing convex.
struct MonotoneDecomp {
  CostFn up;
  CostFn down;
};

/// phi with an L-Lipschitz gradient.
struct SmoothCost {
  CostFn fn;
  double grad_lipschitz = 0.0;
};

struct CostSpec {
  std::string name;
  int d = 1;  ///< decision dimension
  int m = 1;  ///< outcome dimension
  std::variant<SeparablePa, MonotoneDecomp, SmoothCost> form;

  void validate() const;
};

// Factories.
CostSpec newsvendor(double cb, double ch);
/// Same cost written as c_b (y - z)_+ + c_h (z - y)_+, one term per hinge.
CostSpec newsvendor_hinge_sum(double cb, double ch);
/// Independent newsvendor per product, product i ordering z_i against y_i.
CostSpec multi_newsvendor(const std::vector<std::pair<double, double>>& costs);
/// C(z) = min{z, 0.6 z + 0.8, 0.4 z + 15.6} on decision `output`.
PaTerm capacity_cost_term(int output);
/// Newsvendor plus the capacity acquisition cost C(z).
CostSpec newsvendor_capacity(double cb, double ch);
/// sum_i (z_i - y_i)^2 as a smooth cost with gradient modulus 2.
CostSpec squared_loss(int d);
/// sum_i (z_i - y_i)_+^2 + (y_i - z_i)_+^2 as a monotone decomposition.
CostSpec squared_loss_monotone(int d);

double cost_eval(const CostSpec& spec, const Vector& z, const Vector& y);

/// (1/n) sum_s phi(f(x^s; theta); y^s)
double erm_cost(const Theta& theta, const Dataset& data, const CostSpec& spec);
/// phi(f(x^s; theta); y^s) for every sample.
Vector sample_costs(const Theta& theta, const Dataset& data, const CostSpec& spec);

/// Uniform Lipschitz modulus of theta -> f(theta; x) over the samples:
/// 2 sqrt(max_s ||x^s||^2 + 1).
double inner_lipschitz(const Dataset& data);

/// Max relative error between `grad` and central differences at (z, y).
double gradient_fd_error(const CostFn& fn, const Vector& z, const Vector& y, double h = 1e-6);

/// Max over forms of (affine(theta) + sum of the child hinge values).
struct HingeForm {
  rule::AffineForm affine;
  std::vector<int> children;
};

struct Hinge {
  double weight = 0.0;  ///< 0 for hinges only referenced as children
  std::vector<HingeForm> forms;
};

/// Case-2 part: up(f_hat(theta)) + down(f_check(theta)) over all outputs.
struct MonotonePart {
  std::shared_ptr<const MonotoneDecomp> fn;
  Vector y;
  std::vector<rule::InnerPair> inner;  ///< one per output
};

/// Convex majorant
///   constant + linear . theta + sum_h weight_h * hinge_h(theta)
///   + monotone(theta) + (quad / 2) ||theta - center||^2.
/// Children of a hinge always have smaller indices than the hinge.
struct ConvexSurrogate {
  double constant = 0.0;
  Vector linear;
  std::vector<Hinge> hinges;
  std::optional<MonotonePart> monotone;
  double quad = 0.0;
  Vector center;
  double lipschitz_inner = 0.0;

  explicit ConvexSurrogate(Eigen::Index q = 0) : linear(Vector::Zero(q)), center(Vector::Zero(q)) {}

  Eigen::Index q() const { return linear.size(); }
  bool has_epigraph() const { return !monotone.has_value(); }
  double value(const Vector& theta) const;
  Vector subgradient(const Vector& theta) const;

  /// Adds weight * max over forms. A single childless form becomes linear.
  void add_hinge(double weight, std::vector<HingeForm> forms);
  /// Values of every hinge at theta.
  std::vector<double> hinge_values(const Vector& theta) const;
};

struct SurrogateOptions {
  double eps_outer = 0.0;       ///< active tolerance for concave outer pieces
  const Rng* rng = nullptr;     ///< concave piece selection; lowest argmin when null
  double lipschitz_inner = 0.0; ///< L_f for the smooth case; computed from data when 0
};

/// Forms whose max majorizes slope * f + intercept for one outer piece.
std::vector<rule::AffineForm> compose_piece(double slope, double offset,
                                            const rule::InnerPair& inner);

/// Forms whose max majorizes one PA term composed with f. A concave term is
/// replaced by one of its eps-active pieces at z_ref, drawn uniformly from `rng`
/// (lowest index among the minimizers when rng is null).
std::vector<rule::AffineForm> compose_term(const PaTerm& term, const Vector& y,
                                           const rule::InnerPair& inner, double z_ref,
                                           double eps_outer, Rng* rng);

/// Active pieces of a concave term at z: values within eps of the minimum.
std::vector<int> concave_active(const PaTerm& term, double z, const Vector& y, double eps);

ConvexSurrogate surrogate_pa_scalar(const SeparablePa& cost, const rule::InnerSurrogates& inner,
                                    std::size_t row, const Theta& theta_ref, const Dataset& data,
                                    const SurrogateOptions& opts = {});
ConvexSurrogate surrogate_monotone(const MonotoneDecomp& cost, const rule::InnerSurrogates& inner,
                                   std::size_t row, const Theta& theta_ref, const Dataset& data);
ConvexSurrogate surrogate_smooth(const SmoothCost& cost, const rule::InnerSurrogates& inner,
                                 std::size_t row, const Theta& theta_ref, const Dataset& data,
                                 const SurrogateOptions& opts = {});

/// Dispatches on spec.form for row `row` of `inner`.
ConvexSurrogate build_surrogate(const CostSpec& spec, const rule::InnerSurrogates& inner,
                                std::size_t row, const Theta& theta_ref, const Dataset& data,
                                const SurrogateOptions& opts = {});

}  // namespace padr
