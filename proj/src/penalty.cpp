#include "padr/penalty.hpp"

#include <algorithm>
#include <cmath>

#include "padr/subproblem.hpp"

namespace padr {

namespace {

constexpr double kFeasTol = 1e-9;

}  // namespace

void ConstraintSpec::validate(int d) const {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  for (const auto& p : psi)
    for (const auto& t : p.terms) {
      if (t.pieces.empty()) throw ConfigError("constraint term without pieces");
      if (t.output < 0 || t.output >= d) throw ConfigError("constraint term output out of range");
    }
}

bool ConstraintSpec::convex() const {
  return std::all_of(psi.begin(), psi.end(), [](const SeparablePa& p) { return p.convex(); });
}

SeparablePa capacity_sum(int d, double C0) {
  SeparablePa p;
  for (int i = 0; i < d; ++i) p.terms.push_back(PaTerm{i, -1, false, {{1.0, 0.0, 0.0}}});
  p.constant = -C0;
  return p;
}

SeparablePa capacity_concave_sum(int d, double C0) {
  SeparablePa p;
  for (int i = 0; i < d; ++i) p.terms.push_back(capacity_cost_term(i));
  p.constant = -C0;
  return p;
}

double PenalizedProblem::penalty(const Vector& z, const Vector& y) const {
  double v = 0.0;
  for (const auto& p : cons.psi) v += std::max(p.value(z, y) + cons.gamma, 0.0);
  return v;
}

double PenalizedProblem::sample_value(const Vector& z, const Vector& y) const {
  double v = cost_eval(cost, z, y);
  if (cons.lambda > 0.0) v += cons.lambda * penalty(z, y);
  return v;
}

PenalizedProblem build_penalized(CostSpec cost, ConstraintSpec cons) {
  cost.validate();
  cons.validate(cost.d);
  if (!cons.empty() && !std::holds_alternative<SeparablePa>(cost.form) &&
      !std::holds_alternative<SmoothCost>(cost.form))
    throw ConfigError("penalized constraints need a cost with an epigraph surrogate");
  return PenalizedProblem{std::move(cost), std::move(cons)};
}

PenalizedProblem unconstrained(CostSpec cost) { return build_penalized(std::move(cost), {}); }

Vector sample_objective(const Theta& theta, const Dataset& data, const PenalizedProblem& prob) {
  Vector out(data.n());
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    const Vector z = rule::eval(theta, data.features().row(s).transpose());
    out[s] = prob.sample_value(z, data.outcomes().row(s).transpose());
  }
  return out;
}

double penalized_objective(const Theta& theta, const Dataset& data, const PenalizedProblem& prob) {
  return sample_objective(theta, data, prob).mean();
}

double constraint_violation(const Theta& theta, const Dataset& data, const ConstraintSpec& cons) {
  if (cons.empty()) return 0.0;
  double total = 0.0;
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    const Vector z = rule::eval(theta, data.features().row(s).transpose());
    const Vector y = data.outcomes().row(s).transpose();
    for (const auto& p : cons.psi) total += std::max(p.value(z, y) + cons.gamma, 0.0);
  }
  return total / static_cast<double>(data.n());
}

bool feasible(const Vector& z, const ConstraintSpec& cons, bool use_margin) {
  const Vector y;
  const double margin = use_margin ? cons.gamma : 0.0;
  return std::all_of(cons.psi.begin(), cons.psi.end(),
                     [&](const SeparablePa& p) { return p.value(z, y) + margin <= kFeasTol; });
}

double feasibility_rate(const Theta& theta, const Dataset& data, const ConstraintSpec& cons,
                        bool use_margin) {
  Eigen::Index ok = 0;
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    const Vector z = rule::eval(theta, data.features().row(s).transpose());
    const Vector y = data.outcomes().row(s).transpose();
    const double margin = use_margin ? cons.gamma : 0.0;
    if (std::all_of(cons.psi.begin(), cons.psi.end(),
                    [&](const SeparablePa& p) { return p.value(z, y) + margin <= kFeasTol; }))
      ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(data.n());
}

Vector project_convex(const Vector& z0, const ConstraintSpec& cons) {
  if (!cons.convex()) throw ConfigError("projection requires convex constraints");
  const Eigen::Index d = z0.size();
  cons.validate(static_cast<int>(d));
  if (feasible(z0, cons, false) && (!cons.nonnegative || z0.minCoeff() >= 0.0)) return z0;

  // Variables [z; t] with one t per multi-piece term.
  Eigen::Index n = d;
  for (const auto& p : cons.psi)
    for (const auto& t : p.terms) {
      if (t.y_index >= 0) throw ConfigError("projection requires outcome-free constraints");
      if (t.pieces.size() > 1) ++n;
    }

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> lo, hi;
  Eigen::Index tvar = d;
  for (const auto& p : cons.psi) {
    const auto row = static_cast<Eigen::Index>(lo.size());
    double rhs = -p.constant;
    lo.push_back(-std::numeric_limits<double>::infinity());
    hi.push_back(0.0);
    for (const auto& t : p.terms) {
      if (t.pieces.size() == 1) {
        trip.emplace_back(row, t.output, t.pieces[0].slope);
        rhs -= t.pieces[0].intercept;
      } else {
        trip.emplace_back(row, tvar, 1.0);
        for (const auto& pc : t.pieces) {
          const auto r = static_cast<Eigen::Index>(lo.size());
          trip.emplace_back(r, t.output, pc.slope);
          trip.emplace_back(r, tvar, -1.0);
          lo.push_back(-std::numeric_limits<double>::infinity());
          hi.push_back(-pc.intercept);
        }
        ++tvar;
      }
    }
    hi[static_cast<std::size_t>(row)] = rhs;
  }
  if (cons.nonnegative) {
    for (Eigen::Index i = 0; i < d; ++i) {
      trip.emplace_back(static_cast<Eigen::Index>(lo.size()), i, 1.0);
      lo.push_back(0.0);
      hi.push_back(std::numeric_limits<double>::infinity());
    }
  }
  const auto m = static_cast<Eigen::Index>(lo.size());
  SparseMatrix A(m, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Vector P = Vector::Zero(n), c = Vector::Zero(n);
  P.head(d).setOnes();
  c.head(d) = -z0;
  EpigraphQp qp = make_qp(P, c, A, Eigen::Map<Vector>(lo.data(), m), Eigen::Map<Vector>(hi.data(), m));
  AdmmSettings st;
  st.eps_abs = st.eps_rel = 1e-9;
  st.max_iter = 20000;
  const SolveReport rep = admm_solve(qp, st);
  const Vector z = rep.x.head(d);
  for (const auto& p : cons.psi)
    if (p.value(z, Vector()) > 1e-6) throw Error("projection failed: constraint set is empty");
  return z;
}

ConvexSurrogate penalized_surrogate(const PenalizedProblem& prob, const rule::InnerSurrogates& inner,
                                    std::size_t row, const Theta& theta_ref, const Dataset& data,
                                    const SurrogateOptions& opts) {
  ConvexSurrogate out = build_surrogate(prob.cost, inner, row, theta_ref, data, opts);
  if (prob.cons.empty() || prob.cons.lambda == 0.0) return out;

  const Eigen::Index s = inner.sample_ids[row];
  const Vector y = data.outcomes().row(s).transpose();
  const Vector z_ref = rule::eval(theta_ref, data.features().row(s).transpose());
  for (std::size_t j = 0; j < prob.cons.psi.size(); ++j) {
    const auto& psi = prob.cons.psi[j];
    std::optional<Rng> psi_rng;
    if (opts.rng) psi_rng = opts.rng->derive(static_cast<std::uint64_t>(s)).derive(0x70000 + j);
    HingeForm active{rule::AffineForm{{}, {}, psi.constant + prob.cons.gamma}, {}};
    for (std::size_t t = 0; t < psi.terms.size(); ++t) {
      const auto& term = psi.terms[t];
      std::optional<Rng> term_rng;
      if (psi_rng && term.concave) term_rng = psi_rng->derive(t);
      auto forms = compose_term(term, y, inner.at(row, term.output), z_ref[term.output],
                                opts.eps_outer, term_rng ? &*term_rng : nullptr);
      if (forms.size() == 1) {
        auto& a = active.affine;
        a.idx.insert(a.idx.end(), forms[0].idx.begin(), forms[0].idx.end());
        a.coef.insert(a.coef.end(), forms[0].coef.begin(), forms[0].coef.end());
        a.offset += forms[0].offset;
      } else {
        std::vector<HingeForm> child;
        for (auto& f : forms) child.push_back(HingeForm{std::move(f), {}});
        active.children.push_back(static_cast<int>(out.hinges.size()));
        out.hinges.push_back(Hinge{0.0, std::move(child)});
      }
    }
    std::vector<HingeForm> forms;
    forms.push_back(std::move(active));
    forms.push_back(HingeForm{rule::AffineForm{{}, {}, 0.0}, {}});
    out.hinges.push_back(Hinge{prob.cons.lambda, std::move(forms)});
  }
  return out;
}

}  // namespace padr
