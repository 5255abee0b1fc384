#include "padr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "padr/smm.hpp"

namespace padr {

namespace {

Theta uniform_theta(const HypothesisConfig& hyp, Rng& rng, double radius) {
  Vector v(hyp.q());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-radius, radius);
  return Theta(hyp, std::move(v));
}

double sample_value(const PenalizedProblem& prob, const Theta& theta, const Dataset& data,
                    Eigen::Index s) {
  const Vector z = rule::eval(theta, data.features().row(s).transpose());
  return prob.sample_value(z, data.outcomes().row(s).transpose());
}

}  // namespace

SurrogationReport check_surrogation(const Dataset& data, const HypothesisConfig& hyp,
                                    const PenalizedProblem& prob, double epsilon, int probes,
                                    const Rng& rng, double radius) {
  if (probes < 1) throw ConfigError("probes must be >= 1");
  if (data.n() == 0) throw ConfigError("surrogation check needs at least one sample");
  if (radius <= 0.0) radius = hyp.mu;
  const double lf = inner_lipschitz(data);
  SurrogationReport rep;
  rep.probes = probes;
  rep.epsilon = epsilon;
  for (int i = 0; i < probes; ++i) {
    Rng r = rng.derive(static_cast<std::uint64_t>(i));
    const Theta ref = uniform_theta(hyp, r, radius);
    const Theta a = uniform_theta(hyp, r, radius);
    const Theta b = uniform_theta(hyp, r, radius);
    const Eigen::Index s = static_cast<Eigen::Index>(r.below(static_cast<std::uint64_t>(data.n())));
    const std::vector<Eigen::Index> ids{s};
    const double f_ref = sample_value(prob, ref, data, s);

    const auto sets = rule::active_sets(ref, data, epsilon, ids);
    const auto mapping = rule::draw_index_mapping(sets, r.derive(1));
    const auto inner = rule::build_inner_surrogates(ref, data, mapping, ids);
    const Rng outer = r.derive(2);
    const ConvexSurrogate sur =
        penalized_surrogate(prob, inner, 0, ref, data, SurrogateOptions{epsilon, &outer, lf});
    const double sa = sur.value(a.flat());
    const double sb = sur.value(b.flat());
    const Vector mid = 0.5 * (a.flat() + b.flat());
    rep.p2_violation = std::max({rep.p2_violation, sample_value(prob, a, data, s) - sa,
                                 sample_value(prob, b, data, s) - sb, f_ref - sur.value(ref.flat())});
    rep.p3_violation = std::max(rep.p3_violation, sur.value(mid) - 0.5 * (sa + sb));
    rep.p1_gap_eps = std::max(rep.p1_gap_eps, std::abs(sur.value(ref.flat()) - f_ref));

    const auto sets0 = rule::active_sets(ref, data, 0.0, ids);
    const auto inner0 = rule::build_inner_surrogates(ref, data, rule::first_index_mapping(sets0), ids);
    const ConvexSurrogate sur0 =
        penalized_surrogate(prob, inner0, 0, ref, data, SurrogateOptions{0.0, nullptr, lf});
    rep.p1_gap = std::max(rep.p1_gap, std::abs(sur0.value(ref.flat()) - f_ref));
  }
  return rep;
}

double residual_step(const Dataset& data, const PenalizedProblem& prob, const Theta& theta_ref,
                     const rule::IndexMapping& mapping, double rho, const ResidualOptions& opts) {
  const auto inner = rule::build_inner_surrogates(theta_ref, data, mapping);
  const SurrogateOptions sopts{0.0, nullptr, inner_lipschitz(data)};
  std::vector<ConvexSurrogate> surr;
  surr.reserve(static_cast<std::size_t>(data.n()));
  for (std::size_t r = 0; r < inner.sample_ids.size(); ++r)
    surr.push_back(penalized_surrogate(prob, inner, r, theta_ref, data, sopts));
  ProxOptions po;
  po.eta = rho;
  po.mu = theta_ref.cfg().mu;
  po.tol = opts.tol;
  po.admm = opts.admm;
  const ProxResult pr = solve_prox(surr, theta_ref, po);
  const double f_ref = penalized_objective(theta_ref, data, prob);
  if (!(pr.value <= f_ref + opts.tol)) return 0.0;
  return (pr.theta_half.flat() - theta_ref.flat()).norm();
}

ResidualReport residual_exact(const Dataset& data, const PenalizedProblem& prob, const Theta& theta_ref,
                              double epsilon, double rho, const ResidualOptions& opts) {
  if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
  const auto sets = rule::active_sets(theta_ref, data, epsilon);
  ResidualReport rep;
  rep.epsilon = epsilon;
  rep.rho = rho;
  rep.mapping_count = sets.mapping_count(opts.cap);
  if (rep.mapping_count > opts.cap) {
    rep.capped = true;
    throw Error("more than " + std::to_string(opts.cap) +
                " epsilon-active mappings; use the sampled residual");
  }
  std::vector<rule::IndexMapping> maps;
  maps.reserve(static_cast<std::size_t>(rep.mapping_count));
  rule::for_each_mapping(sets, [&](const rule::IndexMapping& m) { maps.push_back(m); });
  rep.step_norms.assign(maps.size(), 0.0);
  parallel_for(static_cast<int>(maps.size()), resolve_threads(opts.threads), [&](int i) {
    rep.step_norms[static_cast<std::size_t>(i)] =
        residual_step(data, prob, theta_ref, maps[static_cast<std::size_t>(i)], rho, opts);
  });
  rep.exact = true;
  rep.draws = static_cast<int>(maps.size());
  rep.residual = std::accumulate(rep.step_norms.begin(), rep.step_norms.end(), 0.0) /
                 static_cast<double>(maps.size());
  return rep;
}

ResidualReport residual_sampled(const Dataset& data, const PenalizedProblem& prob,
                                const Theta& theta_ref, double epsilon, double rho, int draws,
                                const Rng& rng, const ResidualOptions& opts) {
  if (draws < 1) throw ConfigError("draws must be >= 1");
  if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
  const auto sets = rule::active_sets(theta_ref, data, epsilon);
  ResidualReport rep;
  rep.epsilon = epsilon;
  rep.rho = rho;
  rep.mapping_count = sets.mapping_count(opts.cap);
  rep.capped = rep.mapping_count > opts.cap;
  rep.draws = draws;
  rep.step_norms.assign(static_cast<std::size_t>(draws), 0.0);
  parallel_for(draws, resolve_threads(opts.threads), [&](int k) {
    const auto m = rule::draw_index_mapping(sets, rng.derive(static_cast<std::uint64_t>(k)));
    rep.step_norms[static_cast<std::size_t>(k)] = residual_step(data, prob, theta_ref, m, rho, opts);
  });
  const double n = draws;
  const double mean = std::accumulate(rep.step_norms.begin(), rep.step_norms.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : rep.step_norms) ss += (v - mean) * (v - mean);
  rep.residual = mean;
  rep.std_error = draws > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return rep;
}

double eps_all_threshold(const HypothesisConfig& cfg, const Dataset& data) {
  return 2.0 * cfg.mu * std::sqrt(static_cast<double>(cfg.q())) *
         std::sqrt(data.max_sq_feature_norm() + 1.0);
}

namespace {

/// Calls fn(point) for every point of a per_axis^p grid with coordinates coord(i).
template <class Coord, class Fn>
void for_each_grid_point(int p, int per_axis, Coord coord, Fn fn) {
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  Vector x(p);
  while (true) {
    for (int j = 0; j < p; ++j) x[j] = coord(idx[static_cast<std::size_t>(j)]);
    fn(x);
    int j = 0;
    while (j < p && ++idx[static_cast<std::size_t>(j)] == per_axis) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == p) break;
  }
}

}  // namespace

Interpolant interpolate_pa(const InterpolationTarget& target, double grid_eps, double xbar,
                           int probes_per_axis) {
  const int p = target.p;
  if (p < 1) throw ConfigError("interpolation needs p >= 1");
  if (!(grid_eps > 0.0) || !(xbar > 0.0)) throw ConfigError("grid eps and xbar must be > 0");
  if (!(target.L0 > 0.0)) throw ConfigError("L0 must be > 0");
  const double sp = std::sqrt(static_cast<double>(p));
  const int per_axis = std::max(1, static_cast<int>(std::ceil(sp * xbar / grid_eps - 1e-12)));
  const double K_d = std::pow(static_cast<double>(per_axis), p);
  if (K_d > 2e5) throw Error("interpolation grid too large");
  const auto K = static_cast<std::size_t>(K_d);

  InterpolationReport rep;
  rep.p = p;
  rep.grid_eps = grid_eps;
  rep.xbar = xbar;
  rep.per_axis = per_axis;
  rep.spacing = 2.0 * xbar / per_axis;
  rep.cover_radius = 0.5 * rep.spacing * sp;
  rep.C = target.L0 / rep.spacing;
  rep.K = K;
  rep.error_bound = 2.0 * (sp + 3.0) * sp * target.L0 * xbar * std::pow(K_d, -1.0 / p);
  rep.lipschitz_bound = (sp + 2.0) * target.L0;
  const double Kp = std::pow(K_d, 1.0 / p);
  rep.mu_required = std::max(0.5 * target.L0 * Kp, 0.25 * p * target.L0 * xbar * Kp + 0.5 * target.M0);

  HypothesisConfig hyp{1, static_cast<int>(K), static_cast<int>(K), 1.0, p};
  Vector flat(hyp.q());
  std::vector<Vector> nodes;
  nodes.reserve(K);
  const auto center = [&](int i) { return -xbar + (i + 0.5) * rep.spacing; };
  for_each_grid_point(p, per_axis, center, [&](const Vector& x) { nodes.push_back(x); });
  double maxabs = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const Vector& xh = nodes[k];
    const double fx = target.f(xh);
    const double base = -0.5 * rep.C * xh.squaredNorm();
    const auto g = hyp.offset(0, static_cast<int>(k));
    const auto h = hyp.offset(0, static_cast<int>(K + k));
    flat.segment(g, p) = rep.C * xh;
    flat[g + p] = base + 0.5 * fx;
    flat.segment(h, p) = rep.C * xh;
    flat[h + p] = base - 0.5 * fx;
  }
  maxabs = flat.cwiseAbs().maxCoeff();
  hyp.mu = std::max(maxabs, 1e-12);
  Interpolant out{Theta(hyp, std::move(flat)), rep};
  InterpolationReport& R = out.report;

  for (const auto& xh : nodes)
    R.grid_error = std::max(R.grid_error, std::abs(rule::eval(out.theta, xh)[0] - target.f(xh)));

  if (probes_per_axis <= 0) probes_per_axis = p == 1 ? 2001 : (p == 2 ? 161 : 21);
  const double h = 2.0 * xbar / (probes_per_axis - 1);
  const auto probe = [&](int i) { return -xbar + i * h; };
  for_each_grid_point(p, probes_per_axis, probe, [&](const Vector& x) {
    const double fx = rule::eval(out.theta, x)[0];
    R.sup_error = std::max(R.sup_error, std::abs(fx - target.f(x)));
    // Slopes to the forward neighbour along each axis and the main diagonal.
    for (int j = 0; j <= p; ++j) {
      Vector y = x;
      if (j < p) {
        y[j] += h;
      } else {
        y.array() += h;
      }
      if (y.maxCoeff() > xbar + 1e-12) continue;
      const double fy = rule::eval(out.theta, y)[0];
      R.lipschitz = std::max(R.lipschitz, std::abs(fy - fx) / (y - x).norm());
    }
  });
  return out;
}

DirectionalProbe directional_probe(const Dataset& data, const PenalizedProblem& prob,
                                   const Theta& theta, int random_directions, const Rng& rng,
                                   double step) {
  const HypothesisConfig& hyp = theta.cfg();
  const Vector& t = theta.flat();
  const double f0 = penalized_objective(theta, data, prob);
  DirectionalProbe out;
  out.step = step;
  out.min_slope = std::numeric_limits<double>::infinity();
  const auto try_dir = [&](const Vector& dir) {
    const Vector moved = t + step * dir;
    if ((moved.array().abs() > hyp.mu + 1e-12).any()) return;
    const double slope = (penalized_objective(Theta(hyp, moved), data, prob) - f0) / step;
    out.min_slope = std::min(out.min_slope, slope);
    ++out.directions;
  };
  for (Eigen::Index i = 0; i < t.size(); ++i)
    for (double sgn : {1.0, -1.0}) {
      Vector dir = Vector::Zero(t.size());
      dir[i] = sgn;
      try_dir(dir);
    }
  for (int k = 0; k < random_directions; ++k) {
    Rng r = rng.derive(static_cast<std::uint64_t>(k));
    Vector dir(t.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = r.normal();
    if (dir.norm() > 0.0) try_dir(dir / dir.norm());
  }
  if (out.directions == 0) out.min_slope = 0.0;
  return out;
}

std::string to_json(const SurrogationReport& r) {
  nlohmann::ordered_json j;
  j["probes"] = r.probes;
  j["epsilon"] = r.epsilon;
  j["p1_gap"] = r.p1_gap;
  j["p1_gap_eps"] = r.p1_gap_eps;
  j["p2_violation"] = r.p2_violation;
  j["p3_violation"] = r.p3_violation;
  return j.dump(2) + "\n";
}

std::string to_json(const ResidualReport& r) {
  nlohmann::ordered_json j;
  j["epsilon"] = r.epsilon;
  j["rho"] = r.rho;
  j["mapping_count"] = r.capped ? nlohmann::ordered_json("capped") : nlohmann::ordered_json(r.mapping_count);
  j["mode"] = r.exact ? "exact" : "sampled";
  j["draws"] = r.draws;
  j["residual"] = r.residual;
  if (!r.exact) j["std_error"] = r.std_error;
  if (r.exact) j["step_norms"] = r.step_norms;
  return j.dump(2) + "\n";
}

std::string to_json(const InterpolationReport& r) {
  nlohmann::ordered_json j;
  j["p"] = r.p;
  j["grid_eps"] = r.grid_eps;
  j["xbar"] = r.xbar;
  j["per_axis"] = r.per_axis;
  j["spacing"] = r.spacing;
  j["cover_radius"] = r.cover_radius;
  j["C"] = r.C;
  j["K"] = r.K;
  j["grid_error"] = r.grid_error;
  j["sup_error"] = r.sup_error;
  j["error_bound"] = r.error_bound;
  j["lipschitz"] = r.lipschitz;
  j["lipschitz_bound"] = r.lipschitz_bound;
  j["mu_required"] = r.mu_required;
  return j.dump(2) + "\n";
}

std::string to_json(const DirectionalProbe& r) {
  nlohmann::ordered_json j;
  j["directions"] = r.directions;
  j["min_slope"] = r.min_slope;
  j["step"] = r.step;
  j["note"] = "necessary condition only";
  return j.dump(2) + "\n";
}

}  // namespace padr
