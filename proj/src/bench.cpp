#include "padr/bench.hpp"

#include <optional>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/QR>
#include <boost/math/distributions/normal.hpp>

namespace padr::bench {

std::string_view demand_kind_name(DemandKind k) {
  switch (k) {
    case DemandKind::maxaffine_basic: return "maxaffine_basic";
    case DemandKind::maxaffine_sparse: return "maxaffine_sparse";
    case DemandKind::maxaffine_dense: return "maxaffine_dense";
    case DemandKind::sine_seasonal: return "sine_seasonal";
    case DemandKind::two_product_linear: return "two_product_linear";
    case DemandKind::linear: return "linear";
    case DemandKind::quadratic: return "quadratic";
  }
  return "?";
}

DemandKind parse_demand_kind(const std::string& s) {
  for (auto k : {DemandKind::maxaffine_basic, DemandKind::maxaffine_sparse, DemandKind::maxaffine_dense,
                 DemandKind::sine_seasonal, DemandKind::two_product_linear, DemandKind::linear,
                 DemandKind::quadratic})
    if (demand_kind_name(k) == s) return k;
  throw ConfigError("demand model: unknown kind '" + s + "'");
}

int DemandModel::min_p() const { return 2; }

Vector DemandModel::mean(const Eigen::Ref<const Vector>& x) const {
  if (x.size() < min_p()) throw DimensionError("demand model needs at least 2 features");
  double x1 = x[0];
  double x2 = x[1];
  if (kind == DemandKind::maxaffine_dense) {
    const Eigen::Index h = x.size() / 2;
    x1 = x.head(h).mean();
    x2 = x.tail(x.size() - h).mean();
  }
  Vector out(m());
  switch (kind) {
    case DemandKind::maxaffine_basic:
    case DemandKind::maxaffine_sparse:
    case DemandKind::maxaffine_dense:
      out[0] = k * std::max({5.0 * x1 - 10.0 * x2, -10.0 * x1 + 5.0 * x2, 15.0 * x1}) + 10.0;
      break;
    case DemandKind::sine_seasonal:
      out[0] = 4.0 * std::sin(std::numbers::pi * x1) + std::max(16.0 * x2, -20.0 * x2) + 10.0;
      break;
    case DemandKind::two_product_linear:
      out[0] = 15.0 * x1 - 5.0 * x2 + 30.0;
      out[1] = 15.0 * x1 + 5.0 * x2 + 30.0;
      break;
    case DemandKind::linear:
      out[0] = 10.0 + 2.0 * x1 - x2;
      break;
    case DemandKind::quadratic:
      out[0] = 10.0 + 3.0 * x1 * x1 + 2.0 * x1 * x2 - 2.0 * x2 * x2;
      break;
  }
  return out;
}

Dataset gen_dataset(const DemandModel& model, Eigen::Index n, int p, const Rng& rng) {
  if (p < model.min_p()) throw ConfigError("demand model needs p >= " + std::to_string(model.min_p()));
  if (n < 1) throw ConfigError("n must be >= 1");
  if (!(model.noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
  Rng r = rng;
  Matrix X(n, p), Y(n, model.m());
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int j = 0; j < p; ++j) X(s, j) = r.uniform(-1.0, 1.0);
    const Vector mu = model.mean(X.row(s).transpose());
    for (int i = 0; i < model.m(); ++i) Y(s, i) = mu[i] + model.noise_sd * r.normal();
  }
  return Dataset(std::move(X), std::move(Y));
}

std::string_view cost_kind_name(CostKind k) {
  switch (k) {
    case CostKind::newsvendor: return "newsvendor";
    case CostKind::newsvendor_capacity: return "newsvendor_capacity";
    case CostKind::capacity_linear: return "capacity_linear";
    case CostKind::capacity_concave: return "capacity_concave";
  }
  return "?";
}

CostKind parse_cost_kind(const std::string& s) {
  for (auto k : {CostKind::newsvendor, CostKind::newsvendor_capacity, CostKind::capacity_linear,
                 CostKind::capacity_concave})
    if (cost_kind_name(k) == s) return k;
  throw ConfigError("cost setup: unknown kind '" + s + "'");
}

void CostSetup::validate() const {
  if (costs.empty()) throw ConfigError("cost setup needs at least one product");
  for (const auto& [cb, ch] : costs)
    if (!(cb > 0.0) || !(ch > 0.0)) throw ConfigError("newsvendor costs must be positive");
  if (kind == CostKind::newsvendor_capacity && d() != 1)
    throw ConfigError("newsvendor_capacity is a single-product setup");
  if (constrained()) {
    if (d() != 2) throw ConfigError("capacity setups have two products");
    if (!(C0 > 0.0)) throw ConfigError("C0 must be > 0");
  }
}

CostSpec CostSetup::cost() const {
  validate();
  if (kind == CostKind::newsvendor_capacity) return newsvendor_capacity(costs[0].first, costs[0].second);
  if (d() == 1) return newsvendor(costs[0].first, costs[0].second);
  return multi_newsvendor(costs);
}

ConstraintSpec CostSetup::constraints(double gamma, double lambda) const {
  ConstraintSpec c;
  c.gamma = gamma;
  c.lambda = lambda;
  if (kind == CostKind::capacity_linear) c.psi.push_back(capacity_sum(d(), C0));
  if (kind == CostKind::capacity_concave) c.psi.push_back(capacity_concave_sum(d(), C0));
  return c;
}

PenalizedProblem CostSetup::problem(double gamma, double lambda) const {
  return build_penalized(cost(), constraints(gamma, lambda));
}

double normal_quantile(double u) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), u);
}

namespace {

double phi_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
double phi_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Sorted scenarios of one product with prefix sums for O(log S) SAA cost evaluation.
struct Empirical {
  std::vector<double> y;
  std::vector<double> prefix;  // prefix[k] = y[0] + ... + y[k-1]

  explicit Empirical(std::vector<double> v) : y(std::move(v)) {
    std::sort(y.begin(), y.end());
    prefix.assign(y.size() + 1, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i];
  }

  double cost(double cb, double ch, double z) const {
    const auto k = static_cast<std::size_t>(std::lower_bound(y.begin(), y.end(), z) - y.begin());
    const double S = static_cast<double>(y.size());
    const double below = prefix[k];
    const double above = prefix.back() - below;
    const double nb = static_cast<double>(k);
    return (cb * (above - (S - nb) * z) + ch * (nb * z - below)) / S;
  }

  /// Smallest minimizer: the ceil(S tau)-th order statistic.
  double quantile(double cb, double ch) const {
    const double tau = cb / (cb + ch);
    const auto S = static_cast<double>(y.size());
    const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(S * tau - 1e-12)));
    return y[std::min(k, y.size()) - 1];
  }
};

/// Increasing concave PA C(z) = min_j (s_j z + c_j): inverse and breakpoints.
double concave_inverse(const PaTerm& t, double v) {
  double z = -std::numeric_limits<double>::infinity();
  for (const auto& pc : t.pieces) z = std::max(z, (v - pc.intercept) / pc.slope);
  return z;
}

std::vector<double> breakpoints(const PaTerm& t) {
  std::vector<double> out;
  for (std::size_t i = 0; i < t.pieces.size(); ++i)
    for (std::size_t j = i + 1; j < t.pieces.size(); ++j) {
      const auto& a = t.pieces[i];
      const auto& b = t.pieces[j];
      if (a.slope != b.slope) out.push_back((b.intercept - a.intercept) / (a.slope - b.slope));
    }
  return out;
}

double term_value(const PaTerm& t, double z) { return t.value(z, Vector()); }

template <class F>
double argmin_over(const std::vector<double>& cands, F f) {
  double best = cands.front();
  double fb = f(best);
  for (double c : cands) {
    const double v = f(c);
    if (v < fb) {
      fb = v;
      best = c;
    }
  }
  return best;
}

double golden(const std::function<double(double)>& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-12 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

double newsvendor_expected_cost(double cb, double ch, double z, double m, double sigma) {
  if (sigma <= 0.0) return cb * std::max(m - z, 0.0) + ch * std::max(z - m, 0.0);
  const double u = (z - m) / sigma;
  const double shortage = sigma * (phi_pdf(u) - u * (1.0 - phi_cdf(u)));
  const double holding = sigma * (u * phi_cdf(u) + phi_pdf(u));
  return cb * shortage + ch * holding;
}

double newsvendor_optimal_cost(double cb, double ch, double sigma) {
  return (cb + ch) * phi_pdf(normal_quantile(cb / (cb + ch))) * sigma;
}

Vector saa_decision(const CostSetup& setup, const Matrix& scenarios) {
  setup.validate();
  if (scenarios.rows() < 1 || scenarios.cols() < setup.d())
    throw DimensionError("scenario matrix does not match the cost setup");
  std::vector<Empirical> emp;
  for (int i = 0; i < setup.d(); ++i) {
    const Vector col = scenarios.col(i);
    emp.emplace_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  Vector z(setup.d());
  for (int i = 0; i < setup.d(); ++i) z[i] = emp[static_cast<std::size_t>(i)].quantile(setup.costs[static_cast<std::size_t>(i)].first, setup.costs[static_cast<std::size_t>(i)].second);
  const auto [cb1, ch1] = setup.costs[0];

  switch (setup.kind) {
    case CostKind::newsvendor:
      return z;
    case CostKind::newsvendor_capacity: {
      const PaTerm C = capacity_cost_term(0);
      std::vector<double> cands = emp[0].y;
      for (double b : breakpoints(C)) cands.push_back(b);
      z[0] = argmin_over(cands, [&](double v) { return emp[0].cost(cb1, ch1, v) + term_value(C, v); });
      return z;
    }
    case CostKind::capacity_linear: {
      if (z.sum() <= setup.C0) return z;
      const auto [cb2, ch2] = setup.costs[1];
      std::vector<double> cands = emp[0].y;
      for (double y2 : emp[1].y) cands.push_back(setup.C0 - y2);
      const double z1 = argmin_over(cands, [&](double v) {
        return emp[0].cost(cb1, ch1, v) + emp[1].cost(cb2, ch2, setup.C0 - v);
      });
      return Vector{{z1, setup.C0 - z1}};
    }
    case CostKind::capacity_concave: {
      const PaTerm C = capacity_cost_term(0);
      if (term_value(C, z[0]) + term_value(C, z[1]) <= setup.C0) return z;
      const auto [cb2, ch2] = setup.costs[1];
      const double q2 = z[1];
      const auto z2_of = [&](double z1) { return std::min(q2, concave_inverse(C, setup.C0 - term_value(C, z1))); };
      // g(z1) = E1(z1) + E2(z2_of(z1)) is piecewise affine; every kink is a candidate.
      std::vector<double> cands = emp[0].y;
      const auto bps = breakpoints(C);
      cands.insert(cands.end(), bps.begin(), bps.end());
      for (double y2 : emp[1].y) cands.push_back(concave_inverse(C, setup.C0 - term_value(C, y2)));
      for (double b : bps) cands.push_back(concave_inverse(C, setup.C0 - term_value(C, b)));
      cands.push_back(concave_inverse(C, setup.C0 - term_value(C, q2)));
      const double z1 = argmin_over(cands, [&](double v) {
        return emp[0].cost(cb1, ch1, v) + emp[1].cost(cb2, ch2, z2_of(v));
      });
      return Vector{{z1, z2_of(z1)}};
    }
  }
  return z;
}

Vector simopt_decision(const DemandModel& model, const CostSetup& setup, const Vector& x,
                       const Rng& rng, int scenarios) {
  setup.validate();
  if (model.m() != setup.d()) throw ConfigError("demand model and cost setup disagree on products");
  const Vector mu = model.mean(x);
  const double sd = model.noise_sd;
  if (setup.kind == CostKind::newsvendor) {
    Vector z(setup.d());
    for (int i = 0; i < setup.d(); ++i) {
      const auto [cb, ch] = setup.costs[static_cast<std::size_t>(i)];
      z[i] = mu[i] + sd * normal_quantile(cb / (cb + ch));
    }
    return z;
  }
  if (setup.kind == CostKind::newsvendor_capacity) {
    const auto [cb, ch] = setup.costs[0];
    const PaTerm C = capacity_cost_term(0);
    const auto f = [&](double z) {
      return newsvendor_expected_cost(cb, ch, z, mu[0], sd) + term_value(C, z);
    };
    // Convex on each piece of C: minimize piecewise, then keep the best.
    const double lo = mu[0] - 8.0 * sd - 1.0, hi = mu[0] + 8.0 * sd + 1.0;
    std::vector<double> edges{lo, hi};
    for (double b : breakpoints(C))
      if (b > lo && b < hi) edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    std::vector<double> cands(edges);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) cands.push_back(golden(f, edges[i], edges[i + 1]));
    const int grid = 2000;
    for (int i = 0; i <= grid; ++i) cands.push_back(lo + (hi - lo) * i / grid);
    return Vector::Constant(1, argmin_over(cands, f));
  }
  if (scenarios < 1) throw ConfigError("simopt scenarios must be >= 1");
  Rng r = rng;
  Matrix S(scenarios, setup.d());
  for (int s = 0; s < scenarios; ++s)
    for (int i = 0; i < setup.d(); ++i) S(s, i) = mu[i] + sd * r.normal();
  return saa_decision(setup, S);
}

Vector LinearPredictor::predict(const Vector& x) const {
  const Eigen::Index p = coef.rows() - 1;
  return coef.topRows(p).transpose() * x + coef.row(p).transpose();
}

LinearPredictor fit_ols(const Dataset& data) {
  const Eigen::Index n = data.n(), p = data.p();
  Matrix A(n, p + 1);
  A.leftCols(p) = data.features();
  A.col(p).setOnes();
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  LinearPredictor out;
  if (qr.rank() == p + 1) {
    out.coef = qr.solve(data.outcomes());
  } else {
    Matrix G = A.transpose() * A;
    G.diagonal().array() += 1e-8;
    out.coef = G.ldlt().solve(A.transpose() * data.outcomes());
  }
  return out;
}

Vector lift_monomials(const Vector& x, int degree) {
  if (degree < 1) throw ConfigError("monomial degree must be >= 1");
  std::vector<double> out(x.data(), x.data() + x.size());
  // Monomials of degree k as products over nondecreasing index tuples.
  std::vector<std::pair<double, Eigen::Index>> prev;  // (value, last index)
  for (Eigen::Index i = 0; i < x.size(); ++i) prev.emplace_back(x[i], i);
  for (int k = 2; k <= degree; ++k) {
    std::vector<std::pair<double, Eigen::Index>> next;
    for (const auto& [v, last] : prev)
      for (Eigen::Index i = last; i < x.size(); ++i) next.emplace_back(v * x[i], i);
    for (const auto& e : next) out.push_back(e.first);
    prev = std::move(next);
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Dataset lift_dataset(const Dataset& data, int degree) {
  if (data.n() == 0) return data;
  const Eigen::Index q = lift_monomials(data.features().row(0).transpose(), degree).size();
  Matrix X(data.n(), q);
  for (Eigen::Index s = 0; s < data.n(); ++s)
    X.row(s) = lift_monomials(data.features().row(s).transpose(), degree).transpose();
  return Dataset(std::move(X), data.outcomes());
}

namespace {

struct Fit {
  Theta theta;
  ConstraintSpec cons;
};

Fit fit_rule(const Dataset& data, const HypothesisConfig& hyp, const PenalizedProblem& prob,
             const TrainSettings& ts) {
  if (ts.sweep_budget > 0) {
    SweepOptions so = ts.sweep;
    so.budget = ts.sweep_budget;
    SweepResult sr = sweep(data, hyp, prob, ts.smm, ts.space, so);
    return Fit{sr.final_fit.best.theta, sr.best_cons};
  }
  MultiStartResult ms = multi_start(data, hyp, prob, ts.smm);
  return Fit{ms.best.theta, prob.cons};
}

}  // namespace

DecisionRule train_padr(const Dataset& data, const CostSetup& setup, int K1, int K2,
                        const TrainSettings& ts, Theta* out_theta, ConstraintSpec* out_cons) {
  const HypothesisConfig hyp{setup.d(), K1, K2, ts.mu, static_cast<int>(data.p())};
  Fit fit = fit_rule(data, hyp, setup.problem(ts.gamma, ts.lambda), ts);
  if (out_theta) *out_theta = fit.theta;
  if (out_cons) *out_cons = fit.cons;
  return [theta = std::move(fit.theta)](const Vector& x) { return rule::eval(theta, x); };
}

DecisionRule baseline_po_linear(const Dataset& data, const CostSetup& setup) {
  if (data.m() != setup.d()) throw ConfigError("PO-L needs one outcome per decision");
  LinearPredictor lp = fit_ols(data);
  return [lp = std::move(lp), setup](const Vector& x) {
    return saa_decision(setup, lp.predict(x).transpose());
  };
}

DecisionRule baseline_po_pa(const Dataset& data, const CostSetup& setup, int K1, int K2,
                            const TrainSettings& ts) {
  if (data.m() != setup.d()) throw ConfigError("PO-PA needs one outcome per decision");
  const HypothesisConfig hyp{setup.d(), K1, K2, ts.mu, static_cast<int>(data.p())};
  Fit fit = fit_rule(data, hyp, unconstrained(squared_loss(setup.d())), ts);
  return [theta = std::move(fit.theta), setup](const Vector& x) {
    return saa_decision(setup, rule::eval(theta, x).transpose());
  };
}

DecisionRule baseline_gldr(const Dataset& data, const CostSetup& setup, int degree,
                           const TrainSettings& ts) {
  const Dataset lifted = lift_dataset(data, degree);
  DecisionRule inner = train_padr(lifted, setup, 1, 0, ts);
  return [inner = std::move(inner), degree](const Vector& x) { return inner(lift_monomials(x, degree)); };
}

Evaluation evaluate(const DecisionRule& decide, const Dataset& test, const CostSetup& setup) {
  const CostSpec cost = setup.cost();
  const ConstraintSpec cons = setup.constraints();
  Evaluation ev;
  double total = 0.0;
  Eigen::Index counted = 0;
  for (Eigen::Index s = 0; s < test.n(); ++s) {
    Vector z = decide(test.features().row(s).transpose());
    const Vector y = test.outcomes().row(s).transpose();
    const bool ok = cons.empty() || feasible(z, cons, false);
    if (ok) ++ev.feasible_count;
    if (!ok && setup.kind == CostKind::capacity_linear) z = project_convex(z, cons);
    if (ok || setup.kind == CostKind::capacity_linear) {
      total += cost_eval(cost, z, y);
      ++counted;
    }
  }
  ev.feasibility = static_cast<double>(ev.feasible_count) / static_cast<double>(test.n());
  ev.test_cost = counted > 0 ? total / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

void ExperimentConfig::validate() const {
  cost.validate();
  if (model.m() != cost.d()) throw ConfigError("demand model and cost setup disagree on products");
  if (p < model.min_p()) throw ConfigError("p below the demand model's minimum");
  if (n_train < 2 || n_test < 1) throw ConfigError("n_train must be >= 2 and n_test >= 1");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  train.smm.validate();
}

namespace {

struct MethodSpec {
  enum Kind { simopt, padr, ldr, gldr, po_l, po_pa } kind;
  int a = 0, b = 0;
};

MethodSpec parse_method(const std::string& name) {
  int a = 0, b = 0;
  char tail = 0;
  if (name == "SIMOPT") return {MethodSpec::simopt};
  if (name == "LDR") return {MethodSpec::ldr, 1, 0};
  if (name == "PO-L") return {MethodSpec::po_l};
  if (name == "PO-PA") return {MethodSpec::po_pa, 3, 0};
  if (std::sscanf(name.c_str(), "GLDR-%d%c", &a, &tail) == 1 && a >= 1) return {MethodSpec::gldr, a};
  if (std::sscanf(name.c_str(), "PADR(%d,%d%c", &a, &b, &tail) == 3 && tail == ')' && a >= 1 && b >= 0)
    return {MethodSpec::padr, a, b};
  if (std::sscanf(name.c_str(), "PO-PA(%d,%d%c", &a, &b, &tail) == 3 && tail == ')' && a >= 1 && b >= 0)
    return {MethodSpec::po_pa, a, b};
  throw ConfigError("methods: unknown method '" + name + "'");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::vector<ReportRow> run_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<MethodSpec> specs;
  for (const auto& m : cfg.methods) specs.push_back(parse_method(m));
  const std::size_t M = specs.size(), NS = cfg.seeds.size();

  struct SeedData {
    std::optional<Dataset> train;
    std::optional<Dataset> test;
    double simopt_cost = 0.0;
    double simopt_feas = 1.0;
  };
  std::vector<SeedData> seeds(NS);
  const int threads = resolve_threads(cfg.threads);
  parallel_for(static_cast<int>(NS), threads, [&](int i) {
    const Rng root(cfg.seeds[static_cast<std::size_t>(i)], Stream::data);
    auto& sd = seeds[static_cast<std::size_t>(i)];
    sd.train = gen_dataset(cfg.model, cfg.n_train, cfg.p, root.derive(0));
    sd.test = gen_dataset(cfg.model, cfg.n_test, cfg.p, root.derive(1));
    const Rng sim = root.derive(2);
    // The oracle sees each test point once, so a row counter keys its scenario stream.
    auto counter = std::make_shared<std::uint64_t>(0);
    const Dataset& test = *sd.test;
    DecisionRule oracle = [&, counter](const Vector& x) {
      return simopt_decision(cfg.model, cfg.cost, x, sim.derive((*counter)++), cfg.simopt_scenarios);
    };
    const Evaluation ev = evaluate(oracle, test, cfg.cost);
    sd.simopt_cost = ev.test_cost;
    sd.simopt_feas = ev.feasibility;
  });

  std::vector<ReportRow> rows(NS * M);
  parallel_for(static_cast<int>(NS * M), threads, [&](int cell) {
    const std::size_t si = static_cast<std::size_t>(cell) / M, mi = static_cast<std::size_t>(cell) % M;
    const auto& sd = seeds[si];
    ReportRow& row = rows[static_cast<std::size_t>(cell)];
    row.method = cfg.methods[mi];
    row.setting = cfg.setting;
    row.n = cfg.n_train;
    row.p = cfg.p;
    row.seed = std::to_string(cfg.seeds[si]);
    const MethodSpec& ms = specs[mi];
    if (ms.kind == MethodSpec::simopt) {
      row.test_cost = sd.simopt_cost;
      row.feasibility = sd.simopt_feas;
      row.gap = 0.0;
      return;
    }
    TrainSettings ts = cfg.train;
    ts.smm.seed = cfg.seeds[si];
    ts.smm.threads = 1;
    try {
      const auto start = std::chrono::steady_clock::now();
      DecisionRule rule;
      switch (ms.kind) {
        case MethodSpec::padr: rule = train_padr(*sd.train, cfg.cost, ms.a, ms.b, ts); break;
        case MethodSpec::ldr: rule = train_padr(*sd.train, cfg.cost, 1, 0, ts); break;
        case MethodSpec::gldr: rule = baseline_gldr(*sd.train, cfg.cost, ms.a, ts); break;
        case MethodSpec::po_l: rule = baseline_po_linear(*sd.train, cfg.cost); break;
        case MethodSpec::po_pa: rule = baseline_po_pa(*sd.train, cfg.cost, ms.a, ms.b, ts); break;
        case MethodSpec::simopt: break;
      }
      if (cfg.timing)
        row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const Evaluation ev = evaluate(rule, *sd.test, cfg.cost);
      row.test_cost = ev.test_cost;
      row.feasibility = ev.feasibility;
      row.gap = row.test_cost - sd.simopt_cost;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      row.error = e.what();
      row.test_cost = row.gap = std::numeric_limits<double>::quiet_NaN();
    }
  });

  if (NS > 1) {
    for (std::size_t mi = 0; mi < M; ++mi) {
      ReportRow mean{cfg.methods[mi], cfg.setting, cfg.n_train, cfg.p, "mean", 0.0, 0.0, 0.0, 0.0, {}};
      for (std::size_t si = 0; si < NS; ++si) {
        const auto& r = rows[si * M + mi];
        mean.test_cost += r.test_cost / static_cast<double>(NS);
        mean.gap += r.gap / static_cast<double>(NS);
        mean.feasibility += r.feasibility / static_cast<double>(NS);
        mean.train_seconds += r.train_seconds / static_cast<double>(NS);
      }
      rows.push_back(std::move(mean));
    }
  }
  return rows;
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "method,setting,n,p,seed,test_cost,gap,feasibility,train_seconds\n";
  for (const auto& r : rows)
    os << csv_field(r.method) << ',' << csv_field(r.setting) << ',' << r.n << ',' << r.p << ','
       << r.seed << ',' << format_double(r.test_cost) << ',' << format_double(r.gap) << ','
       << format_double(r.feasibility) << ',' << format_double(r.train_seconds) << '\n';
  return os.str();
}

}  // namespace padr::bench
