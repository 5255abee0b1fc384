#include "padr/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace padr {

using rule::AffineForm;
using rule::InnerPair;

double PaTerm::piece_value(std::size_t j, double z, const Vector& y) const {
  const auto& pc = pieces[j];
  double v = pc.slope * z + pc.intercept;
  if (y_index >= 0) v += pc.y_coef * y[y_index];
  return v;
}

double PaTerm::value(double z, const Vector& y) const {
  double v = piece_value(0, z, y);
  for (std::size_t j = 1; j < pieces.size(); ++j)
    v = concave ? std::min(v, piece_value(j, z, y)) : std::max(v, piece_value(j, z, y));
  return v;
}

double SeparablePa::value(const Vector& z, const Vector& y) const {
  double v = constant;
  for (const auto& t : terms) v += t.value(z[t.output], y);
  return v;
}

bool SeparablePa::convex() const {
  return std::none_of(terms.begin(), terms.end(),
                      [](const PaTerm& t) { return t.concave && t.pieces.size() > 1; });
}

void CostSpec::validate() const {
  if (d < 1) throw ConfigError("cost '" + name + "': d must be >= 1");
  if (m < 1) throw ConfigError("cost '" + name + "': m must be >= 1");
  if (const auto* pa = std::get_if<SeparablePa>(&form)) {
    for (const auto& t : pa->terms) {
      if (t.pieces.empty()) throw ConfigError("cost '" + name + "': term without pieces");
      if (t.output < 0 || t.output >= d)
        throw ConfigError("cost '" + name + "': term output out of range");
      if (t.y_index >= m) throw ConfigError("cost '" + name + "': term outcome index out of range");
    }
  } else if (const auto* sm = std::get_if<SmoothCost>(&form)) {
    if (!sm->fn) throw ConfigError("cost '" + name + "': missing smooth callback");
    if (!(sm->grad_lipschitz > 0.0))
      throw ConfigError("cost '" + name + "': gradient Lipschitz constant must be > 0");
  } else {
    const auto& mono = std::get<MonotoneDecomp>(form);
    if (!mono.up || !mono.down) throw ConfigError("cost '" + name + "': missing monotone callback");
  }
}

namespace {

PaTerm newsvendor_term(int output, int y_index, double cb, double ch) {
  return PaTerm{output, y_index, false, {{-cb, 0.0, cb}, {ch, 0.0, -ch}}};
}

void check_positive(double cb, double ch) {
  if (!(cb > 0.0) || !(ch > 0.0)) throw ConfigError("newsvendor costs must be > 0");
}

}  // namespace

CostSpec newsvendor(double cb, double ch) {
  check_positive(cb, ch);
  SeparablePa pa;
  pa.terms.push_back(newsvendor_term(0, 0, cb, ch));
  return CostSpec{"newsvendor", 1, 1, std::move(pa)};
}

CostSpec newsvendor_hinge_sum(double cb, double ch) {
  check_positive(cb, ch);
  SeparablePa pa;
  pa.terms.push_back(PaTerm{0, 0, false, {{-cb, 0.0, cb}, {0.0, 0.0, 0.0}}});
  pa.terms.push_back(PaTerm{0, 0, false, {{ch, 0.0, -ch}, {0.0, 0.0, 0.0}}});
  return CostSpec{"newsvendor_hinge_sum", 1, 1, std::move(pa)};
}

CostSpec multi_newsvendor(const std::vector<std::pair<double, double>>& costs) {
  if (costs.empty()) throw ConfigError("multi_newsvendor needs at least one product");
  SeparablePa pa;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    check_positive(costs[i].first, costs[i].second);
    pa.terms.push_back(newsvendor_term(static_cast<int>(i), static_cast<int>(i), costs[i].first,
                                       costs[i].second));
  }
  const int d = static_cast<int>(costs.size());
  return CostSpec{"multi_newsvendor", d, d, std::move(pa)};
}

PaTerm capacity_cost_term(int output) {
  return PaTerm{output, -1, true, {{1.0, 0.0, 0.0}, {0.6, 0.8, 0.0}, {0.4, 15.6, 0.0}}};
}

CostSpec newsvendor_capacity(double cb, double ch) {
  CostSpec spec = newsvendor(cb, ch);
  spec.name = "newsvendor_capacity";
  std::get<SeparablePa>(spec.form).terms.push_back(capacity_cost_term(0));
  return spec;
}

CostSpec squared_loss(int d) {
  auto fn = [](const Vector& z, const Vector& y) {
    const Vector r = z - y.head(z.size());
    return ValueGrad{r.squaredNorm(), 2.0 * r};
  };
  return CostSpec{"squared_loss", d, d, SmoothCost{fn, 2.0}};
}

CostSpec squared_loss_monotone(int d) {
  auto up = [](const Vector& z, const Vector& y) {
    const Vector r = (z - y.head(z.size())).cwiseMax(0.0);
    return ValueGrad{r.squaredNorm(), 2.0 * r};
  };
  auto down = [](const Vector& z, const Vector& y) {
    const Vector r = (y.head(z.size()) - z).cwiseMax(0.0);
    return ValueGrad{r.squaredNorm(), -2.0 * r};
  };
  return CostSpec{"squared_loss_monotone", d, d, MonotoneDecomp{up, down}};
}

double cost_eval(const CostSpec& spec, const Vector& z, const Vector& y) {
  if (z.size() != spec.d || y.size() != spec.m)
    throw DimensionError("cost '" + spec.name + "' expects d=" + std::to_string(spec.d) +
                         ", m=" + std::to_string(spec.m) + "; got " + std::to_string(z.size()) +
                         ", " + std::to_string(y.size()));
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SeparablePa>) {
          return f.value(z, y);
        } else if constexpr (std::is_same_v<T, MonotoneDecomp>) {
          return f.up(z, y).value + f.down(z, y).value;
        } else {
          return f.fn(z, y).value;
        }
      },
      spec.form);
}

Vector sample_costs(const Theta& theta, const Dataset& data, const CostSpec& spec) {
  if (theta.cfg().d != spec.d)
    throw DimensionError("rule has d=" + std::to_string(theta.cfg().d) + ", cost expects " +
                         std::to_string(spec.d));
  Vector out(data.n());
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    const Vector z = rule::eval(theta, data.features().row(s).transpose());
    out[s] = cost_eval(spec, z, data.outcomes().row(s).transpose());
  }
  return out;
}

double erm_cost(const Theta& theta, const Dataset& data, const CostSpec& spec) {
  return sample_costs(theta, data, spec).mean();
}

double inner_lipschitz(const Dataset& data) {
  return 2.0 * std::sqrt(data.max_sq_feature_norm() + 1.0);
}

double gradient_fd_error(const CostFn& fn, const Vector& z, const Vector& y, double h) {
  const Vector g = fn(z, y).grad;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Vector zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const double fd = (fn(zp, y).value - fn(zm, y).value) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

double ConvexSurrogate::value(const Vector& theta) const {
  double v = constant + linear.dot(theta);
  const auto hv = hinge_values(theta);
  for (std::size_t h = 0; h < hinges.size(); ++h)
    if (hinges[h].weight != 0.0) v += hinges[h].weight * hv[h];
  if (monotone) {
    const auto& mp = *monotone;
    Vector up(mp.inner.size()), down(mp.inner.size());
    for (std::size_t o = 0; o < mp.inner.size(); ++o) {
      up[o] = mp.inner[o].upper_value(theta);
      down[o] = mp.inner[o].lower_value(theta);
    }
    v += mp.fn->up(up, mp.y).value + mp.fn->down(down, mp.y).value;
  }
  if (quad != 0.0) v += 0.5 * quad * (theta - center).squaredNorm();
  return v;
}

std::vector<double> ConvexSurrogate::hinge_values(const Vector& theta) const {
  std::vector<double> hv(hinges.size());
  for (std::size_t h = 0; h < hinges.size(); ++h) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : hinges[h].forms) {
      double v = f.affine.eval(theta);
      for (int c : f.children) v += hv[static_cast<std::size_t>(c)];
      best = std::max(best, v);
    }
    hv[h] = best;
  }
  return hv;
}

Vector ConvexSurrogate::subgradient(const Vector& theta) const {
  Vector g = linear;
  const auto hv = hinge_values(theta);
  std::vector<double> mult(hinges.size(), 0.0);
  for (std::size_t h = 0; h < hinges.size(); ++h) mult[h] = hinges[h].weight;
  for (std::size_t h = hinges.size(); h-- > 0;) {
    if (mult[h] == 0.0) continue;
    // First form attaining the max carries the multiplier.
    const HingeForm* active = nullptr;
    for (const auto& f : hinges[h].forms) {
      double v = f.affine.eval(theta);
      for (int c : f.children) v += hv[static_cast<std::size_t>(c)];
      if (v >= hv[h]) {
        active = &f;
        break;
      }
    }
    active->affine.add_to(g, mult[h]);
    for (int c : active->children) mult[static_cast<std::size_t>(c)] += mult[h];
  }
  if (monotone) {
    const auto& mp = *monotone;
    const std::size_t d = mp.inner.size();
    Vector up(d), down(d);
    std::vector<int> up_arg(d), down_arg(d);
    for (std::size_t o = 0; o < d; ++o) {
      up[o] = mp.inner[o].upper_value(theta, &up_arg[o]);
      down[o] = mp.inner[o].lower_value(theta, &down_arg[o]);
    }
    const Vector gu = mp.fn->up(up, mp.y).grad;
    const Vector gd = mp.fn->down(down, mp.y).grad;
    for (std::size_t o = 0; o < d; ++o) {
      mp.inner[o].upper[up_arg[o]].add_to(g, gu[o]);
      mp.inner[o].lower[down_arg[o]].add_to(g, gd[o]);
    }
  }
  if (quad != 0.0) g += quad * (theta - center);
  return g;
}

void ConvexSurrogate::add_hinge(double weight, std::vector<HingeForm> forms) {
  if (forms.empty()) throw Error("hinge without forms");
  if (forms.size() == 1 && forms[0].children.empty()) {
    constant += weight * forms[0].affine.offset;
    forms[0].affine.add_to(linear, weight);
    return;
  }
  hinges.push_back(Hinge{weight, std::move(forms)});
}

std::vector<AffineForm> compose_piece(double slope, double offset, const InnerPair& inner) {
  std::vector<AffineForm> out;
  if (slope > 0.0) {
    out.reserve(inner.upper.size());
    for (const auto& f : inner.upper) out.push_back(f.scaled(slope, offset));
  } else if (slope < 0.0) {
    out.reserve(inner.lower.size());
    for (const auto& f : inner.lower) out.push_back(f.scaled(slope, offset));
  } else {
    out.push_back(AffineForm{{}, {}, offset});
  }
  return out;
}

std::vector<int> concave_active(const PaTerm& term, double z, const Vector& y, double eps) {
  std::vector<double> neg(term.pieces.size());
  for (std::size_t j = 0; j < neg.size(); ++j) neg[j] = -term.piece_value(j, z, y);
  return rule::active_indices(neg, eps);
}

std::vector<AffineForm> compose_term(const PaTerm& term, const Vector& y, const InnerPair& inner,
                                     double z_ref, double eps_outer, Rng* rng) {
  auto offset_of = [&](const PaPiece& pc) {
    return pc.intercept + (term.y_index >= 0 ? pc.y_coef * y[term.y_index] : 0.0);
  };
  if (term.concave) {
    const auto active = concave_active(term, z_ref, y, eps_outer);
    const int j = rng ? active[rng->below(active.size())] : active.front();
    const auto& pc = term.pieces[static_cast<std::size_t>(j)];
    return compose_piece(pc.slope, offset_of(pc), inner);
  }
  std::vector<AffineForm> out;
  for (const auto& pc : term.pieces) {
    auto part = compose_piece(pc.slope, offset_of(pc), inner);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

namespace {

std::vector<HingeForm> as_hinge_forms(std::vector<AffineForm> forms) {
  std::vector<HingeForm> out;
  out.reserve(forms.size());
  for (auto& f : forms) out.push_back(HingeForm{std::move(f), {}});
  return out;
}

Eigen::Index sample_of(const rule::InnerSurrogates& inner, std::size_t row) {
  if (row >= inner.sample_ids.size()) throw DimensionError("surrogate row out of range");
  return inner.sample_ids[row];
}

}  // namespace

ConvexSurrogate surrogate_pa_scalar(const SeparablePa& cost, const rule::InnerSurrogates& inner,
                                    std::size_t row, const Theta& theta_ref, const Dataset& data,
                                    const SurrogateOptions& opts) {
  const Eigen::Index s = sample_of(inner, row);
  const Vector y = data.outcomes().row(s).transpose();
  ConvexSurrogate out(theta_ref.cfg().q());
  out.constant = cost.constant;
  out.center = theta_ref.flat();
  out.lipschitz_inner = opts.lipschitz_inner;
  const bool any_concave =
      std::any_of(cost.terms.begin(), cost.terms.end(), [](const PaTerm& t) { return t.concave; });
  Vector z_ref;
  if (any_concave) z_ref = rule::eval(theta_ref, data.features().row(s).transpose());
  std::optional<Rng> sample_rng;
  if (opts.rng) sample_rng = opts.rng->derive(static_cast<std::uint64_t>(s));
  for (std::size_t t = 0; t < cost.terms.size(); ++t) {
    const auto& term = cost.terms[t];
    std::optional<Rng> term_rng;
    if (sample_rng && term.concave) term_rng = sample_rng->derive(t);
    auto forms = compose_term(term, y, inner.at(row, term.output),
                              term.concave ? z_ref[term.output] : 0.0, opts.eps_outer,
                              term_rng ? &*term_rng : nullptr);
    out.add_hinge(1.0, as_hinge_forms(std::move(forms)));
  }
  return out;
}

ConvexSurrogate surrogate_monotone(const MonotoneDecomp& cost, const rule::InnerSurrogates& inner,
                                   std::size_t row, const Theta& theta_ref, const Dataset& data) {
  const Eigen::Index s = sample_of(inner, row);
  const int d = theta_ref.cfg().d;
  MonotonePart mp;
  mp.fn = std::make_shared<const MonotoneDecomp>(cost);
  mp.y = data.outcomes().row(s).transpose();
  for (int o = 0; o < d; ++o) mp.inner.push_back(inner.at(row, o));

  // Spot-check monotonicity along each coordinate around f(theta').
  const Vector z = rule::eval(theta_ref, data.features().row(s).transpose());
  const double base_up = cost.up(z, mp.y).value, base_down = cost.down(z, mp.y).value;
  for (int o = 0; o < d; ++o) {
    for (double step : {1e-3, 1.0}) {
      Vector zp = z;
      zp[o] += step;
      const double tol = 1e-9 * (1.0 + std::abs(base_up) + std::abs(base_down));
      if (cost.up(zp, mp.y).value < base_up - tol)
        throw Error("monotone decomposition: up part decreases along output " + std::to_string(o));
      if (cost.down(zp, mp.y).value > base_down + tol)
        throw Error("monotone decomposition: down part increases along output " +
                    std::to_string(o));
    }
  }

  ConvexSurrogate out(theta_ref.cfg().q());
  out.center = theta_ref.flat();
  out.monotone = std::move(mp);
  return out;
}

ConvexSurrogate surrogate_smooth(const SmoothCost& cost, const rule::InnerSurrogates& inner,
                                 std::size_t row, const Theta& theta_ref, const Dataset& data,
                                 const SurrogateOptions& opts) {
  const Eigen::Index s = sample_of(inner, row);
  const int d = theta_ref.cfg().d;
  const Vector y = data.outcomes().row(s).transpose();
  const Vector z = rule::eval(theta_ref, data.features().row(s).transpose());
  const ValueGrad vg = cost.fn(z, y);
  const double lf = opts.lipschitz_inner > 0.0 ? opts.lipschitz_inner : inner_lipschitz(data);

  ConvexSurrogate out(theta_ref.cfg().q());
  out.constant = vg.value - vg.grad.dot(z);
  out.quad = cost.grad_lipschitz * lf * lf;
  out.center = theta_ref.flat();
  out.lipschitz_inner = lf;
  for (int o = 0; o < d; ++o) {
    const double g = vg.grad[o];
    const auto& pair = inner.at(row, o);
    if (g > 0.0) {
      out.add_hinge(g, as_hinge_forms(compose_piece(1.0, 0.0, pair)));
    } else if (g < 0.0) {
      out.add_hinge(-g, as_hinge_forms(compose_piece(-1.0, 0.0, pair)));
    }
  }
  return out;
}

ConvexSurrogate build_surrogate(const CostSpec& spec, const rule::InnerSurrogates& inner,
                                std::size_t row, const Theta& theta_ref, const Dataset& data,
                                const SurrogateOptions& opts) {
  if (spec.d != theta_ref.cfg().d || spec.m != data.m())
    throw DimensionError("cost '" + spec.name + "' does not match rule/data dimensions");
  if (const auto* pa = std::get_if<SeparablePa>(&spec.form))
    return surrogate_pa_scalar(*pa, inner, row, theta_ref, data, opts);
  if (const auto* sm = std::get_if<SmoothCost>(&spec.form))
    return surrogate_smooth(*sm, inner, row, theta_ref, data, opts);
  return surrogate_monotone(std::get<MonotoneDecomp>(spec.form), inner, row, theta_ref, data);
}

}  // namespace padr
