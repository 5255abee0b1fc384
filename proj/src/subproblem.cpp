#include "padr/subproblem.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace padr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

std::vector<double> uniform_weights(std::size_t n, std::span<const double> weights) {
  if (!weights.empty()) {
    if (weights.size() != n) throw DimensionError("surrogate weight count mismatch");
    return {weights.begin(), weights.end()};
  }
  return std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

SparseMatrix diagonal_matrix(const Vector& d) {
  SparseMatrix m(d.size(), d.size());
  m.setIdentity();
  m.diagonal() = d;
  return m;
}

}  // namespace

double EpigraphQp::objective(const Vector& x) const {
  return 0.5 * x.dot(P.cwiseProduct(x)) + c.dot(x) + constant;
}

std::string_view status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_numerics: return "infeasible_numerics";
  }
  return "unknown";
}

EpigraphQp make_qp(Vector P, Vector c, SparseMatrix A, Vector l, Vector u) {
  if (P.size() != c.size() || A.cols() != c.size() || l.size() != A.rows() || u.size() != A.rows())
    throw DimensionError("QP data dimensions disagree");
  if ((P.array() < 0.0).any()) throw DimensionError("QP quadratic diagonal must be >= 0");
  EpigraphQp qp;
  qp.q = c.size();
  qp.P = std::move(P);
  qp.c = std::move(c);
  qp.A = std::move(A);
  qp.A.makeCompressed();
  qp.l = std::move(l);
  qp.u = std::move(u);
  return qp;
}

EpigraphQp build_epigraph_qp(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                             double eta, double mu, std::span<const double> weights) {
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  const Eigen::Index q = theta_ref.cfg().q();
  const auto w = uniform_weights(surrogates.size(), weights);
  const Vector& ref = theta_ref.flat();

  Eigen::Index hinge_vars = 0;
  for (const auto& s : surrogates) {
    if (!s.has_epigraph()) throw Error("surrogate has no epigraph form");
    if (s.q() != q) throw DimensionError("surrogate parameter count mismatch");
    hinge_vars += static_cast<Eigen::Index>(s.hinges.size());
  }

  EpigraphQp qp;
  qp.q = q;
  qp.hinge_vars = hinge_vars;
  const Eigen::Index n = q + hinge_vars;
  qp.P = Vector::Zero(n);
  qp.c = Vector::Zero(n);
  qp.P.head(q).setConstant(eta);
  qp.c.head(q) = -eta * ref;
  qp.constant = 0.5 * eta * ref.squaredNorm();

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> upper;
  Eigen::Index var = q;
  for (std::size_t i = 0; i < surrogates.size(); ++i) {
    const auto& s = surrogates[i];
    qp.P.head(q).array() += w[i] * s.quad;
    qp.c.head(q) += w[i] * (s.linear - s.quad * s.center);
    qp.constant += w[i] * (s.constant + 0.5 * s.quad * s.center.squaredNorm());
    const Eigen::Index base = var;
    for (const auto& h : s.hinges) {
      qp.c[var] = w[i] * h.weight;
      for (const auto& f : h.forms) {
        const auto row = static_cast<Eigen::Index>(upper.size());
        for (std::size_t k = 0; k < f.affine.idx.size(); ++k)
          trip.emplace_back(row, f.affine.idx[k], f.affine.coef[k]);
        for (int ch : f.children) trip.emplace_back(row, base + ch, 1.0);
        trip.emplace_back(row, var, -1.0);
        upper.push_back(-f.affine.offset);
        qp.row_owner.push_back(static_cast<int>(i));
      }
      ++var;
    }
  }
  qp.hinge_rows = static_cast<Eigen::Index>(upper.size());
  const Eigen::Index m = qp.hinge_rows + q;
  for (Eigen::Index j = 0; j < q; ++j) trip.emplace_back(qp.hinge_rows + j, j, 1.0);
  qp.A.resize(m, n);
  qp.A.setFromTriplets(trip.begin(), trip.end());
  qp.A.makeCompressed();
  qp.l.resize(m);
  qp.u.resize(m);
  for (Eigen::Index r = 0; r < qp.hinge_rows; ++r) {
    qp.l[r] = -kInf;
    qp.u[r] = upper[static_cast<std::size_t>(r)];
  }
  qp.l.tail(q).setConstant(-mu);
  qp.u.tail(q).setConstant(mu);
  return qp;
}

namespace {

// Problem data after Ruiz equilibration: Pbar = c D P D, qbar = c D q,
// Abar = E A D, bounds scaled by E.
struct Scaled {
  Vector P, q, l, u, D, E;
  SparseMatrix A, At;
  double cost = 1.0;
};

double clip_scale(double v) { return std::clamp(v, 1e-4, 1e4); }

Scaled equilibrate(const EpigraphQp& qp, int iters) {
  Scaled s;
  s.P = qp.P;
  s.q = qp.c;
  s.A = qp.A;
  s.D = Vector::Ones(qp.n());
  s.E = Vector::Ones(qp.m());
  for (int it = 0; it < iters; ++it) {
    Vector col = s.P.cwiseAbs();
    Vector row = Vector::Zero(qp.m());
    for (int k = 0; k < s.A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator e(s.A, k); e; ++e) {
        col[e.col()] = std::max(col[e.col()], std::abs(e.value()));
        row[e.row()] = std::max(row[e.row()], std::abs(e.value()));
      }
    Vector dt(qp.n()), et(qp.m());
    for (Eigen::Index j = 0; j < dt.size(); ++j)
      dt[j] = col[j] < 1e-4 ? 1.0 : 1.0 / std::sqrt(clip_scale(col[j]));
    for (Eigen::Index i = 0; i < et.size(); ++i)
      et[i] = row[i] < 1e-4 ? 1.0 : 1.0 / std::sqrt(clip_scale(row[i]));
    s.P = s.P.cwiseProduct(dt).cwiseProduct(dt);
    s.q = s.q.cwiseProduct(dt);
    s.A = et.asDiagonal() * s.A * dt.asDiagonal();
    s.D = s.D.cwiseProduct(dt);
    s.E = s.E.cwiseProduct(et);

    const double pmean = s.P.size() ? s.P.cwiseAbs().mean() : 0.0;
    const double scale = std::max(pmean, inf_norm(s.q));
    const double ct = scale < 1e-4 ? 1.0 : 1.0 / clip_scale(scale);
    s.P *= ct;
    s.q *= ct;
    s.cost *= ct;
  }
  s.A.makeCompressed();
  s.At = s.A.transpose();
  s.l = qp.l.cwiseProduct(s.E);
  s.u = qp.u.cwiseProduct(s.E);
  return s;
}

Vector project(const Vector& v, const Vector& l, const Vector& u) { return v.cwiseMax(l).cwiseMin(u); }

struct Residuals {
  double prim, dual, prim_scale, dual_scale;
};

// Residuals of the unscaled problem, evaluated from scaled iterates.
Residuals residuals(const Scaled& s, const Vector& x, const Vector& z, const Vector& y) {
  const Vector Ax = s.A * x;
  const Vector Px = s.P.cwiseProduct(x);
  const Vector Aty = s.At * y;
  const Vector einv = s.E.cwiseInverse();
  const Vector dinv = s.D.cwiseInverse();
  Residuals r;
  r.prim = inf_norm((Ax - z).cwiseProduct(einv));
  r.prim_scale = std::max(inf_norm(Ax.cwiseProduct(einv)), inf_norm(z.cwiseProduct(einv)));
  r.dual = inf_norm((Px + s.q + Aty).cwiseProduct(dinv)) / s.cost;
  r.dual_scale = std::max({inf_norm(Px.cwiseProduct(dinv)), inf_norm(Aty.cwiseProduct(dinv)),
                           inf_norm(s.q.cwiseProduct(dinv))}) /
                 s.cost;
  return r;
}

Vector rho_vector(const Scaled& s, double rho) {
  Vector r(s.l.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (s.l[i] == -kInf && s.u[i] == kInf)
      r[i] = 1e-6;
    else if (s.u[i] - s.l[i] < 1e-10)
      r[i] = 1e3 * rho;
    else
      r[i] = rho;
  }
  return r;
}

using Cholesky = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

SparseMatrix reduced_kkt(const Scaled& s, const Vector& rho, double sigma) {
  SparseMatrix K = s.At * rho.asDiagonal() * s.A;
  K += diagonal_matrix(s.P.array() + sigma);
  K.makeCompressed();
  return K;
}

// Solves the equality-constrained QP on the guessed active set and returns
// scaled (x, y) when the guess checks out.
bool polish(const Scaled& s, const Vector& z, const Vector& y, double prim_ref, double dual_ref,
            Vector& x_out, Vector& y_out, Residuals& res_out) {
  const Eigen::Index n = s.P.size(), m = s.l.size();
  std::vector<Eigen::Index> act;
  std::vector<double> rhs_b;
  std::vector<int> side;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (z[i] - s.l[i] < -y[i]) {
      act.push_back(i);
      rhs_b.push_back(s.l[i]);
      side.push_back(-1);
    } else if (s.u[i] - z[i] < y[i]) {
      act.push_back(i);
      rhs_b.push_back(s.u[i]);
      side.push_back(1);
    }
  }
  const auto k = static_cast<Eigen::Index>(act.size());
  const double delta = 1e-7;
  std::vector<Eigen::Triplet<double>> reg, exact;
  for (Eigen::Index j = 0; j < n; ++j) {
    reg.emplace_back(j, j, s.P[j] + delta);
    if (s.P[j] != 0.0) exact.emplace_back(j, j, s.P[j]);
  }
  for (Eigen::Index r = 0; r < k; ++r) {
    for (SparseMatrix::InnerIterator e(s.At, act[r]); e; ++e) {
      for (auto* t : {&reg, &exact}) {
        t->emplace_back(n + r, e.row(), e.value());
        t->emplace_back(e.row(), n + r, e.value());
      }
    }
    reg.emplace_back(n + r, n + r, -delta);
  }
  SparseMatrix Kreg(n + k, n + k), Kex(n + k, n + k);
  Kreg.setFromTriplets(reg.begin(), reg.end());
  Kex.setFromTriplets(exact.begin(), exact.end());
  Kreg.makeCompressed();
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(Kreg);
  if (lu.info() != Eigen::Success) return false;
  Vector rhs(n + k);
  rhs.head(n) = -s.q;
  for (Eigen::Index r = 0; r < k; ++r) rhs[n + r] = rhs_b[static_cast<std::size_t>(r)];
  Vector sol = lu.solve(rhs);
  for (int it = 0; it < 5; ++it) sol += lu.solve(rhs - Kex * sol);
  if (!sol.allFinite()) return false;

  Vector xp = sol.head(n);
  Vector yp = Vector::Zero(m);
  for (Eigen::Index r = 0; r < k; ++r) {
    const double v = sol[n + r];
    if (v * side[static_cast<std::size_t>(r)] < -1e-9) return false;
    yp[act[r]] = v;
  }
  const Vector zp = project(s.A * xp, s.l, s.u);
  const Residuals res = residuals(s, xp, zp, yp);
  if (!(res.prim <= std::max(prim_ref, 1e-9)) || !(res.dual <= std::max(dual_ref, 1e-9))) return false;
  x_out = std::move(xp);
  y_out = std::move(yp);
  res_out = res;
  return true;
}

}  // namespace

SolveReport admm_solve(const EpigraphQp& qp, const AdmmSettings& st, const Vector* warm_x,
                       const Vector* warm_y) {
  const Eigen::Index n = qp.n(), m = qp.m();
  if (qp.P.size() != n || qp.l.size() != m || qp.u.size() != m)
    throw DimensionError("malformed QP");
  const Scaled s = equilibrate(qp, st.scaling_iters);

  Vector x = Vector::Zero(n), y = Vector::Zero(m);
  if (warm_x && warm_x->size() == n) x = warm_x->cwiseQuotient(s.D);
  if (warm_y && warm_y->size() == m) y = warm_y->cwiseQuotient(s.E) * s.cost;
  Vector z = project(s.A * x, s.l, s.u);

  double rho = st.rho;
  Vector rv = rho_vector(s, rho);
  Cholesky chol;
  SparseMatrix K = reduced_kkt(s, rv, st.sigma);
  chol.analyzePattern(K);
  chol.factorize(K);

  SolveReport rep;
  rep.status = SolveStatus::max_iter;
  Residuals res{};
  bool have_res = false;
  int it = 0;
  for (; it < st.max_iter; ++it) {
    if (chol.info() != Eigen::Success) {
      rep.status = SolveStatus::infeasible_numerics;
      break;
    }
    const Vector rhs = st.sigma * x - s.q + s.At * (rv.cwiseProduct(z) - y);
    const Vector xt = chol.solve(rhs);
    const Vector zt = s.A * xt;
    x = st.alpha * xt + (1.0 - st.alpha) * x;
    const Vector zrel = st.alpha * zt + (1.0 - st.alpha) * z;
    const Vector znew = project(zrel + y.cwiseQuotient(rv), s.l, s.u);
    y += rv.cwiseProduct(zrel - znew);
    z = znew;

    const bool check = (it + 1) % st.check_interval == 0 || it + 1 == st.max_iter;
    const bool adapt = st.adaptive_rho && (it + 1) % st.adaptive_interval == 0;
    if (!check && !adapt) continue;
    if (!x.allFinite() || !y.allFinite()) {
      rep.status = SolveStatus::infeasible_numerics;
      break;
    }
    res = residuals(s, x, z, y);
    have_res = true;
    if (check && res.prim <= st.eps_abs + st.eps_rel * res.prim_scale &&
        res.dual <= st.eps_abs + st.eps_rel * res.dual_scale) {
      rep.status = SolveStatus::optimal;
      ++it;
      break;
    }
    if (adapt) {
      // Balance primal and dual residuals, both relative to their scales.
      const double pr = res.prim / std::max(res.prim_scale, 1e-12);
      const double du = res.dual / std::max(res.dual_scale, 1e-12);
      const double ratio = std::sqrt(pr / std::max(du, 1e-12));
      const double next = std::clamp(rho * ratio, 1e-6, 1e6);
      if (next > 5.0 * rho || next < 0.2 * rho) {
        rho = next;
        rv = rho_vector(s, rho);
        K = reduced_kkt(s, rv, st.sigma);
        chol.factorize(K);
      }
    }
  }
  rep.iterations = it;
  if (!have_res || rep.status == SolveStatus::max_iter) res = residuals(s, x, z, y);

  if (rep.status != SolveStatus::infeasible_numerics && st.polish) {
    Vector xp, yp;
    Residuals rp{};
    if (polish(s, z, y, res.prim, res.dual, xp, yp, rp)) {
      x = std::move(xp);
      y = std::move(yp);
      res = rp;
      rep.polished = true;
      if (res.prim <= st.eps_abs + st.eps_rel * res.prim_scale &&
          res.dual <= st.eps_abs + st.eps_rel * res.dual_scale)
        rep.status = SolveStatus::optimal;
    }
  }

  rep.x = x.cwiseProduct(s.D);
  rep.y = y.cwiseProduct(s.E) / s.cost;
  rep.prim_res = res.prim;
  rep.dual_res = res.dual;
  rep.objective = qp.objective(rep.x);
  if (!rep.x.allFinite()) rep.status = SolveStatus::infeasible_numerics;
  return rep;
}

double surrogate_average(const std::vector<ConvexSurrogate>& surrogates, const Vector& theta,
                         std::span<const double> weights) {
  const auto w = uniform_weights(surrogates.size(), weights);
  double v = 0.0;
  for (std::size_t i = 0; i < surrogates.size(); ++i) v += w[i] * surrogates[i].value(theta);
  return v;
}

SolveReport subgradient_prox(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                             double eta, double mu, double tol, int max_iter,
                             std::span<const double> weights) {
  const auto w = uniform_weights(surrogates.size(), weights);
  const Vector& ref = theta_ref.flat();
  auto objective = [&](const Vector& th) {
    return surrogate_average(surrogates, th, w) + 0.5 * eta * (th - ref).squaredNorm();
  };
  Vector theta = ref;
  Vector best = theta, avg = Vector::Zero(ref.size());
  double best_val = objective(theta), avg_w = 0.0;
  SolveReport rep;
  rep.status = SolveStatus::max_iter;
  int k = 0;
  for (; k < max_iter; ++k) {
    Vector g = eta * (theta - ref);
    for (std::size_t i = 0; i < surrogates.size(); ++i) g += w[i] * surrogates[i].subgradient(theta);
    // Drop components pushing out of the box, then bound the gap by strong convexity.
    Vector gp = g;
    for (Eigen::Index j = 0; j < gp.size(); ++j)
      if ((theta[j] >= mu && gp[j] < 0.0) || (theta[j] <= -mu && gp[j] > 0.0)) gp[j] = 0.0;
    const double gap = eta > 0.0 ? gp.squaredNorm() / (2.0 * eta) : kInf;
    if (gap <= tol || gp.squaredNorm() == 0.0) {
      rep.status = SolveStatus::optimal;
      break;
    }
    const double step =
        eta > 0.0 ? 2.0 / (eta * (k + 2.0)) : mu / (std::sqrt(k + 1.0) * std::sqrt(g.squaredNorm()));
    theta = (theta - step * g).cwiseMax(-mu).cwiseMin(mu);
    avg += (k + 1.0) * theta;
    avg_w += k + 1.0;
    const double v = objective(theta);
    if (v < best_val) {
      best_val = v;
      best = theta;
    }
  }
  if (avg_w > 0.0) {
    const Vector a = avg / avg_w;
    const double v = objective(a);
    if (v < best_val) {
      best_val = v;
      best = a;
    }
  }
  rep.iterations = k;
  rep.x = best;
  rep.objective = best_val;
  return rep;
}

ProxResult solve_prox(const std::vector<ConvexSurrogate>& surrogates, const Theta& theta_ref,
                      const ProxOptions& opts, std::span<const double> weights) {
  if (!(opts.tol > 0.0)) throw ConfigError("subproblem tolerance must be > 0");
  const auto w = uniform_weights(surrogates.size(), weights);
  const Vector& ref = theta_ref.flat();
  const Eigen::Index q = ref.size();
  const bool exportable = std::all_of(surrogates.begin(), surrogates.end(),
                                      [](const ConvexSurrogate& s) { return s.has_epigraph(); });
  ProxResult out{theta_ref, 0.0, 0.0, {}, exportable};
  out.value_at_ref = surrogate_average(surrogates, ref, w);

  Vector theta;
  if (exportable) {
    const EpigraphQp qp = build_epigraph_qp(surrogates, theta_ref, opts.eta, opts.mu, w);
    AdmmSettings st = opts.admm;
    st.eps_abs = std::min(st.eps_abs, opts.tol);
    st.eps_rel = std::min(st.eps_rel, opts.tol);
    Vector warm;
    if (opts.warm_theta) {
      warm.resize(qp.n());
      warm.head(q) = *opts.warm_theta;
      Eigen::Index off = q;
      for (const auto& s : surrogates) {
        const auto hv = s.hinge_values(*opts.warm_theta);
        for (double v : hv) warm[off++] = v;
      }
    }
    out.report = admm_solve(qp, st, opts.warm_theta ? &warm : nullptr);
    theta = out.report.x.head(q);
  } else {
    const int cap = static_cast<int>(std::min<long long>(
        10LL * q * static_cast<long long>(std::max<std::size_t>(surrogates.size(), 1)), 1000000));
    out.report = subgradient_prox(surrogates, theta_ref, opts.eta, opts.mu, opts.tol, cap, w);
    theta = out.report.x;
  }
  if (!theta.allFinite()) theta = ref;
  theta = theta.cwiseMax(-opts.mu).cwiseMin(opts.mu);
  out.value = surrogate_average(surrogates, theta, w) + 0.5 * opts.eta * (theta - ref).squaredNorm();
  if (out.value <= out.value_at_ref) {
    out.theta_half = Theta(theta_ref.cfg(), theta);
  } else {
    out.value = out.value_at_ref;
  }
  return out;
}

}  // namespace padr
