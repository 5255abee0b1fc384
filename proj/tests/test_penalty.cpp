#include "padr/bench.hpp"
#include "support.hpp"

using namespace padr;

namespace {

ConstraintSpec sum_cap(double gamma, double lambda) {
  ConstraintSpec c;
  c.psi.push_back(capacity_sum(2, 60.0));
  c.gamma = gamma;
  c.lambda = lambda;
  return c;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("penalty: hand-evaluated value") {
  const PenalizedProblem prob = build_penalized(multi_newsvendor({{8, 2}, {2, 8}}), sum_cap(1.0, 10.0));
  const Vector z = vec2(40, 30), y = vec2(40, 30);
  CHECK(prob.cons.lambda * prob.penalty(z, y) == doctest::Approx(110.0));
  CHECK(prob.sample_value(z, y) - cost_eval(prob.cost, z, y) == doctest::Approx(110.0));
  CHECK(prob.penalty(vec2(20, 30), y) == 0.0);
  CHECK(prob.penalty(vec2(29.5, 30), y) == doctest::Approx(0.5));
}

TEST_CASE("penalty: lambda zero is the plain cost and V >= F") {
  Rng r(1, Stream::data);
  const CostSpec cost = multi_newsvendor({{8, 2}, {2, 8}});
  const PenalizedProblem zero = build_penalized(cost, sum_cap(3.0, 0.0));
  const PenalizedProblem pen = build_penalized(cost, sum_cap(3.0, 25.0));
  const HypothesisConfig cfg{2, 2, 1, 50.0, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset data = test::random_data(r, 20, 2, 2, 0.0, 60.0);
    const Theta t = test::random_theta(cfg, r, 30.0);
    const double f = erm_cost(t, data, cost);
    CHECK(penalized_objective(t, data, zero) == doctest::Approx(f));
    const double v = penalized_objective(t, data, pen);
    const double g = constraint_violation(t, data, pen.cons);
    CHECK(g >= 0.0);
    CHECK(v == doctest::Approx(f + 25.0 * g));
    CHECK((v > f) == (g > 0.0));
  }
}

TEST_CASE("penalty: validation") {
  ConstraintSpec c = sum_cap(-1.0, 1.0);
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  c = sum_cap(0.0, -1.0);
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  c = sum_cap(0.0, 1.0);
  CHECK_THROWS(c.validate(1));
  CHECK_NOTHROW(c.validate(2));
  CHECK(c.convex());
  ConstraintSpec cc;
  cc.psi.push_back(capacity_concave_sum(2, 50.0));
  CHECK_FALSE(cc.convex());
}

TEST_CASE("feasibility rate: all, none and a constructed half split") {
  const HypothesisConfig cfg{2, 1, 0, 50.0, 1};
  Vector v(4);
  v << 40.0, 0.0, 40.0, 0.0;  // z = (40 x, 40 x)
  const Theta t(cfg, v);
  Matrix X(4, 1);
  X << 0.0, 1.0, 0.0, 1.0;
  const Dataset data(X, Matrix::Zero(4, 2));
  CHECK(feasibility_rate(t, data, sum_cap(0.0, 0.0), false) == doctest::Approx(0.5));

  Vector small = Vector::Zero(4);
  small << 1.0, 0.0, 1.0, 0.0;
  CHECK(feasibility_rate(Theta(cfg, small), data, sum_cap(0.0, 0.0), false) == 1.0);
  Vector big(4);
  big << 0.0, 40.0, 0.0, 40.0;
  CHECK(feasibility_rate(Theta(cfg, big), data, sum_cap(0.0, 0.0), false) == 0.0);

  // z = (1, 1) sits 58 below capacity: feasible without margin, not with gamma = 59.
  CHECK(feasible(vec2(1, 1), sum_cap(59.0, 0.0), false));
  CHECK_FALSE(feasible(vec2(1, 1), sum_cap(59.0, 0.0), true));
}

TEST_CASE("projection: halfspace formula, fixed points and idempotence") {
  const ConstraintSpec c = sum_cap(0.0, 0.0);
  const Vector p = project_convex(vec2(40, 30), c);
  CHECK(p[0] == doctest::Approx(35.0).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(25.0).epsilon(1e-6));
  const Vector inside = vec2(10, 20);
  CHECK((project_convex(inside, c) - inside).norm() <= 1e-8);
  CHECK((project_convex(p, c) - p).norm() <= 1e-6);

  Rng r(2, Stream::data);
  ConstraintSpec nn = c;
  nn.nonnegative = true;
  for (int i = 0; i < 20; ++i) {
    const Vector z = vec2(r.uniform(-50, 100), r.uniform(-50, 100));
    const Vector q = project_convex(z, nn);
    CHECK(q.minCoeff() >= -1e-6);
    CHECK(q.sum() <= 60.0 + 1e-6);
    // Optimality: no feasible grid point is closer than the projection.
    double best = 1e300;
    for (int a = 0; a <= 60; ++a)
      for (int b = 0; a + b <= 60; ++b) best = std::min(best, (z - vec2(a, b)).norm());
    CHECK((z - q).norm() <= best + 1e-6);
  }
  ConstraintSpec empty;
  empty.psi.push_back(capacity_sum(2, -10.0));
  empty.nonnegative = true;
  CHECK_THROWS(project_convex(vec2(1, 1), empty));
}

TEST_CASE("penalized surrogate: majorization, touching and convexity") {
  Rng r(3, Stream::data);
  const CostSpec cost = multi_newsvendor({{8, 2}, {2, 8}});
  for (int which = 0; which < 2; ++which) {
    ConstraintSpec cons = which == 0 ? sum_cap(2.0, 50.0) : ConstraintSpec{};
    if (which == 1) {
      cons.psi.push_back(capacity_concave_sum(2, 50.0));
      cons.gamma = 1.0;
      cons.lambda = 30.0;
    }
    const PenalizedProblem prob = build_penalized(cost, cons);
    const HypothesisConfig cfg{2, 2, 2, 50.0, 2};
    int fails = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const Dataset data = test::random_data(r, 1, 2, 2, 0.0, 60.0);
      const Theta ref = test::random_theta(cfg, r, 20.0);
      const double eps = trial % 2 ? 0.0 : r.uniform(0.0, 20.0);
      const Vector y = data.outcomes().row(0).transpose();
      const auto v = [&](const Vector& t) {
        return prob.sample_value(rule::eval(Theta(cfg, t), data.features().row(0).transpose()), y);
      };
      if (eps == 0.0) {
        const auto sur0 = test::surrogates_at(prob, data, ref, 0.0, r.derive(1));
        fails += std::abs(sur0[0].value(ref.flat()) - v(ref.flat())) > 1e-10 * (1 + std::abs(v(ref.flat())));
      }
      const auto sur = test::surrogates_at(prob, data, ref, eps, r.derive(static_cast<std::uint64_t>(trial)));
      const Vector a = test::random_theta(cfg, r, 20.0).flat(), b = test::random_theta(cfg, r, 20.0).flat();
      const double sa = sur[0].value(a), sb = sur[0].value(b);
      fails += sa - v(a) < -1e-9 * (1 + std::abs(sa));
      fails += sur[0].value(0.5 * (a + b)) - 0.5 * (sa + sb) > 1e-9 * (1 + std::abs(sa) + std::abs(sb));
    }
    CHECK(fails == 0);
  }
}

TEST_CASE("penalty: larger lambda does not lower trained feasibility") {
  bench::DemandModel model{bench::DemandKind::two_product_linear, 1.0, 1.0};
  bench::CostSetup setup;
  setup.kind = bench::CostKind::capacity_linear;
  setup.costs = {{8, 2}, {2, 8}};
  setup.C0 = 60.0;
  const HypothesisConfig hyp{2, 1, 0, 50.0, 2};
  SmmConfig smm;
  smm.T = 15;
  smm.rounds = 1;
  smm.eta = 0.01;
  smm.eps = EpsSchedule::constant(0.0);
  const std::vector<double> lambdas{0.0, 10.0, 100.0};
  std::vector<double> mean(lambdas.size(), 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Rng root(seed, Stream::data);
    const Dataset train = bench::gen_dataset(model, 200, 2, root.derive(0));
    const Dataset test = bench::gen_dataset(model, 500, 2, root.derive(1));
    smm.seed = seed;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      const PenalizedProblem prob = setup.problem(2.0, lambdas[k]);
      const auto fit = multi_start(train, hyp, prob, smm);
      mean[k] += feasibility_rate(fit.best.theta, test, prob.cons, false) / 5.0;
    }
  }
  CAPTURE(mean[0]);
  CAPTURE(mean[1]);
  CAPTURE(mean[2]);
  CHECK(mean[1] >= mean[0]);
  CHECK(mean[2] >= mean[1]);
  CHECK(mean[2] >= 0.95);
}
