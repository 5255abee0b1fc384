#include <json.hpp>

#include "support.hpp"

using namespace padr;

namespace {

Theta constant_rule(double v) {
  Vector t(1);
  t << v;
  return Theta(HypothesisConfig{1, 1, 0, 50.0, 0}, t);
}

Dataset normal_outcomes(std::uint64_t seed, Eigen::Index n) {
  Rng r(seed, Stream::data);
  Matrix y(n, 1);
  for (Eigen::Index s = 0; s < n; ++s) y(s, 0) = 10.0 + r.normal();
  return Dataset(Matrix(n, 0), y);
}

/// argmin_z (1/n) sum 8 (y - z)_+ + 2 (z - y)_+ : the ceil(0.8 n)-th order statistic.
double quantile_minimizer(const Dataset& d) {
  std::vector<double> y(d.outcomes().col(0).begin(), d.outcomes().col(0).end());
  std::sort(y.begin(), y.end());
  return y[static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(y.size()))) - 1];
}

}  // namespace

TEST_CASE("check_surrogation: affine inner functions are exact") {
  Rng r(1, Stream::data);
  const Dataset data = test::random_data(r, 50, 2);
  const auto rep = check_surrogation(data, HypothesisConfig{1, 1, 1, 50.0, 2}, unconstrained(newsvendor(8, 2)),
                                     0.5, 200, Rng(1, Stream::sweep));
  CHECK(rep.probes == 200);
  CHECK(rep.p1_gap <= 1e-12);
  CHECK(rep.p2_violation <= 1e-12);
  CHECK(rep.p3_violation <= 1e-12);
}

TEST_CASE("check_surrogation: PADR(3,3) newsvendor") {
  Rng r(2, Stream::data);
  const Dataset data = test::random_data(r, 100, 2);
  const auto rep = check_surrogation(data, HypothesisConfig{1, 3, 3, 50.0, 2}, unconstrained(newsvendor(8, 2)),
                                     5.0, 1000, Rng(2, Stream::sweep));
  CHECK(rep.p1_gap <= 1e-9);
  CHECK(rep.p2_violation <= 1e-9);
  CHECK(rep.p3_violation <= 1e-9);
  CHECK(rep.p1_gap_eps >= 0.0);
  CHECK_THROWS(check_surrogation(data, HypothesisConfig{1, 3, 3, 50.0, 2}, unconstrained(newsvendor(8, 2)), 5.0, 0,
                                 Rng(2, Stream::sweep)));
}

TEST_CASE("eps_all_threshold: formula, homogeneity and full active sets") {
  CHECK(eps_all_threshold(HypothesisConfig{1, 1, 0, 50.0, 0}, test::single(3.0)) == doctest::Approx(100.0));
  Rng r(3, Stream::data);
  const Dataset data = test::random_data(r, 20, 2);
  const HypothesisConfig a{1, 3, 2, 5.0, 2}, b{1, 3, 2, 10.0, 2};
  CHECK(eps_all_threshold(b, data) == doctest::Approx(2.0 * eps_all_threshold(a, data)));
  const double e0 = eps_all_threshold(a, data);
  for (int k = 0; k < 10; ++k) {
    const auto sets = rule::active_sets(random_init(a, r), data, e0);
    for (const auto& e : sets.entries) {
      CHECK(e.g.size() == 3);
      CHECK(e.h.size() == 2);
    }
  }
}

TEST_CASE("residual_exact: vanishes at the quantile minimizer") {
  const Dataset data = normal_outcomes(4, 200);
  const auto rep = residual_exact(data, unconstrained(newsvendor(8, 2)), constant_rule(quantile_minimizer(data)),
                                  0.0, 0.6);
  CHECK(rep.exact);
  CHECK(rep.mapping_count == 1);
  CHECK(rep.residual <= 1e-4);
}

TEST_CASE("residual_exact: positive away from stationarity") {
  const Dataset data = normal_outcomes(5, 50);
  const auto rep = residual_exact(data, unconstrained(newsvendor(8, 2)), constant_rule(0.0), 0.0, 0.6);
  CHECK(rep.residual > 1.0);
}

TEST_CASE("residual_exact: mapping count is the product of the active sets") {
  const HypothesisConfig cfg{1, 2, 0, 50.0, 0};
  Vector t(2);
  t << 3.0, 3.0;
  const Dataset data(Matrix(2, 0), (Matrix(2, 1) << 1.0, 5.0).finished());
  const auto rep = residual_exact(data, unconstrained(newsvendor(8, 2)), Theta(cfg, t), 0.0, 0.6);
  CHECK(rep.mapping_count == 4);
  CHECK(rep.step_norms.size() == 4);
  ResidualOptions small;
  small.cap = 3;
  CHECK_THROWS_AS(residual_exact(data, unconstrained(newsvendor(8, 2)), Theta(cfg, t), 0.0, 0.6, small), Error);
}

TEST_CASE("residual_sampled: agrees with the exact average") {
  const Dataset single_map = normal_outcomes(6, 30);
  const PenalizedProblem prob = unconstrained(newsvendor(8, 2));
  const auto ex1 = residual_exact(single_map, prob, constant_rule(9.0), 0.0, 0.6);
  const auto sa1 = residual_sampled(single_map, prob, constant_rule(9.0), 0.0, 0.6, 3, Rng(1, Stream::sweep));
  CHECK(sa1.residual == doctest::Approx(ex1.residual).epsilon(1e-12));

  Rng r(7, Stream::data);
  const HypothesisConfig cfg{1, 2, 0, 50.0, 1};
  const Dataset data = test::random_data(r, 3, 1, 1, 0.0, 5.0);
  Vector t(4);
  t << 1.0, 2.0, -1.0, 2.5;
  const Theta ref(cfg, t);
  const auto ex = residual_exact(data, prob, ref, 10.0, 0.6);
  REQUIRE(ex.mapping_count == 8);
  const auto sa = residual_sampled(data, prob, ref, 10.0, 0.6, 1000, Rng(2, Stream::sweep));
  CHECK(sa.std_error >= 0.0);
  CHECK(std::abs(sa.residual - ex.residual) <= 3.0 * sa.std_error + 1e-9);

  const auto d1 = residual_sampled(data, prob, ref, 10.0, 0.6, 1, Rng(3, Stream::sweep));
  const auto d2 = residual_sampled(data, prob, ref, 10.0, 0.6, 1, Rng(3, Stream::sweep));
  CHECK(d1.residual == d2.residual);
}

TEST_CASE("interpolate_pa: absolute value in one dimension") {
  const InterpolationTarget abs_t{[](const Vector& x) { return std::abs(x[0]); }, 1, 1.0, 1.0};
  const Interpolant ip = interpolate_pa(abs_t, 0.25, 1.0);
  const auto& r = ip.report;
  CHECK(r.grid_error <= 1e-10);
  CHECK(r.sup_error <= r.error_bound);
  CHECK(r.error_bound == doctest::Approx(2.0 * 4.0 / static_cast<double>(r.K)));
  CHECK(r.lipschitz <= r.lipschitz_bound + 1e-6);
  CHECK(r.spacing <= 2.0 * 0.25 + 1e-12);
  CHECK(ip.theta.cfg().d == 1);
  CHECK(ip.theta.cfg().K1 == static_cast<int>(r.K));
  // Independent check of interpolation through the rule evaluator.
  for (int i = 0; i < r.per_axis; ++i) {
    Vector x(1);
    x << -1.0 + r.spacing * (i + 0.5);
    CHECK(std::abs(rule::eval(ip.theta, x)[0] - std::abs(x[0])) <= 1e-10);
  }
}

TEST_CASE("interpolate_pa: bounds hold in two dimensions and shrink with eps") {
  const InterpolationTarget ma{[](const Vector& x) {
                                 return std::max({5.0 * x[0] - 10.0 * x[1], -10.0 * x[0] + 5.0 * x[1], 15.0 * x[0]});
                               },
                               2, 15.0, 15.0};
  double last = std::numeric_limits<double>::infinity();
  for (double eps : {0.5, 0.25, 0.1}) {
    const auto r = interpolate_pa(ma, eps, 1.0).report;
    CHECK(r.grid_error <= 1e-9);
    CHECK(r.sup_error <= r.error_bound);
    CHECK(r.lipschitz <= (std::sqrt(2.0) + 2.0) * 15.0 + 1e-6);
    CHECK(r.spacing <= 2.0 * eps / std::sqrt(2.0) + 1e-12);
    CHECK(r.error_bound <= last);
    last = r.error_bound;
  }
}

TEST_CASE("directional probe: no descent at a minimizer, descent elsewhere") {
  const Dataset data = normal_outcomes(8, 200);
  const PenalizedProblem prob = unconstrained(newsvendor(8, 2));
  const auto at = directional_probe(data, prob, constant_rule(quantile_minimizer(data)), 8, Rng(1, Stream::sweep));
  CHECK(at.min_slope >= -1e-6);
  CHECK(at.directions >= 2);
  const auto off = directional_probe(data, prob, constant_rule(0.0), 8, Rng(1, Stream::sweep));
  CHECK(off.min_slope < -1.0);
}

TEST_CASE("reports serialize to JSON") {
  const auto j = nlohmann::json::parse(to_json(ResidualReport{}));
  CHECK(j.contains("residual"));
  CHECK(nlohmann::json::parse(to_json(SurrogationReport{})).contains("p2_violation"));
  CHECK(nlohmann::json::parse(to_json(DirectionalProbe{})).contains("min_slope"));
}
