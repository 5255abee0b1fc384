#include <cstdlib>
#include <mutex>

#include "padr/bench.hpp"
#include "support.hpp"

using namespace padr;

namespace {

SmmConfig quick(int T, double eta, double eps) {
  SmmConfig c;
  c.T = T;
  c.eta = eta;
  c.eps = EpsSchedule::constant(eps);
  c.rounds = 1;
  return c;
}

double empirical_quantile(const Dataset& d, double tau) {
  std::vector<double> y(d.outcomes().col(0).begin(), d.outcomes().col(0).end());
  std::sort(y.begin(), y.end());
  return y[static_cast<std::size_t>(std::ceil(tau * static_cast<double>(y.size()))) - 1];
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Theta init_at(const HypothesisConfig& hyp, std::uint64_t seed) {
  Rng r(seed, Stream::init);
  return random_init(hyp, r);
}

Dataset basic(std::uint64_t seed, Eigen::Index n) {
  return bench::gen_dataset(bench::DemandModel{}, n, 2, Rng(seed, Stream::data));
}

}  // namespace

TEST_CASE("config: validation and schedule") {
  SmmConfig c;
  CHECK_NOTHROW(c.validate());
  c.T = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SmmConfig{};
  c.beta2 = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SmmConfig{};
  c.eps = EpsSchedule::shrinking(1.0, 2.0, 3);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.eps = EpsSchedule::shrinking(3.0, 0.0, 11);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.eps = EpsSchedule::shrinking(3.0, 0.0, 3);
  CHECK_NOTHROW(c.validate());
  CHECK(c.eps.at(2) == 3.0);
  CHECK(c.eps.at(3) == 0.0);
  c.beta1 = 2.5;
  c.beta2 = 10.0;
  CHECK(c.batch_size(0) == 10);
  CHECK(c.batch_size(3) == 18);  // 17.5 rounds away from zero
  c.delta0 = 1e-3;
  CHECK(c.delta(4) == doctest::Approx(2e-4));
  c = SmmConfig{};
  c.rounds = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("run_smm: intercept-only rule learns the newsvendor quantile") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng r(seed, Stream::data);
    Matrix y(200, 1);
    for (Eigen::Index s = 0; s < 200; ++s) y(s, 0) = 10.0 + r.normal();
    const Dataset data(Matrix(200, 0), y);
    const HypothesisConfig hyp{1, 1, 0, 50.0, 0};
    SmmConfig c = quick(10, 0.5, 0.0);
    c.seed = seed;
    c.rounds = 3;
    const auto fit = multi_start(data, hyp, unconstrained(newsvendor(8, 2)), c);
    CHECK(std::abs(fit.best.theta.flat()[0] - empirical_quantile(data, 0.8)) <= 0.15);
  }
}

TEST_CASE("run_smm: epsilon zero accepts every iteration and descends on the batch") {
  const Dataset data = basic(1, 300);
  const HypothesisConfig hyp{1, 3, 2, 50.0, 2};
  for (const CostSpec& spec : {newsvendor(8, 2), squared_loss(1), newsvendor_capacity(5, 5)}) {
    SmmConfig c = quick(8, 0.1, 0.0);
    c.seed = 4;
    const auto res = run_smm(data, unconstrained(spec), init_at(hyp, 4), c);
    REQUIRE(res.trace.iters.size() == 8);
    for (const auto& it : res.trace.iters) {
      CHECK(it.accepted);
      CHECK(it.surrogate_value <= it.f_batch + it.delta);
      CHECK(it.batch == c.batch_size(it.nu));
    }
  }
}

TEST_CASE("run_smm: identical seeds give identical traces") {
  const Dataset data = basic(2, 200);
  const HypothesisConfig hyp{1, 2, 2, 50.0, 2};
  SmmConfig c = quick(6, 0.2, 5.0);
  c.seed = 11;
  const Theta t0 = init_at(hyp, 3);
  const auto a = run_smm(data, unconstrained(newsvendor(8, 2)), t0, c);
  const auto b = run_smm(data, unconstrained(newsvendor(8, 2)), t0, c);
  CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
  CHECK(a.theta.flat() == b.theta.flat());
  c.seed = 12;
  const auto d = run_smm(data, unconstrained(newsvendor(8, 2)), t0, c);
  CHECK(trace_to_csv(a.trace) != trace_to_csv(d.trace));
}

TEST_CASE("run_smm: box, rejection and schedule invariants") {
  const Dataset data = basic(3, 300);
  const HypothesisConfig hyp{1, 3, 0, 3.0, 2};
  SmmConfig c = quick(12, 0.05, 0.0);
  c.eps = EpsSchedule::shrinking(3000.0, 0.0, 4);
  c.seed = 5;
  c.output = OutputRule::uniform_iterate;
  const auto res = run_smm(data, unconstrained(newsvendor(8, 2)), init_at(hyp, 5), c);
  const auto& tr = res.trace;
  REQUIRE(tr.full_objective.size() == 13);
  for (const auto& it : tr.iters) {
    CHECK(it.eps == (it.nu < 4 ? 3000.0 : 0.0));
    const double before = tr.full_objective[static_cast<std::size_t>(it.nu)];
    const double after = tr.full_objective[static_cast<std::size_t>(it.nu) + 1];
    if (!it.accepted) CHECK(after == before);
  }
  CHECK(res.theta.in_box());
  CHECK(tr.output_index >= 0);
  CHECK(tr.output_index < 12);
  CHECK(tr.final_objective == tr.full_objective[static_cast<std::size_t>(tr.output_index)]);
}

TEST_CASE("run_smm: best_erm returns the lowest full objective") {
  const Dataset data = basic(4, 200);
  const HypothesisConfig hyp{1, 3, 0, 50.0, 2};
  SmmConfig c = quick(8, 0.1, 0.0);
  const auto res = run_smm(data, unconstrained(newsvendor(8, 2)), init_at(hyp, 1), c);
  const auto& f = res.trace.full_objective;
  CHECK(res.trace.final_objective == *std::min_element(f.begin(), f.end()));
  CHECK(erm_cost(res.theta, data, newsvendor(8, 2)) == doctest::Approx(res.trace.final_objective));
}

TEST_CASE("run_smm: median final cost does not grow with T") {
  std::vector<double> med;
  const HypothesisConfig hyp{1, 3, 0, 50.0, 2};
  const Dataset data = basic(0, 1000);
  for (int T : {2, 5, 10}) {
    std::vector<double> finals;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SmmConfig c = quick(T, 0.01, 0.0);
      c.seed = seed;
      finals.push_back(run_smm(data, unconstrained(newsvendor(8, 2)), init_at(hyp, seed), c)
                           .trace.final_objective);
    }
    med.push_back(median(finals));
  }
  CAPTURE(med[0]);
  CAPTURE(med[1]);
  CAPTURE(med[2]);
  CHECK(med[1] <= med[0]);
  CHECK(med[2] <= med[1]);
}

TEST_CASE("multi_start: one round equals run_smm, rounds are independent, best beats median") {
  const Dataset data = basic(5, 200);
  const HypothesisConfig hyp{1, 2, 1, 50.0, 2};
  const PenalizedProblem prob = unconstrained(newsvendor(8, 2));
  SmmConfig c = quick(5, 0.1, 1.0);
  c.seed = 9;
  const auto one = multi_start(data, hyp, prob, c);
  SmmConfig rc = c;
  rc.seed = round_seed(9, 0);
  const auto direct = run_smm(data, prob, init_at(hyp, rc.seed), rc);
  CHECK(trace_to_csv(one.best.trace) == trace_to_csv(direct.trace));

  c.rounds = 10;
  const auto ten = multi_start(data, hyp, prob, c);
  c.rounds = 4;
  const auto four = multi_start(data, hyp, prob, c);
  std::vector<double> objs;
  for (int r = 0; r < 10; ++r) {
    objs.push_back(ten.rounds[static_cast<std::size_t>(r)].objective);
    if (r < 4) CHECK(four.rounds[static_cast<std::size_t>(r)].objective == objs.back());
  }
  CHECK(ten.best.trace.final_objective <= median(objs));
  CHECK(ten.best.trace.final_objective == *std::min_element(objs.begin(), objs.end()));
  CHECK(round_seed(9, 0) != round_seed(9, 1));
}

TEST_CASE("multi_start: thread count does not change results") {
  const Dataset data = basic(6, 150);
  const HypothesisConfig hyp{1, 2, 1, 50.0, 2};
  SmmConfig c = quick(4, 0.1, 2.0);
  c.rounds = 4;
  const auto a = multi_start(data, hyp, unconstrained(newsvendor(8, 2)), c);
  c.threads = 3;
  const auto b = multi_start(data, hyp, unconstrained(newsvendor(8, 2)), c);
  CHECK(a.best_round == b.best_round);
  CHECK(a.best.theta.flat() == b.best.theta.flat());
  CHECK(summary_to_json(a, SmmConfig{}) == summary_to_json(b, SmmConfig{}));
}

TEST_CASE("sweep: budget one, degenerate grid and argmin selection") {
  const Dataset data = basic(7, 200);
  const HypothesisConfig hyp{1, 2, 0, 50.0, 2};
  const PenalizedProblem prob = unconstrained(newsvendor(8, 2));
  SmmConfig base = quick(4, 0.1, 0.0);
  base.rounds = 2;
  SweepOptions opts;
  opts.candidate_rounds = 1;

  SweepSpace fixed;
  fixed.gamma = fixed.lambda = {0.0, 0.0};
  fixed.eps0 = fixed.eps1 = {5.0, 5.0};
  fixed.T0 = {2.0, 2.0};
  fixed.beta1 = {10.0, 10.0};
  fixed.beta2 = {20.0, 20.0};
  fixed.eta = {0.3, 0.3};
  opts.budget = 3;
  const SweepResult deg = sweep(data, hyp, prob, base, fixed, opts);
  CHECK(deg.best_cfg.eta == 0.3);
  CHECK(deg.best_cfg.beta1 == 10.0);
  CHECK(deg.best_cfg.eps.eps0 == 5.0);
  CHECK(deg.n_validation == 40);
  CHECK(deg.n_train == 160);

  opts.budget = 1;
  const SweepResult single = sweep(data, hyp, prob, base, SweepSpace{}, opts);
  REQUIRE(single.table.size() == 1);
  CHECK(single.best_candidate == 0);
  CHECK(single.best_cfg.eta == single.table[0].cfg.eta);
  CHECK(single.best_cfg.rounds == base.rounds);
  CHECK(single.final_fit.rounds.size() == 2);

  opts.budget = 6;
  const SweepResult many = sweep(data, hyp, prob, base, SweepSpace{}, opts);
  REQUIRE(many.table.size() == 6);
  for (const auto& row : many.table)
    if (row.ok) CHECK(many.table[static_cast<std::size_t>(many.best_candidate)].val_cost <= row.val_cost);
  for (const auto& row : many.table) {
    CHECK(row.cfg.eta >= 0.0);
    CHECK(row.cfg.eta <= 1.0);
    CHECK(row.cfg.beta1 >= 5.0);
    CHECK(row.cfg.beta1 <= 50.0);
    CHECK(row.cfg.eps.T0 >= 1);
    CHECK(row.cfg.eps.T0 <= 6);
    CHECK(row.cfg.eps.eps1 <= row.cfg.eps.eps0);
  }
  CHECK_FALSE(sweep_table_csv(many).empty());

  opts.budget = 0;
  CHECK_THROWS_AS(sweep(data, hyp, prob, base, SweepSpace{}, opts), ConfigError);
}

TEST_CASE("parallel_for covers every index once; thread resolution") {
  for (int threads : {1, 2, 5}) {
    std::vector<int> hits(17, 0);
    std::mutex m;
    parallel_for(17, threads, [&](int i) {
      std::lock_guard lock(m);
      ++hits[static_cast<std::size_t>(i)];
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
  CHECK(resolve_threads(3) == 3);
  ::setenv("PADR_THREADS", "2", 1);
  CHECK(resolve_threads(0) == 2);
  ::unsetenv("PADR_THREADS");
  CHECK(resolve_threads(0) == 1);
}

TEST_CASE("trace csv: one row per iteration") {
  const Dataset data = basic(8, 100);
  const auto res = run_smm(data, unconstrained(newsvendor(8, 2)),
                           init_at(HypothesisConfig{1, 2, 0, 50.0, 2}, 1), quick(5, 0.1, 0.0));
  const std::string csv = trace_to_csv(res.trace);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
