#include "padr/smm.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace padr {

std::string_view output_rule_name(OutputRule r) {
  return r == OutputRule::best_erm ? "best_erm" : "uniform_iterate";
}

OutputRule parse_output_rule(const std::string& s) {
  if (s == "best_erm") return OutputRule::best_erm;
  if (s == "uniform_iterate") return OutputRule::uniform_iterate;
  throw ConfigError("output_rule: unknown value '" + s + "'");
}

void SmmConfig::validate() const {
  if (T < 1) throw ConfigError("T must be >= 1");
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  if (!(beta1 >= 0.0)) throw ConfigError("beta1 must be >= 0");
  if (!(beta2 >= 1.0)) throw ConfigError("beta2 must be >= 1");
  if (!(eps.eps0 >= 0.0) || !(eps.eps1 >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (eps.T0 != 0) {
    if (eps.eps1 > eps.eps0) throw ConfigError("shrinking schedule needs eps1 <= eps0");
    if (eps.T0 < 1 || eps.T0 > T) throw ConfigError("shrinking schedule needs 1 <= T0 <= T");
  }
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (!(delta0 >= 0.0)) throw ConfigError("delta0 must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
}

int SmmConfig::batch_size(int nu) const {
  return std::max(1, static_cast<int>(std::lround(beta1 * nu + beta2)));
}

namespace {

using Clock = std::chrono::steady_clock;

struct Minibatch {
  std::vector<Eigen::Index> ids;  // distinct, ascending
  std::vector<double> weights;    // multiplicity / N
};

Minibatch draw_minibatch(Rng& rng, Eigen::Index n, int size) {
  std::map<Eigen::Index, int> counts;
  for (int i = 0; i < size; ++i) ++counts[static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))];
  Minibatch mb;
  for (const auto& [id, c] : counts) {
    mb.ids.push_back(id);
    mb.weights.push_back(static_cast<double>(c) / size);
  }
  return mb;
}

}  // namespace

SmmResult run_smm(const Dataset& data, const PenalizedProblem& prob, const Theta& theta0,
                  const SmmConfig& cfg) {
  cfg.validate();
  const HypothesisConfig& hyp = theta0.cfg();
  if (data.p() != hyp.p) throw DimensionError("dataset feature count does not match the rule");
  if (prob.cost.d != hyp.d) throw DimensionError("cost dimension does not match the rule");
  if (prob.cost.m != data.m()) throw DimensionError("cost outcome count does not match the dataset");
  if (!theta0.in_box(1e-12)) throw ConfigError("initial point outside the parameter box");

  Rng batch_rng(cfg.seed, Stream::minibatch);
  const Rng index_rng(cfg.seed, Stream::index);
  const double lf = inner_lipschitz(data);

  SmmResult res{theta0.clamped(), {}};
  std::vector<Theta> iterates{res.theta};
  SmmTrace& trace = res.trace;
  trace.full_objective.push_back(penalized_objective(res.theta, data, prob));

  for (int nu = 0; nu < cfg.T; ++nu) {
    const auto start = Clock::now();
    const Theta& cur = iterates.back();
    IterRecord rec;
    rec.nu = nu;
    rec.batch = cfg.batch_size(nu);
    rec.eps = cfg.eps.at(nu);
    rec.delta = cfg.delta(nu);

    const Minibatch mb = draw_minibatch(batch_rng, data.n(), rec.batch);
    const auto sets = rule::active_sets(cur, data, rec.eps, mb.ids);
    const Rng iter_rng = index_rng.derive(static_cast<std::uint64_t>(nu));
    const auto mapping = rule::draw_index_mapping(sets, iter_rng.derive(0));
    const auto inner = rule::build_inner_surrogates(cur, data, mapping, mb.ids);
    const Rng outer_rng = iter_rng.derive(1);
    SurrogateOptions sopts{cfg.eps_outer < 0.0 ? rec.eps : cfg.eps_outer, &outer_rng, lf};

    std::vector<ConvexSurrogate> surr;
    surr.reserve(mb.ids.size());
    rec.f_batch = 0.0;
    for (std::size_t r = 0; r < mb.ids.size(); ++r) {
      surr.push_back(penalized_surrogate(prob, inner, r, cur, data, sopts));
      const Eigen::Index s = mb.ids[r];
      const Vector z = rule::eval(cur, data.features().row(s).transpose());
      rec.f_batch += mb.weights[r] * prob.sample_value(z, data.outcomes().row(s).transpose());
    }

    ProxOptions popts;
    popts.eta = cfg.eta;
    popts.mu = hyp.mu;
    popts.tol = cfg.tol;
    popts.admm = cfg.admm;
    const ProxResult pr = solve_prox(surr, cur, popts, mb.weights);
    rec.surrogate_value = pr.value;
    rec.surrogate_at_ref = pr.value_at_ref;
    rec.solver_iterations = pr.report.iterations;
    rec.solver_status = std::string(pr.used_qp ? status_name(pr.report.status) : "subgradient");
    if (!std::isfinite(pr.value) || !std::isfinite(rec.f_batch)) {
      std::ostringstream msg;
      msg << "subproblem failed at iteration " << nu << " (" << rec.solver_status << ")";
      throw SmmAborted(msg.str(), trace);
    }

    rec.accepted = pr.value <= rec.f_batch + rec.delta;
    rec.step_norm = (pr.theta_half.flat() - cur.flat()).norm();
    Theta next = rec.accepted ? pr.theta_half : cur;
    if (cfg.timing) rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    trace.iters.push_back(std::move(rec));
    trace.full_objective.push_back(penalized_objective(next, data, prob));
    iterates.push_back(std::move(next));
  }

  if (cfg.output == OutputRule::best_erm) {
    // Ties go to the earliest iterate.
    const auto& f = trace.full_objective;
    trace.output_index = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
  } else {
    Rng out_rng(cfg.seed, Stream::output);
    trace.output_index = static_cast<int>(out_rng.below(static_cast<std::uint64_t>(cfg.T)));
  }
  res.theta = iterates[static_cast<std::size_t>(trace.output_index)];
  trace.final_objective = trace.full_objective[static_cast<std::size_t>(trace.output_index)];
  return res;
}

std::uint64_t round_seed(std::uint64_t seed, int round) {
  if (round == 0) return seed;
  return splitmix64(seed ^ splitmix64(0x5EEDull + static_cast<std::uint64_t>(round)));
}

MultiStartResult multi_start(const Dataset& data, const HypothesisConfig& hyp,
                             const PenalizedProblem& prob, const SmmConfig& cfg) {
  cfg.validate();
  hyp.validate();
  const int R = cfg.rounds;
  std::vector<std::optional<SmmResult>> runs(static_cast<std::size_t>(R));
  std::vector<RoundSummary> rounds(static_cast<std::size_t>(R));

  parallel_for(R, resolve_threads(cfg.threads), [&](int r) {
    auto& summary = rounds[static_cast<std::size_t>(r)];
    summary.round = r;
    summary.seed = round_seed(cfg.seed, r);
    try {
      SmmConfig rc = cfg;
      rc.seed = summary.seed;
      Rng init(rc.seed, Stream::init);
      const Theta theta0 = random_init(hyp, init);
      SmmResult run = run_smm(data, prob, theta0, rc);
      summary.ok = true;
      summary.objective = run.trace.final_objective;
      summary.accepted = static_cast<int>(std::count_if(run.trace.iters.begin(), run.trace.iters.end(),
                                                        [](const IterRecord& it) { return it.accepted; }));
      runs[static_cast<std::size_t>(r)] = std::move(run);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      summary.error = e.what();
    }
  });

  int best = -1;
  for (int r = 0; r < R; ++r) {
    const auto& s = rounds[static_cast<std::size_t>(r)];
    if (s.ok && (best < 0 || s.objective < rounds[static_cast<std::size_t>(best)].objective)) best = r;
  }
  if (best < 0) throw SolverError("every round failed: " + rounds.front().error);
  return MultiStartResult{std::move(*runs[static_cast<std::size_t>(best)]), best, std::move(rounds)};
}

namespace {

double draw_in(Rng& rng, const Range& r) {
  if (!(r.lo <= r.hi)) throw ConfigError("sweep range with lo > hi");
  if (r.lo == r.hi) return r.lo;
  if (r.log && r.hi > 0.0) {
    const double lo = std::max(r.lo, r.hi * 1e-4);
    return std::exp(rng.uniform(std::log(lo), std::log(r.hi)));
  }
  return rng.uniform(r.lo, r.hi);
}

int draw_int(Rng& rng, const Range& r, int cap) {
  const int lo = static_cast<int>(std::ceil(r.lo));
  const int hi = std::min(static_cast<int>(std::floor(r.hi)), cap);
  if (lo > hi) throw ConfigError("sweep range for T0 contains no admissible integer");
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

SweepResult sweep(const Dataset& data, const HypothesisConfig& hyp, const PenalizedProblem& prob,
                  const SmmConfig& base, const SweepSpace& space, const SweepOptions& opts) {
  base.validate();
  if (opts.budget < 1) throw ConfigError("sweep budget must be >= 1");
  if (!(opts.validation_split > 0.0 && opts.validation_split < 1.0))
    throw ConfigError("validation_split must lie in (0, 1)");
  if (opts.candidate_rounds < 1) throw ConfigError("candidate_rounds must be >= 1");

  Rng split_rng(base.seed, Stream::sweep);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.n()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[split_rng.below(i)]);
  const auto n_val = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::lround(opts.validation_split * static_cast<double>(data.n()))), 1,
      data.n() - 1);
  std::vector<Eigen::Index> val_ids(perm.begin(), perm.begin() + n_val);
  std::vector<Eigen::Index> train_ids(perm.begin() + n_val, perm.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(train_ids.begin(), train_ids.end());
  const Dataset train = data.subset(train_ids);
  const Dataset val = data.subset(val_ids);

  const bool constrained = !prob.cons.empty();
  SweepResult out;
  out.n_train = train.n();
  out.n_validation = val.n();
  out.table.resize(static_cast<std::size_t>(opts.budget));
  std::vector<PenalizedProblem> probs(static_cast<std::size_t>(opts.budget), prob);

  const Rng cand_root = Rng(base.seed, Stream::sweep).derive(1);
  for (int b = 0; b < opts.budget; ++b) {
    Rng rng = cand_root.derive(static_cast<std::uint64_t>(b));
    SweepRow& row = out.table[static_cast<std::size_t>(b)];
    row.candidate = b;
    row.cfg = base;
    row.cfg.rounds = opts.candidate_rounds;
    row.cfg.threads = 1;
    const double e0 = draw_in(rng, space.eps0);
    const double e1 = draw_in(rng, Range{space.eps1.lo, std::min(space.eps1.hi, e0), space.eps1.log});
    const int T0 = draw_int(rng, space.T0, base.T);
    row.cfg.eps = EpsSchedule::shrinking(e0, std::min(e1, e0), T0);
    row.cfg.beta1 = draw_in(rng, space.beta1);
    row.cfg.beta2 = draw_in(rng, space.beta2);
    row.cfg.eta = draw_in(rng, space.eta);
    auto& cons = probs[static_cast<std::size_t>(b)].cons;
    if (constrained) {
      cons.gamma = draw_in(rng, space.gamma);
      cons.lambda = draw_in(rng, space.lambda);
    }
    row.gamma = cons.gamma;
    row.lambda = cons.lambda;
  }

  parallel_for(opts.budget, resolve_threads(base.threads), [&](int b) {
    SweepRow& row = out.table[static_cast<std::size_t>(b)];
    const PenalizedProblem& pb = probs[static_cast<std::size_t>(b)];
    try {
      const MultiStartResult fit = multi_start(train, hyp, pb, row.cfg);
      row.val_cost = erm_cost(fit.best.theta, val, pb.cost);
      row.val_feasibility = constrained ? feasibility_rate(fit.best.theta, val, pb.cons, false) : 1.0;
      row.ok = std::isfinite(row.val_cost);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      row.ok = false;
    }
  });

  double need = opts.min_feasibility;
  if (constrained) {
    double top = -1.0;
    for (const auto& r : out.table)
      if (r.ok) top = std::max(top, r.val_feasibility);
    need = std::min(need, top);
  }
  int best = -1;
  for (const auto& r : out.table) {
    if (!r.ok || (constrained && r.val_feasibility < need)) continue;
    if (best < 0 || r.val_cost < out.table[static_cast<std::size_t>(best)].val_cost) best = r.candidate;
  }
  if (best < 0) throw SolverError("no sweep candidate completed");

  out.best_candidate = best;
  out.best_cfg = out.table[static_cast<std::size_t>(best)].cfg;
  out.best_cfg.rounds = base.rounds;
  out.best_cfg.threads = base.threads;
  out.best_cons = probs[static_cast<std::size_t>(best)].cons;
  out.final_fit = multi_start(data, hyp, probs[static_cast<std::size_t>(best)], out.best_cfg);
  return out;
}

std::string trace_to_csv(const SmmTrace& trace) {
  std::ostringstream os;
  os << "nu,batch,eps,accepted,f_batch,surrogate_value,surrogate_at_ref,step_norm,delta,"
        "solver_iterations,solver_status,full_objective,wall_seconds\n";
  for (std::size_t i = 0; i < trace.iters.size(); ++i) {
    const auto& it = trace.iters[i];
    os << it.nu << ',' << it.batch << ',' << format_double(it.eps) << ',' << (it.accepted ? 1 : 0)
       << ',' << format_double(it.f_batch) << ',' << format_double(it.surrogate_value) << ','
       << format_double(it.surrogate_at_ref) << ',' << format_double(it.step_norm) << ','
       << format_double(it.delta) << ',' << it.solver_iterations << ',' << it.solver_status << ','
       << format_double(trace.full_objective[i + 1]) << ',' << format_double(it.wall_seconds) << '\n';
  }
  return os.str();
}

std::string sweep_table_csv(const SweepResult& res) {
  std::ostringstream os;
  os << "candidate,eps0,eps1,T0,beta1,beta2,eta,gamma,lambda,ok,val_cost,val_feasibility,selected\n";
  for (const auto& r : res.table) {
    os << r.candidate << ',' << format_double(r.cfg.eps.eps0) << ',' << format_double(r.cfg.eps.eps1)
       << ',' << r.cfg.eps.T0 << ',' << format_double(r.cfg.beta1) << ','
       << format_double(r.cfg.beta2) << ',' << format_double(r.cfg.eta) << ','
       << format_double(r.gamma) << ',' << format_double(r.lambda) << ',' << (r.ok ? 1 : 0) << ','
       << format_double(r.val_cost) << ',' << format_double(r.val_feasibility) << ','
       << (r.candidate == res.best_candidate ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

nlohmann::ordered_json config_json(const SmmConfig& cfg) {
  nlohmann::ordered_json j;
  j["T"] = cfg.T;
  j["eta"] = cfg.eta;
  j["eps0"] = cfg.eps.eps0;
  j["eps1"] = cfg.eps.eps1;
  j["T0"] = cfg.eps.T0;
  j["eps_outer"] = cfg.eps_outer;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["rounds"] = cfg.rounds;
  j["output_rule"] = std::string(output_rule_name(cfg.output));
  j["seed"] = cfg.seed;
  j["delta0"] = cfg.delta0;
  j["tol"] = cfg.tol;
  return j;
}

}  // namespace

std::string config_to_json(const SmmConfig& cfg) { return config_json(cfg).dump(2); }

std::string summary_to_json(const MultiStartResult& res, const SmmConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = config_json(cfg);
  j["best_round"] = res.best_round;
  j["output_index"] = res.best.trace.output_index;
  j["final_objective"] = res.best.trace.final_objective;
  auto& rounds = j["rounds"] = nlohmann::ordered_json::array();
  for (const auto& r : res.rounds) {
    nlohmann::ordered_json e;
    e["round"] = r.round;
    e["seed"] = r.seed;
    e["ok"] = r.ok;
    if (r.ok) {
      e["objective"] = r.objective;
      e["accepted"] = r.accepted;
    } else {
      e["error"] = r.error;
    }
    rounds.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PADR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 256));
  }
  return 1;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
    }
  }
  // Lowest failing index wins so the reported error does not depend on scheduling.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace padr
