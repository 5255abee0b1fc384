#pragma once

// Stochastic majorization-minimization with incremental minibatches, random
// eps-active index mappings and a sufficient-descent acceptance test.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "padr/penalty.hpp"
#include "padr/subproblem.hpp"

namespace padr {

/// eps0 for the first T0 iterations, eps1 afterwards. T0 = 0 means eps0 throughout.
struct EpsSchedule {
  double eps0 = 0.0;
  double eps1 = 0.0;
  int T0 = 0;

  static EpsSchedule constant(double eps) { return {eps, eps, 0}; }
  static EpsSchedule shrinking(double eps0, double eps1, int T0) { return {eps0, eps1, T0}; }
  double at(int nu) const { return (T0 == 0 || nu < T0) ? eps0 : eps1; }
};

enum class OutputRule { uniform_iterate, best_erm };
std::string_view output_rule_name(OutputRule r);
OutputRule parse_output_rule(const std::string& s);

struct SmmConfig {
  int T = 10;
  double eta = 0.1;
  EpsSchedule eps;
  double eps_outer = -1.0;  ///< concave outer pieces; negative means "same as eps_nu"
  double beta1 = 20.0;
  double beta2 = 20.0;
  int rounds = 10;
  OutputRule output = OutputRule::best_erm;
  std::uint64_t seed = 0;
  double delta0 = 1e-3;
  double tol = 1e-6;
  AdmmSettings admm;
  int threads = 1;
  bool timing = false;

  void validate() const;
  int batch_size(int nu) const;
  double delta(int nu) const { return delta0 / (nu + 1.0); }
};

struct IterRecord {
  int nu = 0;
  int batch = 0;
  double eps = 0.0;
  bool accepted = false;
  double f_batch = 0.0;          ///< F_N(theta^nu) on the drawn minibatch
  double surrogate_value = 0.0;  ///< surrogate + prox at the candidate
  double surrogate_at_ref = 0.0; ///< surrogate at theta^nu
  double step_norm = 0.0;
  double delta = 0.0;
  int solver_iterations = 0;
  std::string solver_status;
  double wall_seconds = 0.0;
};

struct SmmTrace {
  std::vector<IterRecord> iters;
  std::vector<double> full_objective;  ///< V(theta^nu) for nu = 0..T
  int output_index = 0;
  double final_objective = 0.0;
};

struct SmmResult {
  Theta theta;
  SmmTrace trace;
};

/// Raised when an iteration cannot produce a finite subproblem value; carries
/// the iterations completed before the failure.
struct SmmAborted : SolverError {
  SmmAborted(const std::string& what, SmmTrace partial)
      : SolverError(what), trace(std::move(partial)) {}
  SmmTrace trace;
};

/// T iterations from theta0.
SmmResult run_smm(const Dataset& data, const PenalizedProblem& prob, const Theta& theta0,
                  const SmmConfig& cfg);

struct RoundSummary {
  int round = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double objective = 0.0;
  int accepted = 0;
  std::string error;
};

struct MultiStartResult {
  SmmResult best;
  int best_round = 0;
  std::vector<RoundSummary> rounds;
};

std::uint64_t round_seed(std::uint64_t seed, int round);

/// `cfg.rounds` independent runs from uniform initial points, best by full objective.
MultiStartResult multi_start(const Dataset& data, const HypothesisConfig& hyp,
                             const PenalizedProblem& prob, const SmmConfig& cfg);

/// Search interval. A log range is sampled log-uniformly on [max(lo, hi * 1e-4), hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool log = false;
};

struct SweepSpace {
  Range gamma{0.0, 1.0};
  Range lambda{0.0, 1000.0, true};
  Range eps0{0.0, 1e4, true};
  Range eps1{0.0, 1e4, true};
  Range T0{1.0, 6.0};
  Range beta1{5.0, 50.0};
  Range beta2{10.0, 40.0};
  Range eta{0.0, 1.0, true};
};

struct SweepOptions {
  int budget = 20;
  double validation_split = 0.2;
  int candidate_rounds = 3;      ///< rounds per candidate; the winner is retrained with cfg.rounds
  double min_feasibility = 1.0;  ///< validation feasibility a constrained candidate must reach
};

struct SweepRow {
  int candidate = 0;
  SmmConfig cfg;
  double gamma = 0.0;
  double lambda = 0.0;
  double val_cost = 0.0;
  double val_feasibility = 1.0;
  bool ok = false;
};

struct SweepResult {
  SmmConfig best_cfg;
  ConstraintSpec best_cons;
  int best_candidate = 0;
  std::vector<SweepRow> table;
  MultiStartResult final_fit;
  Eigen::Index n_train = 0;
  Eigen::Index n_validation = 0;
};

/// Random search over `space`; candidates are trained on the training part and
/// ranked by validation cost (feasible candidates first when constrained). The
/// winner is retrained on all of `data`.
SweepResult sweep(const Dataset& data, const HypothesisConfig& hyp, const PenalizedProblem& prob,
                  const SmmConfig& base, const SweepSpace& space, const SweepOptions& opts);

std::string trace_to_csv(const SmmTrace& trace);
std::string config_to_json(const SmmConfig& cfg);
std::string summary_to_json(const MultiStartResult& res, const SmmConfig& cfg);
std::string sweep_table_csv(const SweepResult& res);

/// Threads from the explicit flag (> 0), else PADR_THREADS, else 1.
int resolve_threads(int flag);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results are the
/// caller's to store by index, so output order never depends on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace padr
