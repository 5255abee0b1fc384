#pragma once

// Synthetic newsvendor experiments: demand generators, oracle decisions,
// comparison methods and the report table.

#include <functional>
#include <string>
#include <vector>

#include "padr/smm.hpp"

namespace padr::bench {

enum class DemandKind {
  maxaffine_basic,   ///< k max{5x1 - 10x2, -10x1 + 5x2, 15x1} + 10
  maxaffine_sparse,  ///< same formula, extra features irrelevant
  maxaffine_dense,   ///< x1, x2 replaced by the means of the two feature halves
  sine_seasonal,     ///< 4 sin(pi x1) + max{16x2, -20x2} + 10
  two_product_linear,///< (15x1 - 5x2 + 30, 15x1 + 5x2 + 30)
  linear,            ///< 10 + 2 x1 - x2 (test instance)
  quadratic,         ///< 10 + 3 x1^2 + 2 x1 x2 - 2 x2^2 (test instance)
};

std::string_view demand_kind_name(DemandKind k);
DemandKind parse_demand_kind(const std::string& s);

struct DemandModel {
  DemandKind kind = DemandKind::maxaffine_basic;
  double k = 1.0;
  double noise_sd = 1.0;

  int min_p() const;
  int m() const { return kind == DemandKind::two_product_linear ? 2 : 1; }
  Vector mean(const Eigen::Ref<const Vector>& x) const;
};

/// X ~ U[-1,1]^p, Y = mean(X) + noise_sd * N(0, I).
Dataset gen_dataset(const DemandModel& model, Eigen::Index n, int p, const Rng& rng);

enum class CostKind {
  newsvendor,          ///< one product per outcome, costs per product
  newsvendor_capacity, ///< single product with C(z) added to the objective
  capacity_linear,     ///< z1 + z2 <= C0
  capacity_concave,    ///< C(z1) + C(z2) <= C0
};

std::string_view cost_kind_name(CostKind k);
CostKind parse_cost_kind(const std::string& s);

struct CostSetup {
  CostKind kind = CostKind::newsvendor;
  std::vector<std::pair<double, double>> costs{{8.0, 2.0}};  ///< (c_b, c_h) per product
  double C0 = 60.0;

  void validate() const;
  int d() const { return static_cast<int>(costs.size()); }
  bool constrained() const { return kind == CostKind::capacity_linear || kind == CostKind::capacity_concave; }
  CostSpec cost() const;
  ConstraintSpec constraints(double gamma = 0.0, double lambda = 0.0) const;
  PenalizedProblem problem(double gamma = 0.0, double lambda = 0.0) const;
};

/// Standard normal quantile.
double normal_quantile(double u);
/// (c_b + c_h) phi(Phi^-1(c_b / (c_b + c_h))) sigma: optimal expected newsvendor cost.
double newsvendor_optimal_cost(double cb, double ch, double sigma = 1.0);
/// E[c_b (Y - z)_+ + c_h (z - Y)_+] for Y ~ N(m, sigma^2).
double newsvendor_expected_cost(double cb, double ch, double z, double m, double sigma);

/// Minimizer of the average cost over the scenario rows, subject to the setup's
/// constraint. With a single scenario this is the deterministic plug-in decision.
Vector saa_decision(const CostSetup& setup, const Matrix& scenarios);

/// Optimal decision given the feature vector. Plain newsvendor and the
/// nonconvex objective use the Gaussian model in closed form; constrained
/// setups solve an SAA over `scenarios` draws from `rng`.
Vector simopt_decision(const DemandModel& model, const CostSetup& setup, const Vector& x,
                       const Rng& rng, int scenarios = 1000);

/// Maps a feature vector to a decision.
using DecisionRule = std::function<Vector(const Vector& x)>;

/// Ordinary least squares per outcome (ridge 1e-8 when rank deficient).
struct LinearPredictor {
  Matrix coef;  ///< (p + 1) x m, intercept in the last row
  Vector predict(const Vector& x) const;
};
LinearPredictor fit_ols(const Dataset& data);

/// Monomials of degree 1..degree in the features (no constant).
Vector lift_monomials(const Vector& x, int degree);
Dataset lift_dataset(const Dataset& data, int degree);

struct TrainSettings {
  SmmConfig smm;
  double mu = 50.0;
  int sweep_budget = 0;  ///< 0 trains with smm directly
  double gamma = 0.0;    ///< penalty margin and weight when not swept
  double lambda = 0.0;
  SweepSpace space;
  SweepOptions sweep;
};

DecisionRule baseline_po_linear(const Dataset& data, const CostSetup& setup);
DecisionRule baseline_po_pa(const Dataset& data, const CostSetup& setup, int K1, int K2,
                            const TrainSettings& ts);
DecisionRule baseline_gldr(const Dataset& data, const CostSetup& setup, int degree,
                           const TrainSettings& ts);
/// PADR(K1, K2) decision rule trained on the (penalized) ERM problem.
DecisionRule train_padr(const Dataset& data, const CostSetup& setup, int K1, int K2,
                        const TrainSettings& ts, Theta* out_theta = nullptr,
                        ConstraintSpec* out_cons = nullptr);

struct Evaluation {
  double test_cost = 0.0;    ///< mean cost; constrained setups use feasible decisions only
  double feasibility = 1.0;  ///< fraction of raw decisions that were feasible
  Eigen::Index feasible_count = 0;
};

/// Test cost of `decide` on `test`. For the linear capacity setup infeasible
/// decisions are projected; for the concave one they are dropped.
Evaluation evaluate(const DecisionRule& decide, const Dataset& test, const CostSetup& setup);

struct ExperimentConfig {
  std::string setting = "basic";
  DemandModel model;
  CostSetup cost;
  int p = 2;
  Eigen::Index n_train = 1000;
  Eigen::Index n_test = 1000;
  std::vector<std::string> methods{"SIMOPT", "PADR(3,0)", "LDR", "PO-L"};
  std::vector<std::uint64_t> seeds{0};
  TrainSettings train;
  int simopt_scenarios = 1000;
  bool timing = false;
  int threads = 1;

  void validate() const;
};

struct ReportRow {
  std::string method;
  std::string setting;
  Eigen::Index n = 0;
  int p = 0;
  std::string seed;  ///< seed value, or "mean" for the across-seed average
  double test_cost = 0.0;
  double gap = 0.0;
  double feasibility = 1.0;
  double train_seconds = 0.0;
  std::string error;
};

std::vector<ReportRow> run_benchmark(const ExperimentConfig& cfg);
std::string report_to_csv(const std::vector<ReportRow>& rows);

}  // namespace padr::bench
