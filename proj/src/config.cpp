#include "padr/config.hpp"

#include <set>

namespace padr {

using json = nlohmann::json;

namespace {

/// Reads one JSON object, remembering which keys were consumed so that the
/// leftovers can be reported as unknown.
class Section {
public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError("key '" + label() + "': expected an object");
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(j_->at(key), name(key));
  }

  template <class T>
  T required(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) throw ConfigError("missing required key '" + name(key) + "'");
    return convert<T>(j_->at(key), name(key));
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? &j_->at(key) : nullptr, name(key));
  }

  void read_range(const std::string& key, Range& r) {
    seen_.insert(key);
    if (!has(key)) return;
    const json& v = j_->at(key);
    if (v.is_object()) {
      Section s(&v, name(key));
      r.lo = s.required<double>("lo");
      r.hi = s.required<double>("hi");
      s.read("log", r.log);
      s.finish();
    } else {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError("key '" + name(key) + "': expected [lo, hi] or {lo, hi, log}");
      r.lo = v[0].get<double>();
      r.hi = v[1].get<double>();
    }
    if (r.lo > r.hi) throw ConfigError("key '" + name(key) + "': lo > hi");
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + name(k) + "'");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  static T convert(const json& v, const std::string& key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("key '" + key + "': expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("key '" + key + "': expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
          throw ConfigError("key '" + key + "': expected a nonnegative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("key '" + key + "': expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("key '" + key + "': expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }))
        throw ConfigError("key '" + key + "': expected an array of strings");
    } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_unsigned(); }))
        throw ConfigError("key '" + key + "': expected an array of nonnegative integers");
    }
    return v.get<T>();
  }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::pair<double, double>> read_costs(Section& s, const std::string& key,
                                                  std::vector<std::pair<double, double>> def) {
  json raw;
  s.read(key, raw);
  if (raw.is_null()) return def;
  if (!raw.is_array() || raw.empty()) throw ConfigError("key '" + s.name(key) + "': expected [[cb, ch], ...]");
  std::vector<std::pair<double, double>> out;
  for (const auto& e : raw) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ConfigError("key '" + s.name(key) + "': expected [[cb, ch], ...]");
    out.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return out;
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("key '" + key + "': " + what);
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"nv-basic", "nv-sparse-p50", "nv-sine", "nv-capacity", "nv-ncvx-obj", "nv-ncvx-constr"};
}

json preset_json(const std::string& name) {
  const json shrink = {{"eps0", 3000.0}, {"eps1", 0.0}, {"T0", 3}};
  const json ranges_unconstrained = {{"eps1", {0.0, 0.0}}};
  json p;
  if (name == "nv-basic" || name == "nv-sparse-p50" || name == "nv-ncvx-obj") {
    const int dim = name == "nv-sparse-p50" ? 50 : 2;
    const bool ncvx = name == "nv-ncvx-obj";
    p = {{"data", {{"kind", name == "nv-sparse-p50" ? "maxaffine_sparse" : "maxaffine_basic"},
                   {"k", 1.0}, {"n", 1000}, {"p", dim}}},
         {"cost", {{"kind", ncvx ? "newsvendor_capacity" : "newsvendor"},
                   {"costs", ncvx ? json::array({{5.0, 5.0}}) : json::array({{8.0, 2.0}})}}},
         {"model", {{"K1", 3}, {"K2", 0}, {"mu", 50.0}}},
         {"smm", shrink},
         {"sweep", {{"budget", 20}, {"ranges", ranges_unconstrained}}},
         {"bench", {{"setting", name},
                    {"methods", ncvx ? json::array({"SIMOPT", "PADR(3,0)", "LDR", "PO-L"})
                                     : json::array({"SIMOPT", "PADR(3,0)", "LDR", "GLDR-2", "GLDR-3",
                                                    "PO-L", "PO-PA"})}}}};
  } else if (name == "nv-sine") {
    p = {{"data", {{"kind", "sine_seasonal"}, {"n", 1000}, {"p", 2}}},
         {"cost", {{"kind", "newsvendor"}, {"costs", {{5.0, 5.0}}}}},
         {"model", {{"K1", 2}, {"K2", 2}, {"mu", 50.0}}},
         {"smm", shrink},
         {"sweep", {{"budget", 20}, {"ranges", ranges_unconstrained}}},
         {"bench", {{"setting", name}, {"methods", {"SIMOPT", "PADR(2,2)", "PADR(4,4)", "LDR", "PO-L"}}}}};
  } else if (name == "nv-capacity" || name == "nv-ncvx-constr") {
    const bool ncvx = name == "nv-ncvx-constr";
    p = {{"data", {{"kind", "two_product_linear"}, {"n", 1000}, {"p", 2}}},
         {"cost", {{"kind", ncvx ? "capacity_concave" : "capacity_linear"},
                   {"costs", ncvx ? json::array({{7.0, 7.0}, {3.0, 3.0}}) : json::array({{8.0, 2.0}, {2.0, 8.0}})},
                   {"C0", ncvx ? 50.0 : 60.0}}},
         {"model", {{"K1", 2}, {"K2", 2}, {"mu", 50.0}}},
         {"smm", shrink},
         {"sweep", {{"budget", 20}, {"ranges", ranges_unconstrained}}},
         {"bench", {{"setting", name}, {"methods", {"SIMOPT", "PADR(2,2)", "PO-L"}}}}};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  p["preset"] = name;
  return p;
}

void merge_json(json& base, const json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (const auto& [k, v] : over.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object()) {
      merge_json(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  Section root(&doc, "");
  root.read("command", cfg.command);
  if (!cfg.command.empty() && std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
    throw ConfigError("key 'command': unknown command '" + cfg.command + "'");
  root.read("preset", cfg.preset);
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);
  check(cfg.threads >= 0, "threads", "must be >= 0");

  {
    Section s = root.sub("paths");
    s.read("data", cfg.data_in);
    s.read("model", cfg.model_in);
    s.read("test", cfg.test_in);
    s.read("out", cfg.out_dir);
    s.finish();
  }
  {
    Section s = root.sub("cost");
    std::string kind = std::string(bench::cost_kind_name(cfg.cost.kind));
    s.read("kind", kind);
    cfg.cost.kind = bench::parse_cost_kind(kind);
    cfg.cost.costs = read_costs(s, "costs", cfg.cost.costs);
    s.read("C0", cfg.cost.C0);
    s.read("gamma", cfg.gamma);
    s.read("lambda", cfg.lambda);
    s.finish();
    cfg.cost.validate();
    check(cfg.gamma >= 0.0, "cost.gamma", "must be >= 0");
    check(cfg.lambda >= 0.0, "cost.lambda", "must be >= 0");
  }
  {
    Section s = root.sub("model");
    s.read("K1", cfg.hyp.K1);
    s.read("K2", cfg.hyp.K2);
    s.read("mu", cfg.hyp.mu);
    s.finish();
    cfg.hyp.d = cfg.cost.d();
  }
  {
    Section s = root.sub("data");
    std::string kind = cfg.cost.d() == 2 ? "two_product_linear" : "maxaffine_basic";
    s.read("kind", kind);
    cfg.data.model.kind = bench::parse_demand_kind(kind);
    s.read("k", cfg.data.model.k);
    s.read("noise_sd", cfg.data.model.noise_sd);
    s.read("n", cfg.data.n);
    s.read("p", cfg.data.p);
    s.finish();
    check(cfg.data.n >= 1, "data.n", "must be >= 1");
    check(cfg.data.p >= cfg.data.model.min_p(), "data.p", "below the demand model's minimum");
    check(cfg.data.model.noise_sd >= 0.0, "data.noise_sd", "must be >= 0");
    cfg.hyp.p = cfg.data.p;
  }
  {
    Section s = root.sub("smm");
    SmmConfig& m = cfg.smm;
    s.read("T", m.T);
    s.read("eta", m.eta);
    bool has_eps = s.has("epsilon");
    double eps = 0.0;
    s.read("epsilon", eps);
    s.read("eps0", m.eps.eps0);
    s.read("eps1", m.eps.eps1);
    s.read("T0", m.eps.T0);
    if (has_eps) {
      if (s.has("eps0") || s.has("eps1") || s.has("T0"))
        throw ConfigError("key 'smm.epsilon': give either a constant epsilon or eps0/eps1/T0");
      m.eps = EpsSchedule::constant(eps);
    }
    s.read("eps_outer", m.eps_outer);
    s.read("beta1", m.beta1);
    s.read("beta2", m.beta2);
    s.read("rounds", m.rounds);
    std::string rule = std::string(output_rule_name(m.output));
    s.read("output_rule", rule);
    m.output = parse_output_rule(rule);
    s.read("delta0", m.delta0);
    s.read("tol", m.tol);
    s.read("timing", m.timing);
    s.finish();
    m.seed = cfg.seed;
    m.threads = cfg.threads;
    m.validate();
  }
  {
    Section s = root.sub("sweep");
    s.read("budget", cfg.sweep_budget);
    s.read("validation_split", cfg.sweep.validation_split);
    s.read("candidate_rounds", cfg.sweep.candidate_rounds);
    s.read("min_feasibility", cfg.sweep.min_feasibility);
    Section r = s.sub("ranges");
    r.read_range("gamma", cfg.space.gamma);
    r.read_range("lambda", cfg.space.lambda);
    r.read_range("eps0", cfg.space.eps0);
    r.read_range("eps1", cfg.space.eps1);
    r.read_range("T0", cfg.space.T0);
    r.read_range("beta1", cfg.space.beta1);
    r.read_range("beta2", cfg.space.beta2);
    r.read_range("eta", cfg.space.eta);
    r.finish();
    s.finish();
    check(cfg.sweep_budget >= 0, "sweep.budget", "must be >= 0");
    check(cfg.sweep.validation_split > 0.0 && cfg.sweep.validation_split < 1.0, "sweep.validation_split",
          "must lie in (0, 1)");
    check(cfg.sweep.candidate_rounds >= 1, "sweep.candidate_rounds", "must be >= 1");
    cfg.sweep.budget = std::max(cfg.sweep_budget, 1);
  }
  {
    Section s = root.sub("bench");
    bench::ExperimentConfig& b = cfg.bench;
    s.read("setting", b.setting);
    s.read("n_train", b.n_train);
    s.read("n_test", b.n_test);
    s.read("methods", b.methods);
    s.read("seeds", b.seeds);
    s.read("simopt_scenarios", b.simopt_scenarios);
    s.read("timing", b.timing);
    s.finish();
    if (!s.has("seeds")) b.seeds = {cfg.seed};
    if (!s.has("n_train")) b.n_train = cfg.data.n;
    b.model = cfg.data.model;
    b.cost = cfg.cost;
    b.p = cfg.data.p;
    b.threads = cfg.threads;
    b.train = make_train_settings(cfg);
    check(b.simopt_scenarios >= 1, "bench.simopt_scenarios", "must be >= 1");
    b.validate();
  }
  {
    Section s = root.sub("diagnose");
    DiagnoseSection& d = cfg.diagnose;
    s.read("what", d.what);
    s.read("epsilon", d.epsilon);
    s.read("rho", d.rho);
    s.read("probes", d.probes);
    s.read("radius", d.radius);
    s.read("draws", d.draws);
    s.read("cap", d.cap);
    s.read("target", d.target);
    s.read("grid_eps", d.grid_eps);
    s.read("xbar", d.xbar);
    s.read("directions", d.directions);
    s.finish();
    static const std::set<std::string> whats{"surrogation", "residual", "residual_sampled",
                                             "interpolate", "eps_all", "probe"};
    check(whats.contains(d.what), "diagnose.what", "unknown diagnostic '" + d.what + "'");
    static const std::set<std::string> targets{"abs", "sin", "maxaffine2"};
    check(targets.contains(d.target), "diagnose.target", "unknown target '" + d.target + "'");
    check(d.probes >= 1, "diagnose.probes", "must be >= 1");
    check(d.draws >= 1, "diagnose.draws", "must be >= 1");
    check(d.rho > 0.0, "diagnose.rho", "must be > 0");
    check(d.epsilon >= 0.0, "diagnose.epsilon", "must be >= 0");
  }
  root.finish();
  cfg.hyp.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["command"] = cfg.command;
  if (!cfg.preset.empty()) j["preset"] = cfg.preset;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"data", cfg.data_in}, {"model", cfg.model_in}, {"test", cfg.test_in}, {"out", cfg.out_dir}};
  oj costs = oj::array();
  for (const auto& [cb, ch] : cfg.cost.costs) costs.push_back({cb, ch});
  j["cost"] = {{"kind", bench::cost_kind_name(cfg.cost.kind)}, {"costs", costs}, {"C0", cfg.cost.C0},
               {"gamma", cfg.gamma}, {"lambda", cfg.lambda}};
  j["model"] = {{"K1", cfg.hyp.K1}, {"K2", cfg.hyp.K2}, {"mu", cfg.hyp.mu}};
  j["data"] = {{"kind", bench::demand_kind_name(cfg.data.model.kind)}, {"k", cfg.data.model.k},
               {"noise_sd", cfg.data.model.noise_sd}, {"n", cfg.data.n}, {"p", cfg.data.p}};
  const SmmConfig& m = cfg.smm;
  j["smm"] = {{"T", m.T}, {"eta", m.eta}, {"eps0", m.eps.eps0}, {"eps1", m.eps.eps1}, {"T0", m.eps.T0},
              {"eps_outer", m.eps_outer}, {"beta1", m.beta1}, {"beta2", m.beta2}, {"rounds", m.rounds},
              {"output_rule", output_rule_name(m.output)}, {"delta0", m.delta0}, {"tol", m.tol},
              {"timing", m.timing}};
  const auto rg = [](const Range& r) { return oj{{"lo", r.lo}, {"hi", r.hi}, {"log", r.log}}; };
  j["sweep"] = {{"budget", cfg.sweep_budget},
                {"validation_split", cfg.sweep.validation_split},
                {"candidate_rounds", cfg.sweep.candidate_rounds},
                {"min_feasibility", cfg.sweep.min_feasibility},
                {"ranges", {{"gamma", rg(cfg.space.gamma)}, {"lambda", rg(cfg.space.lambda)},
                            {"eps0", rg(cfg.space.eps0)}, {"eps1", rg(cfg.space.eps1)},
                            {"T0", rg(cfg.space.T0)}, {"beta1", rg(cfg.space.beta1)},
                            {"beta2", rg(cfg.space.beta2)}, {"eta", rg(cfg.space.eta)}}}};
  j["bench"] = {{"setting", cfg.bench.setting}, {"n_train", cfg.bench.n_train}, {"n_test", cfg.bench.n_test},
                {"methods", cfg.bench.methods}, {"seeds", cfg.bench.seeds},
                {"simopt_scenarios", cfg.bench.simopt_scenarios}, {"timing", cfg.bench.timing}};
  const DiagnoseSection& d = cfg.diagnose;
  j["diagnose"] = {{"what", d.what}, {"epsilon", d.epsilon}, {"rho", d.rho}, {"probes", d.probes},
                   {"radius", d.radius}, {"draws", d.draws}, {"cap", d.cap}, {"target", d.target},
                   {"grid_eps", d.grid_eps}, {"xbar", d.xbar}, {"directions", d.directions}};
  return j;
}

PenalizedProblem make_problem(const RunConfig& cfg) { return cfg.cost.problem(cfg.gamma, cfg.lambda); }

bench::TrainSettings make_train_settings(const RunConfig& cfg) {
  bench::TrainSettings ts;
  ts.smm = cfg.smm;
  ts.mu = cfg.hyp.mu;
  ts.sweep_budget = cfg.sweep_budget;
  ts.gamma = cfg.gamma;
  ts.lambda = cfg.lambda;
  ts.space = cfg.space;
  ts.sweep = cfg.sweep;
  return ts;
}

}  // namespace padr
