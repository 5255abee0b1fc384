// padr: generate data, train and evaluate PADR rules, run benchmarks and diagnostics.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>
#include <json.hpp>

#include "padr/config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

struct Flags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

padr::RunConfig resolve(const std::string& command, const Flags& f) {
  json file = json::object();
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw padr::ConfigError("config file not found: " + f.config);
    try {
      file = json::parse(padr::read_file(f.config));
    } catch (const json::parse_error& e) {
      throw padr::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!file.is_object()) throw padr::ConfigError("config root must be an object");
  }
  std::string preset = f.preset;
  if (preset.empty() && file.contains("preset") && file["preset"].is_string())
    preset = file["preset"].get<std::string>();
  json doc = preset.empty() ? json::object() : padr::preset_json(preset);
  padr::merge_json(doc, file);
  if (!preset.empty()) doc["preset"] = preset;
  if (doc.contains("command") && doc["command"] != command)
    throw padr::ConfigError("key 'command': config is for '" + doc["command"].dump() + "', not '" + command + "'");
  doc["command"] = command;
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.out.empty()) doc["paths"]["out"] = f.out;
  const int threads = padr::resolve_threads(f.threads);
  if (f.threads > 0 || threads > 1) doc["threads"] = threads;
  padr::RunConfig cfg = padr::parse_config(doc);
  for (const auto& p : {cfg.data_in, cfg.model_in, cfg.test_in})
    if (!p.empty() && !fs::exists(p)) throw padr::ConfigError("path not found: " + p);
  return cfg;
}

fs::path out_path(const padr::RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / name;
}

/// Dataset from paths.data, else generated from the data section (part 0 =
/// training sample, part 1 = test sample).
padr::Dataset dataset_for(const padr::RunConfig& cfg, const std::string& path, std::uint64_t part) {
  if (!path.empty()) return padr::load_dataset(path);
  const padr::Rng root(cfg.seed, padr::Stream::data);
  return padr::bench::gen_dataset(cfg.data.model, cfg.data.n, cfg.data.p, root.derive(part));
}

void check_dims(const padr::RunConfig& cfg, const padr::Dataset& data) {
  if (data.m() != cfg.cost.d())
    throw padr::DimensionError("dataset has " + std::to_string(data.m()) + " outcomes, cost expects " +
                               std::to_string(cfg.cost.d()));
}

padr::HypothesisConfig hyp_for(const padr::RunConfig& cfg, const padr::Dataset& data) {
  padr::HypothesisConfig h = cfg.hyp;
  h.p = static_cast<int>(data.p());
  return h;
}

void write_fit(const padr::RunConfig& cfg, const padr::MultiStartResult& fit) {
  padr::write_file_atomic(out_path(cfg, "model.json"), padr::model_to_json(padr::Model{fit.best.theta, {}}));
  padr::write_file_atomic(out_path(cfg, "trace.csv"), padr::trace_to_csv(fit.best.trace));
  padr::write_file_atomic(out_path(cfg, "summary.json"), padr::summary_to_json(fit, cfg.smm));
}

int cmd_gen(const padr::RunConfig& cfg) {
  const padr::Dataset data = dataset_for(cfg, "", 0);
  padr::write_file_atomic(out_path(cfg, "data.csv"), padr::dataset_to_csv(data));
  return 0;
}

int cmd_train(const padr::RunConfig& cfg) {
  const padr::Dataset data = dataset_for(cfg, cfg.data_in, 0);
  check_dims(cfg, data);
  const auto fit = padr::multi_start(data, hyp_for(cfg, data), padr::make_problem(cfg), cfg.smm);
  write_fit(cfg, fit);
  return 0;
}

int cmd_sweep(const padr::RunConfig& cfg) {
  const padr::Dataset data = dataset_for(cfg, cfg.data_in, 0);
  check_dims(cfg, data);
  const auto res = padr::sweep(data, hyp_for(cfg, data), padr::make_problem(cfg), cfg.smm, cfg.space, cfg.sweep);
  padr::write_file_atomic(out_path(cfg, "sweep.csv"), padr::sweep_table_csv(res));
  write_fit(cfg, res.final_fit);
  return 0;
}

int cmd_eval(const padr::RunConfig& cfg) {
  if (cfg.model_in.empty()) throw padr::ConfigError("missing required key 'paths.model'");
  const padr::Model model = padr::model_from_json(padr::read_file(cfg.model_in));
  const padr::Dataset data = dataset_for(cfg, cfg.test_in.empty() ? cfg.data_in : cfg.test_in,
                                         cfg.test_in.empty() && !cfg.data_in.empty() ? 0 : 1);
  check_dims(cfg, data);
  const padr::Dataset scaled = model.scaler ? model.scaler->apply(data) : data;
  const padr::PenalizedProblem prob = padr::make_problem(cfg);
  ojson j;
  j["n"] = data.n();
  j["cost"] = padr::erm_cost(model.theta, scaled, prob.cost);
  j["objective"] = padr::penalized_objective(model.theta, scaled, prob);
  if (!prob.cons.empty()) {
    j["feasibility"] = padr::feasibility_rate(model.theta, scaled, prob.cons, false);
    j["violation"] = padr::constraint_violation(model.theta, scaled, prob.cons);
  }
  padr::write_file_atomic(out_path(cfg, "eval.json"), j.dump(2) + "\n");
  return 0;
}

int cmd_bench(const padr::RunConfig& cfg) {
  const auto rows = padr::bench::run_benchmark(cfg.bench);
  for (const auto& r : rows)
    if (!r.error.empty()) std::cerr << "padr: " << r.method << " seed " << r.seed << ": " << r.error << "\n";
  padr::write_file_atomic(out_path(cfg, "report.csv"), padr::bench::report_to_csv(rows));
  return 0;
}

padr::InterpolationTarget target_for(const std::string& name, double xbar) {
  if (name == "abs") return {[](const padr::Vector& x) { return std::abs(x[0]); }, 1, 1.0, xbar};
  if (name == "sin")
    return {[](const padr::Vector& x) { return std::sin(std::numbers::pi * x[0]); }, 1, std::numbers::pi, 1.0};
  return {[](const padr::Vector& x) {
            return std::max({5.0 * x[0] - 10.0 * x[1], -10.0 * x[0] + 5.0 * x[1], 15.0 * x[0]});
          },
          2, 15.0, 15.0 * xbar};
}

int cmd_diagnose(const padr::RunConfig& cfg) {
  const auto& d = cfg.diagnose;
  std::string body;
  if (d.what == "interpolate") {
    body = padr::to_json(padr::interpolate_pa(target_for(d.target, d.xbar), d.grid_eps, d.xbar).report);
  } else {
    const padr::Dataset data = dataset_for(cfg, cfg.data_in, 0);
    check_dims(cfg, data);
    const padr::HypothesisConfig hyp = hyp_for(cfg, data);
    const padr::PenalizedProblem prob = padr::make_problem(cfg);
    const padr::Rng rng(cfg.seed, padr::Stream::sweep);
    if (d.what == "surrogation") {
      body = padr::to_json(padr::check_surrogation(data, hyp, prob, d.epsilon, d.probes, rng, d.radius));
    } else if (d.what == "eps_all") {
      ojson j;
      j["eps_all"] = padr::eps_all_threshold(hyp, data);
      body = j.dump(2) + "\n";
    } else {
      if (cfg.model_in.empty()) throw padr::ConfigError("missing required key 'paths.model'");
      const padr::Model model = padr::model_from_json(padr::read_file(cfg.model_in));
      padr::ResidualOptions ro;
      ro.cap = d.cap;
      ro.threads = cfg.threads;
      if (d.what == "residual") {
        body = padr::to_json(padr::residual_exact(data, prob, model.theta, d.epsilon, d.rho, ro));
      } else if (d.what == "residual_sampled") {
        body = padr::to_json(padr::residual_sampled(data, prob, model.theta, d.epsilon, d.rho, d.draws, rng, ro));
      } else {
        body = padr::to_json(padr::directional_probe(data, prob, model.theta, d.directions, rng));
      }
    }
  }
  padr::write_file_atomic(out_path(cfg, "diagnose.json"), body);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise affine decision rules learned by stochastic majorization-minimization"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  app.add_option("--config", flags.config, "JSON run configuration");
  app.add_option("--preset", flags.preset, "named experiment preset");
  auto* seed_opt = app.add_option("--seed", seed, "global seed (overrides the config)");
  app.add_option("--out", flags.out, "output directory (overrides paths.out)");
  app.add_option("--threads", flags.threads, "worker threads (default: PADR_THREADS or 1)")
      ->check(CLI::NonNegativeNumber);
  app.fallthrough();
  std::map<std::string, int (*)(const padr::RunConfig&)> handlers{
      {"gen", cmd_gen},     {"train", cmd_train},       {"eval", cmd_eval},
      {"bench", cmd_bench}, {"diagnose", cmd_diagnose}, {"sweep", cmd_sweep}};
  const std::map<std::string, std::string> help{
      {"gen", "write a synthetic dataset"},
      {"train", "fit a PADR by multi-start SMM"},
      {"eval", "evaluate a saved model"},
      {"bench", "run a benchmark table"},
      {"diagnose", "surrogation, residual, interpolation and threshold diagnostics"},
      {"sweep", "random hyperparameter search followed by a full retrain"}};
  for (const auto& name : padr::kCommands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) flags.seed = seed;
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const padr::RunConfig cfg = resolve(command, flags);
    const std::string echo = padr::config_to_json(cfg).dump(2) + "\n";
    std::cout << echo;
    padr::write_file_atomic(out_path(cfg, "config.json"), echo);
    return handlers.at(command)(cfg);
  } catch (const padr::ConfigError& e) {
    std::cerr << "padr: config error: " << e.what() << "\n";
    return 2;
  } catch (const padr::Error& e) {
    std::cerr << "padr: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "padr: " << e.what() << "\n";
    return 1;
  }
}
