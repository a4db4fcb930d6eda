// Command-line front end: train, eval, demo-collect, bench, plot.

#include "insertion/bench.hpp"
#include "insertion/plot.hpp"
#include "insertion/render.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace insertion;

namespace {

struct CellFlags {
  std::string method = "ResidualRL";
  std::string algo;  // SAC, or TD3 for RLfD
  std::string reward = "dense";
  std::string profile = "UsbLike";
  std::string perturbation = "Perfect";
  int episodes = -1;
};

void add_cell_flags(CLI::App* app, CellFlags& f) {
  app->add_option("--method", f.method, "PureRL | ResidualRL | RLfD | PControllerOnly");
  app->add_option("--algo", f.algo, "SAC | TD3 (default SAC; TD3 for RLfD)");
  app->add_option("--reward", f.reward, "dense | sparse | image");
  app->add_option("--profile", f.profile, "UsbLike | DSubLike | ModelELike");
  app->add_option("--perturbation", f.perturbation, "Perfect | Noisy1mm");
  app->add_option("--episodes", f.episodes, "training episodes (default depends on method)");
}

ExperimentSpec spec_from(const std::string& config, const CellFlags& f) {
  ExperimentSpec spec;
  if (!config.empty()) {
    spec = read_json_file(config).get<ExperimentSpec>();
  } else {
    const Method method = method_from_string(f.method);
    const std::string algo = f.algo.empty() ? (method == Method::RLfD ? "TD3" : "SAC") : f.algo;
    spec = ExperimentSpec::make(method, algo_from_string(algo),
                                reward_mode_from_string(f.reward), connector_from_string(f.profile),
                                perturbation_from_string(f.perturbation));
  }
  if (f.episodes >= 0) spec.episodes = f.episodes;
  spec.validate();
  return spec;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_train(const std::string& config, const CellFlags& flags, std::optional<std::uint64_t> seed,
              const std::string& out) {
  ExperimentSpec spec = spec_from(config, flags);
  const std::uint64_t s = seed.value_or(spec.seeds.front());
  spec.seeds = {s};
  const RunPaths paths{out};
  fs::create_directories(out);
  fs::remove(paths.metrics());
  TrainResult trained;
  {
    MetricsWriter writer(paths.metrics());
    trained = train(spec, s, {.metrics = &writer});
  }
  if (!trained.demos.empty()) write_demos(paths.demos(), trained.demos);
  const auto rows = read_metrics(paths.metrics());
  if (!rows.empty()) {
    write_text_file(paths.curves() / "final_distance.svg", learning_curve_svg(curve_data({rows}), spec.key()));
  }
  nlohmann::json snapshot = spec;
  snapshot["seed"] = s;
  save_run(out, snapshot, s, trained.agent.get());
  std::printf("%s seed %llu: %zu episodes, first success at episode %d\n", spec.key().c_str(),
              static_cast<unsigned long long>(s), trained.episodes.size(), trained.episodes_to_first_success);
  return 0;
}

int cmd_eval(const std::string& run, std::optional<std::uint64_t> seed, int rollouts,
             const std::string& perturbation, const std::string& out) {
  const LoadedRun loaded = load_run(run);
  for (const auto& w : loaded.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  nlohmann::json spec_json = loaded.manifest.spec;
  spec_json.erase("seed");
  ExperimentSpec spec = spec_json.get<ExperimentSpec>();
  if (!perturbation.empty()) spec.perturbation = perturbation_from_string(perturbation);
  const EvalReport report = evaluate(loaded.agent.get(), spec, seed.value_or(loaded.manifest.seed), rollouts);
  nlohmann::json j{{"key", spec.key()},
                   {"rollouts", rollouts},
                   {"success_rate", report.success_rate},
                   {"mean_final_distance_m", report.mean_final_distance_m},
                   {"policy_bound_hit_fraction", report.policy_bound_hit_fraction}};
  print_json(j);
  if (!out.empty()) write_json_file(fs::path(out) / "eval.json", j);
  return 0;
}

int cmd_demo(const std::string& config, const std::string& profile, std::uint64_t seed, int count,
             const std::string& reward, const std::string& out) {
  EnvConfig env = config.empty() ? EnvConfig::for_profile(connector_from_string(profile), seed)
                                 : read_json_file(config).get<EnvConfig>();
  RewardContext ctx;
  ctx.mode = reward_mode_from_string(reward);
  if (ctx.mode == RewardMode::Image) ctx.goal_frame = std::make_shared<const Frame>(capture_goal_image(env));
  Rng rng(seed);
  std::vector<Demonstration> demos;
  for (int i = 0; i < count; ++i) demos.push_back(scripted_demo(env, {}, rng, ctx));
  const RunPaths paths{out};
  fs::create_directories(out);
  write_json_file(paths.config(), env);
  write_demos(paths.demos(), demos);
  EnvConfig goal_view = env;
  goal_view.goal_estimate = env.goal;
  write_pgm(capture_goal_image(goal_view), fs::path(out) / "goal.pgm");
  for (std::size_t i = 0; i < demos.size(); ++i) {
    std::printf("demo %zu: %zu steps, inserted at step %d after %d attempt(s)\n", i, demos[i].transitions.size(),
                demos[i].steps_to_insert, demos[i].attempts);
  }
  return 0;
}

std::vector<ExperimentSpec> grid_from(const std::string& config) {
  if (config.empty()) return default_grid();
  const nlohmann::json j = read_json_file(config);
  const nlohmann::json& cells = j.is_array() ? j : j.at("cells");
  std::vector<ExperimentSpec> specs;
  for (const auto& c : cells) specs.push_back(c.get<ExperimentSpec>());
  return specs;
}

int cmd_bench(const std::string& config, std::optional<std::uint64_t> seed, int episodes, const std::string& out) {
  std::vector<ExperimentSpec> specs = grid_from(config);
  for (auto& s : specs) {
    if (seed) s.seeds = {*seed};
    if (episodes >= 0 && s.method != Method::PControllerOnly) s.episodes = episodes;
  }
  const auto results = run_grid(specs, {.out = out, .verbose = true});
  int failed = 0;
  for (const auto& r : results) {
    if (r.error) {
      ++failed;
      std::printf("%-50s ERROR %s\n", r.spec.key().c_str(), r.error->c_str());
    } else {
      std::printf("%-50s success %.2f  final distance %.2f mm\n", r.spec.key().c_str(), r.success_rate,
                  1e3 * r.mean_final_distance_m);
    }
  }
  return failed == 0 ? 0 : 1;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::vector<MetricsRow>> runs;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p) && fs::exists(p / "table.json")) {
      std::vector<CellResult> results;
      for (const auto& row : read_json_file(p / "table.json").at("rows")) {
        CellResult r;
        nlohmann::json spec{{"method", row.at("method")}, {"algo", row.at("algo")},
                            {"reward_mode", row.at("reward_mode")}, {"profile", row.at("profile")},
                            {"perturbation", row.at("perturbation")}, {"episodes", row.at("episodes")}};
        std::vector<std::uint64_t> seeds;
        for (const auto& s : row.at("seeds")) {
          seeds.push_back(s.at("seed").get<std::uint64_t>());
          r.seeds.push_back({.seed = seeds.back()});
        }
        if (!seeds.empty()) spec["seeds"] = seeds;
        r.spec = spec.get<ExperimentSpec>();
        r.success_rate = row.at("success_rate").get<double>();
        if (!row.at("error").is_null()) r.error = row.at("error").get<std::string>();
        results.push_back(std::move(r));
      }
      write_grid_curves(p, results);
      if (!out.empty() && fs::path(out) != p) fs::copy(p / "curves", fs::path(out) / "curves",
                                                        fs::copy_options::recursive | fs::copy_options::overwrite_existing);
      continue;
    }
    runs.push_back(read_metrics(fs::is_directory(p) ? RunPaths{p}.metrics() : p));
  }
  if (!runs.empty()) {
    const fs::path target = (out.empty() ? fs::path(".") : fs::path(out)) / "curves" / "final_distance.svg";
    write_text_file(target, learning_curve_svg(curve_data(runs), "final distance"));
    std::printf("wrote %s\n", target.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual reinforcement learning for connector insertion"};
  app.require_subcommand(1);

  std::string config, out, run, profile = "UsbLike", reward = "dense", perturbation;
  std::optional<std::uint64_t> seed;
  int rollouts = 25, count = 10, episodes = -1;
  std::vector<std::string> inputs;
  CellFlags flags;

  auto* train_cmd = app.add_subcommand("train", "train one cell for one seed into a run directory");
  train_cmd->add_option("--config", config, "experiment spec JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "seed (default: first seed of the spec)");
  train_cmd->add_option("--out", out, "run directory")->required();
  add_cell_flags(train_cmd, flags);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  eval_cmd->add_option("--run", run, "run directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--seed", seed, "evaluation seed (default: the run's seed)");
  eval_cmd->add_option("--rollouts", rollouts, "number of rollouts")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--perturbation", perturbation, "override: Perfect | Noisy1mm");
  eval_cmd->add_option("--out", out, "directory for eval.json");
  eval_cmd->add_option("--config", config, "unused; accepted for uniformity");

  auto* demo_cmd = app.add_subcommand("demo-collect", "record scripted demonstrations");
  demo_cmd->add_option("--config", config, "environment config JSON")->check(CLI::ExistingFile);
  demo_cmd->add_option("--profile", profile, "profile when no config is given");
  demo_cmd->add_option("--seed", seed, "seed");
  demo_cmd->add_option("--count", count, "number of demonstrations")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--reward", reward, "reward recorded with the transitions");
  demo_cmd->add_option("--out", out, "output directory")->required();

  auto* bench_cmd = app.add_subcommand("bench", "run an experiment grid");
  bench_cmd->add_option("--config", config, "grid JSON: {\"cells\": [spec, ...]} (default grid if omitted)")
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--seed", seed, "run every cell with this single seed");
  bench_cmd->add_option("--episodes", episodes, "override the training budget of learned cells");
  bench_cmd->add_option("--out", out, "output directory")->required();

  auto* plot_cmd = app.add_subcommand("plot", "draw learning curves");
  plot_cmd->add_option("inputs", inputs, "metrics CSVs, run directories or bench output directories")
      ->required();
  plot_cmd->add_option("--out", out, "output directory");
  plot_cmd->add_option("--config", config, "unused; accepted for uniformity");
  plot_cmd->add_option("--seed", seed, "unused; accepted for uniformity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, flags, seed, out);
    if (*eval_cmd) return cmd_eval(run, seed, rollouts, perturbation, out);
    if (*demo_cmd) return cmd_demo(config, profile, seed.value_or(0), count, reward, out);
    if (*bench_cmd) return cmd_bench(config, seed, episodes, out);
    if (*plot_cmd) return cmd_plot(inputs, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
