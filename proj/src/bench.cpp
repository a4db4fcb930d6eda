#include "insertion/bench.hpp"

#include "insertion/plot.hpp"
#include "insertion/render.hpp"

#include <cstdio>
#include <fstream>

namespace insertion {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::PureRL: return "PureRL";
    case Method::ResidualRL: return "ResidualRL";
    case Method::RLfD: return "RLfD";
    case Method::PControllerOnly: return "PControllerOnly";
  }
  return "PureRL";
}

Method method_from_string(std::string_view name) {
  if (name == "PureRL") return Method::PureRL;
  if (name == "ResidualRL") return Method::ResidualRL;
  if (name == "RLfD") return Method::RLfD;
  if (name == "PControllerOnly") return Method::PControllerOnly;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Perturbation p) { return p == Perturbation::Noisy1mm ? "Noisy1mm" : "Perfect"; }

Perturbation perturbation_from_string(std::string_view name) {
  if (name == "Perfect") return Perturbation::Perfect;
  if (name == "Noisy1mm") return Perturbation::Noisy1mm;
  throw ConfigError("unknown perturbation '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

int ExperimentSpec::default_episodes(Method m) { return m == Method::PureRL ? 300 : 150; }

ExperimentSpec ExperimentSpec::make(Method m, Algo algo, RewardMode reward, ConnectorKind profile,
                                    Perturbation perturbation) {
  ExperimentSpec s;
  s.method = m;
  s.algo = algo;
  s.reward_mode = reward;
  s.profile = profile;
  s.perturbation = perturbation;
  s.episodes = default_episodes(m);
  if (m == Method::PControllerOnly) s.episodes = 1;
  return s;
}

void ExperimentSpec::validate() const {
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (eval_rollouts < 1) throw ConfigError("eval_rollouts must be >= 1");
  if (method == Method::RLfD && demos < 1) throw ConfigError("RLfD needs at least one demonstration");
  if (method == Method::RLfD && algo != Algo::TD3) throw ConfigError("RLfD is defined for TD3 only");
  if (agent && agent->obs_dim != observation_dim(observation())) {
    throw ConfigError("agent obs_dim does not match the observation mode");
  }
}

ObservationMode ExperimentSpec::observation() const {
  return reward_mode == RewardMode::Image ? ObservationMode::Image : ObservationMode::StateVector;
}

AgentConfig ExperimentSpec::agent_config() const {
  if (agent) return *agent;
  return observation() == ObservationMode::Image ? AgentConfig::for_image() : AgentConfig::for_state();
}

std::string ExperimentSpec::key() const {
  const bool p_only = method == Method::PControllerOnly;
  std::string k(to_string(method));
  k += '/';
  k += p_only ? "-" : std::string(to_string(algo));
  k += '/';
  k += p_only ? "-" : std::string(to_string(reward_mode));
  k += '/';
  k += to_string(profile);
  k += '/';
  k += to_string(perturbation);
  return k;
}

std::string ExperimentSpec::slug() const {
  std::string s = key();
  for (char& c : s) {
    if (c == '/') c = '_';
    if (c == '-') c = 'x';
  }
  return s;
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{{"method", std::string(to_string(s.method))},
                     {"algo", std::string(to_string(s.algo))},
                     {"reward_mode", std::string(to_string(s.reward_mode))},
                     {"profile", std::string(to_string(s.profile))},
                     {"episodes", s.episodes},
                     {"seeds", s.seeds},
                     {"perturbation", std::string(to_string(s.perturbation))},
                     {"eval_rollouts", s.eval_rollouts},
                     {"demos", s.demos},
                     {"store_policy_action", s.store_policy_action}};
  if (s.agent) j["agent"] = *s.agent;
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  static const std::vector<std::string> known = {"method",       "algo",          "reward_mode",
                                                  "profile",      "episodes",      "seeds",
                                                  "perturbation", "eval_rollouts", "demos",
                                                  "store_policy_action", "agent"};
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("experiment spec: unknown field '" + k + "'");
    }
  }
  s.method = method_from_string(j.at("method").get<std::string>());
  s.algo = algo_from_string(j.value("algo", std::string(s.method == Method::RLfD ? "TD3" : "SAC")));
  s.reward_mode = reward_mode_from_string(j.value("reward_mode", std::string("dense")));
  s.profile = connector_from_string(j.at("profile").get<std::string>());
  s.perturbation = perturbation_from_string(j.value("perturbation", std::string("Perfect")));
  s.episodes = j.value("episodes", ExperimentSpec::default_episodes(s.method));
  s.seeds = j.value("seeds", std::vector<std::uint64_t>{1, 2, 3});
  s.eval_rollouts = j.value("eval_rollouts", 25);
  s.demos = j.value("demos", 10);
  s.store_policy_action = j.value("store_policy_action", true);
  if (j.contains("agent")) s.agent = j.at("agent").get<AgentConfig>();
  s.validate();
}

Vec3 perturbed_goal(const Vec3& goal, Perturbation p, Rng& rng) {
  if (p == Perturbation::Perfect) return goal;
  std::uniform_real_distribution<double> u(-kGoalPerturbation, kGoalPerturbation);
  const double dx = u(rng);
  const double dy = u(rng);
  return goal + Vec3(dx, dy, 0.0);
}

bool hits_bound(const Vec3& u, double bound) {
  return (u.cwiseAbs().array() >= bound * (1.0 - 1e-6)).any();
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------

namespace {

// Salts separating the random streams of one seed.
enum Stream : std::uint64_t { kEnv = 1, kAgent, kGoalNoise, kDemo, kEvalEnv = 101, kEvalGoal, kEvalAct };

Action compose(Method method, const Vec3& policy, const Vec3& pos, const PController& ctrl) {
  switch (method) {
    case Method::ResidualRL: return residual_action(Action{policy}, pos, ctrl);
    case Method::PControllerOnly: return p_control(pos, ctrl);
    default: return Action{clamp_action(policy, ctrl.bound)};
  }
}

struct LossAccumulator {
  double critic = 0.0, actor = 0.0, temperature = 0.0;
  int n_critic = 0, n_actor = 0;
  bool has_temperature = false;

  void add(const UpdateStats& s, Algo algo) {
    critic += s.critic_loss;
    ++n_critic;
    if (s.actor_loss) {
      actor += *s.actor_loss;
      ++n_actor;
    }
    if (algo == Algo::SAC) {
      temperature = s.temperature;
      has_temperature = true;
    }
  }
};

}  // namespace

TrainResult train(const ExperimentSpec& spec, std::uint64_t seed, const TrainOptions& options) {
  spec.validate();
  const EnvConfig base = EnvConfig::for_profile(spec.profile, derive_seed(seed, kEnv));
  InsertionEnv env(base);
  Rng agent_rng(derive_seed(seed, kAgent));
  Rng goal_rng(derive_seed(seed, kGoalNoise));
  const ObservationMode obs_mode = spec.observation();

  RewardContext reward;
  reward.mode = spec.reward_mode;
  if (spec.reward_mode == RewardMode::Image) {
    reward.goal_frame = std::make_shared<const Frame>(capture_goal_image(base));
  }

  TrainResult out;
  const bool learns = spec.method != Method::PControllerOnly;
  const AgentConfig agent_config = spec.agent_config();
  if (learns) {
    out.agent = make_agent(spec.algo, agent_config, agent_rng);
    if (options.freeze_zero_actor) out.agent->zero_actor();
  }

  ReplayBuffer buffer(100000);
  std::vector<Transition> demo_store;
  if (spec.method == Method::RLfD) {
    if (options.demos != nullptr) {
      out.demos = *options.demos;
    } else {
      Rng demo_rng(derive_seed(seed, kDemo));
      for (int i = 0; i < spec.demos; ++i) out.demos.push_back(scripted_demo(base, {}, demo_rng, reward));
    }
    for (const auto& d : out.demos) {
      for (const auto& t : d.transitions) {
        buffer.push(t);
        demo_store.push_back(t);
      }
    }
    if (demo_store.empty()) throw Error("RLfD needs a non-empty demonstration store");
  }

  const auto batch_size = static_cast<std::size_t>(agent_config.batch_size);
  const ActMode act_mode = options.freeze_zero_actor ? ActMode::Eval : ActMode::Train;
  const bool updates = learns && !options.freeze_zero_actor;
  long total_steps = 0;
  out.episodes_to_first_success = spec.episodes + 1;

  for (int ep = 1; ep <= spec.episodes; ++ep) {
    env.set_goal_estimate(perturbed_goal(base.goal, spec.perturbation, goal_rng));
    env.reset();
    const PController ctrl{.goal_estimate = env.config().goal_estimate};
    VecX obs = observe(env.state(), env.config(), obs_mode);

    EpisodeRecord rec;
    rec.episode = ep;
    LossAccumulator losses;
    while (!env.done()) {
      const Vec3 pos = env.state().pos;
      const Vec3 u = learns ? out.agent->select_action(obs, act_mode, agent_rng) : Vec3::Zero();
      const Action executed = compose(spec.method, u, pos, ctrl);
      const StepResult res = env.step(executed);
      const double r = reward(res.state, env.config());
      VecX next = observe(res.state, env.config(), obs_mode);
      rec.ret += r;
      rec.success = rec.success || res.state.inserted;
      ++total_steps;

      if (learns) {
        const bool store_u = spec.method == Method::ResidualRL && spec.store_policy_action;
        // Time-limit truncation is not a terminal state, so done stays false.
        buffer.push(Transition{obs, store_u ? u : executed.delta, r, next, false});
        if (updates && buffer.size() >= batch_size) {
          const Batch batch = buffer.sample(batch_size, agent_rng);
          if (spec.method == Method::RLfD) {
            std::vector<Transition> picks;
            picks.reserve(batch_size);
            std::uniform_int_distribution<std::size_t> pick(0, demo_store.size() - 1);
            for (std::size_t i = 0; i < batch_size; ++i) picks.push_back(demo_store[pick(agent_rng)]);
            const Batch demo = Batch::from(picks);
            losses.add(out.agent->update(batch, agent_rng, &demo), spec.algo);
          } else {
            losses.add(out.agent->update(batch, agent_rng), spec.algo);
          }
        }
      }
      obs = std::move(next);
    }
    rec.final_distance_m = (env.state().pos - base.goal).norm();
    out.episodes.push_back(rec);
    if (rec.success && out.episodes_to_first_success > spec.episodes) out.episodes_to_first_success = ep;

    if (options.metrics != nullptr) {
      MetricsRow row;
      row.step = total_steps;
      row.episode = ep;
      row.ret = rec.ret;
      row.final_distance_m = rec.final_distance_m;
      if (losses.n_critic > 0) row.critic_loss = losses.critic / losses.n_critic;
      if (losses.n_actor > 0) row.actor_loss = losses.actor / losses.n_actor;
      if (losses.has_temperature) row.temperature = losses.temperature;
      options.metrics->append(row);
    }
  }
  return out;
}

EvalReport evaluate(const Agent* agent, const ExperimentSpec& spec, std::uint64_t seed, int n_rollouts) {
  if (agent == nullptr && spec.method != Method::PControllerOnly) {
    throw Error("evaluate: a learned method needs an agent");
  }
  if (n_rollouts < 1) throw Error("evaluate: n_rollouts must be >= 1");
  const EnvConfig base = EnvConfig::for_profile(spec.profile, derive_seed(seed, kEvalEnv));
  Rng goal_rng(derive_seed(seed, kEvalGoal));
  Rng act_rng(derive_seed(seed, kEvalAct));
  const ObservationMode obs_mode = spec.observation();
  const bool uses_policy = agent != nullptr && spec.method != Method::PControllerOnly;

  EvalReport report;
  int successes = 0;
  long steps = 0, hits = 0;
  for (int i = 0; i < n_rollouts; ++i) {
    EnvConfig cfg = base;
    cfg.goal_estimate = perturbed_goal(base.goal, spec.perturbation, goal_rng);
    cfg.rng_seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(i));
    InsertionEnv env(cfg);
    env.reset();
    const PController ctrl{.goal_estimate = cfg.goal_estimate};

    RolloutRecord rec;
    rec.goal_offset = cfg.goal_estimate - cfg.goal;
    while (!env.done()) {
      const Vec3 pos = env.state().pos;
      Vec3 u = Vec3::Zero();
      if (uses_policy) {
        u = agent->select_action(observe(env.state(), cfg, obs_mode), ActMode::Eval, act_rng);
        if (hits_bound(u, agent->config().action_bound)) ++rec.policy_bound_hits;
      }
      const StepResult res = env.step(compose(spec.method, u, pos, ctrl));
      rec.success = rec.success || res.state.inserted;
      ++rec.steps;
    }
    rec.final_distance_m = (env.state().pos - cfg.goal).norm();
    successes += rec.success ? 1 : 0;
    steps += rec.steps;
    hits += rec.policy_bound_hits;
    report.mean_final_distance_m += rec.final_distance_m / n_rollouts;
    report.rollouts.push_back(rec);
  }
  report.success_rate = static_cast<double>(successes) / n_rollouts;
  report.policy_bound_hit_fraction = steps > 0 ? static_cast<double>(hits) / static_cast<double>(steps) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const CellResult& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"success_rate", s.success_rate},
                     {"mean_final_distance_m", s.mean_final_distance_m},
                     {"episodes_to_first_success", s.episodes_to_first_success},
                     {"policy_bound_hit_fraction", s.policy_bound_hit_fraction}});
  }
  nlohmann::json j{{"key", r.spec.key()},
                   {"method", std::string(to_string(r.spec.method))},
                   {"algo", std::string(to_string(r.spec.algo))},
                   {"reward_mode", std::string(to_string(r.spec.reward_mode))},
                   {"profile", std::string(to_string(r.spec.profile))},
                   {"perturbation", std::string(to_string(r.spec.perturbation))},
                   {"episodes", r.spec.episodes},
                   {"success_rate", r.success_rate},
                   {"mean_final_distance_m", r.mean_final_distance_m},
                   {"median_episodes_to_first_success", r.median_episodes_to_first_success},
                   {"policy_bound_hit_fraction", r.policy_bound_hit_fraction},
                   {"seeds", seeds}};
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  return j;
}

CellResult run_cell(const ExperimentSpec& spec, const GridOptions& options) {
  spec.validate();
  CellResult cell;
  cell.spec = spec;
  std::vector<double> first_success;
  for (const std::uint64_t seed : spec.seeds) {
    std::unique_ptr<MetricsWriter> writer;
    fs::path run_dir;
    if (!options.out.empty()) {
      run_dir = options.out / "cells" / spec.slug() / ("seed_" + std::to_string(seed));
      fs::remove_all(run_dir);
      fs::create_directories(run_dir);
      writer = std::make_unique<MetricsWriter>(RunPaths{run_dir}.metrics());
    }
    TrainOptions topts;
    topts.metrics = writer.get();
    const TrainResult trained = train(spec, seed, topts);
    const EvalReport report = evaluate(trained.agent.get(), spec, seed, spec.eval_rollouts);

    SeedResult sr;
    sr.seed = seed;
    sr.success_rate = report.success_rate;
    sr.mean_final_distance_m = report.mean_final_distance_m;
    sr.episodes_to_first_success = trained.episodes_to_first_success;
    sr.policy_bound_hit_fraction = report.policy_bound_hit_fraction;
    cell.seeds.push_back(sr);
    first_success.push_back(sr.episodes_to_first_success);

    if (!run_dir.empty()) {
      writer.reset();
      const RunPaths paths{run_dir};
      if (!trained.demos.empty()) write_demos(paths.demos(), trained.demos);
      write_json_file(run_dir / "eval.json", {{"success_rate", report.success_rate},
                                              {"mean_final_distance_m", report.mean_final_distance_m},
                                              {"policy_bound_hit_fraction", report.policy_bound_hit_fraction},
                                              {"episodes_to_first_success", trained.episodes_to_first_success}});
      fs::create_directories(paths.curves());
      const auto rows = read_metrics(paths.metrics());
      if (!rows.empty()) {
        write_text_file(paths.curves() / "final_distance.svg",
                        learning_curve_svg(curve_data({rows}), spec.key() + " seed " + std::to_string(seed)));
      }
      nlohmann::json snapshot = spec;
      snapshot["seed"] = seed;
      save_run(run_dir, snapshot, seed, trained.agent.get());
    }
    if (options.verbose) {
      std::fprintf(stderr, "%s seed %llu: success %.2f, first success at episode %d\n", spec.key().c_str(),
                   static_cast<unsigned long long>(seed), sr.success_rate, sr.episodes_to_first_success);
    }
  }
  const double n = static_cast<double>(cell.seeds.size());
  for (const auto& s : cell.seeds) {
    cell.success_rate += s.success_rate / n;
    cell.mean_final_distance_m += s.mean_final_distance_m / n;
    cell.policy_bound_hit_fraction += s.policy_bound_hit_fraction / n;
  }
  cell.median_episodes_to_first_success = median(first_success);
  return cell;
}

std::vector<CellResult> run_grid(const std::vector<ExperimentSpec>& specs, const GridOptions& options) {
  if (specs.empty()) throw ConfigError("run_grid: no cells");
  std::vector<CellResult> results;
  for (const auto& spec : specs) {
    try {
      results.push_back(run_cell(spec, options));
    } catch (const std::exception& e) {
      CellResult failed;
      failed.spec = spec;
      failed.error = e.what();
      results.push_back(std::move(failed));
      if (options.verbose) std::fprintf(stderr, "%s failed: %s\n", spec.key().c_str(), e.what());
    }
  }
  if (!options.out.empty()) {
    write_table_csv(options.out / "table.csv", results);
    write_table_json(options.out / "table.json", results);
    write_grid_curves(options.out, results);
  }
  return results;
}

void write_table_csv(const fs::path& path, const std::vector<CellResult>& results) {
  std::string s =
      "method,algo,reward_mode,profile,perturbation,episodes,seeds,success_rate,mean_final_distance_m,"
      "median_episodes_to_first_success,policy_bound_hit_fraction,error\n";
  for (const auto& r : results) {
    const bool p_only = r.spec.method == Method::PControllerOnly;
    char nums[256];
    std::snprintf(nums, sizeof nums, "%d,%zu,%.17g,%.17g,%.17g,%.17g", r.spec.episodes, r.spec.seeds.size(),
                  r.success_rate, r.mean_final_distance_m, r.median_episodes_to_first_success,
                  r.policy_bound_hit_fraction);
    std::string err = r.error.value_or("");
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    s += std::string(to_string(r.spec.method)) + ',' + (p_only ? "-" : std::string(to_string(r.spec.algo))) +
         ',' + (p_only ? "-" : std::string(to_string(r.spec.reward_mode))) + ',' +
         std::string(to_string(r.spec.profile)) + ',' + std::string(to_string(r.spec.perturbation)) + ',' + nums +
         ',' + err + '\n';
  }
  write_text_file(path, s);
}

void write_table_json(const fs::path& path, const std::vector<CellResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) rows.push_back(to_json(r));
  write_json_file(path, {{"format", "insertion-table"}, {"version", 1}, {"rows", rows}});
}

void write_grid_curves(const fs::path& out, const std::vector<CellResult>& results) {
  const fs::path curves = out / "curves";
  fs::create_directories(curves);
  std::vector<Bar> bars;
  for (const auto& r : results) {
    bars.push_back({r.spec.key(), r.success_rate});
    if (r.error) continue;
    std::vector<std::vector<MetricsRow>> runs;
    for (const auto& s : r.seeds) {
      const fs::path m = out / "cells" / r.spec.slug() / ("seed_" + std::to_string(s.seed)) / "metrics.csv";
      if (fs::exists(m)) runs.push_back(read_metrics(m));
    }
    bool any = false;
    for (const auto& run : runs) any = any || !run.empty();
    if (!any) continue;
    write_text_file(curves / (r.spec.slug() + ".svg"), learning_curve_svg(curve_data(runs), r.spec.key()));
  }
  write_text_file(curves / "success.svg", bar_chart_svg(bars, "success rate over evaluation rollouts"));
}

std::vector<ExperimentSpec> default_grid() {
  using enum Method;
  std::vector<ExperimentSpec> grid;
  for (const auto profile : {ConnectorKind::UsbLike, ConnectorKind::DSubLike, ConnectorKind::ModelELike}) {
    for (const auto pert : {Perturbation::Perfect, Perturbation::Noisy1mm}) {
      grid.push_back(ExperimentSpec::make(PControllerOnly, Algo::SAC, RewardMode::Dense, profile, pert));
      grid.push_back(ExperimentSpec::make(ResidualRL, Algo::SAC, RewardMode::Dense, profile, pert));
      grid.push_back(ExperimentSpec::make(ResidualRL, Algo::TD3, RewardMode::Dense, profile, pert));
    }
    grid.push_back(ExperimentSpec::make(PureRL, Algo::SAC, RewardMode::Dense, profile, Perturbation::Perfect));
    grid.push_back(ExperimentSpec::make(RLfD, Algo::TD3, RewardMode::Dense, profile, Perturbation::Perfect));
    grid.push_back(ExperimentSpec::make(ResidualRL, Algo::SAC, RewardMode::Sparse, profile, Perturbation::Perfect));
    grid.push_back(ExperimentSpec::make(PureRL, Algo::SAC, RewardMode::Sparse, profile, Perturbation::Perfect));
  }
  for (const auto& [m, a] : {std::pair{ResidualRL, Algo::SAC}, {PureRL, Algo::SAC}, {PureRL, Algo::TD3}}) {
    auto s = ExperimentSpec::make(m, a, RewardMode::Image, ConnectorKind::ModelELike, Perturbation::Perfect);
    s.episodes = ExperimentSpec::default_episodes(ResidualRL);
    grid.push_back(s);
  }
  return grid;
}

}  // namespace insertion
