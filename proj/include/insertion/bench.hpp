#pragma once

#include "insertion/agent.hpp"
#include "insertion/control.hpp"
#include "insertion/persist.hpp"
#include "insertion/rewards.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace insertion {

enum class Method { PureRL, ResidualRL, RLfD, PControllerOnly };
enum class Perturbation { Perfect, Noisy1mm };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
std::string_view to_string(Perturbation p);
Perturbation perturbation_from_string(std::string_view name);

/// Maximum lateral goal-estimate error of the Noisy1mm setting (m).
inline constexpr double kGoalPerturbation = 0.001;

/// One cell of the benchmark grid.
struct ExperimentSpec {
  Method method = Method::ResidualRL;
  Algo algo = Algo::SAC;
  RewardMode reward_mode = RewardMode::Dense;
  ConnectorKind profile = ConnectorKind::UsbLike;
  int episodes = 150;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  Perturbation perturbation = Perturbation::Perfect;

  int eval_rollouts = 25;
  int demos = 10;                   // RLfD only
  bool store_policy_action = true;  // residual: store u_t rather than the executed action
  std::optional<AgentConfig> agent;  // overrides the observation-mode defaults

  /// Default training budget: 300 episodes for pure RL, 150 otherwise.
  static int default_episodes(Method m);
  static ExperimentSpec make(Method m, Algo algo, RewardMode reward, ConnectorKind profile,
                             Perturbation perturbation);

  void validate() const;
  ObservationMode observation() const;
  AgentConfig agent_config() const;
  /// Table key "method/algo/reward/profile/perturbation"; algo and reward
  /// are "-" for the P-controller.
  std::string key() const;
  /// Filesystem-safe form of key().
  std::string slug() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

/// Goal estimate for a rollout: exact, or offset uniformly in
/// [-1 mm, 1 mm] on each lateral axis.
Vec3 perturbed_goal(const Vec3& goal, Perturbation p, Rng& rng);

struct EpisodeRecord {
  int episode = 0;  // 1-based
  double ret = 0.0;
  double final_distance_m = 0.0;
  bool success = false;  // inserted at any step
};

struct TrainOptions {
  MetricsWriter* metrics = nullptr;
  /// Keep the actor at zero (no actor updates), for the zero-residual check.
  bool freeze_zero_actor = false;
  /// Demonstrations used instead of collecting fresh ones (RLfD).
  const std::vector<Demonstration>* demos = nullptr;
};

struct TrainResult {
  std::unique_ptr<Agent> agent;  // null for the P-controller
  std::vector<EpisodeRecord> episodes;
  std::vector<Demonstration> demos;
  /// 1-based episode of the first successful training rollout, or
  /// episodes + 1 if none succeeded.
  int episodes_to_first_success = 0;
};

/// Algorithm 1: episodes of residual (or pure) RL with one update per step.
/// Deterministic given (spec, seed).
TrainResult train(const ExperimentSpec& spec, std::uint64_t seed, const TrainOptions& options = {});

struct RolloutRecord {
  bool success = false;
  double final_distance_m = 0.0;
  Vec3 goal_offset = Vec3::Zero();  // goal_estimate - goal
  int steps = 0;
  int policy_bound_hits = 0;  // steps where the learned action saturates on some axis
};

struct EvalReport {
  double success_rate = 0.0;
  double mean_final_distance_m = 0.0;
  double policy_bound_hit_fraction = 0.0;
  std::vector<RolloutRecord> rollouts;
};

/// Eval-mode rollouts; `agent` may be null only for PControllerOnly. Never
/// modifies the agent.
EvalReport evaluate(const Agent* agent, const ExperimentSpec& spec, std::uint64_t seed,
                    int n_rollouts = 25);

/// True when |u_i| reaches the bound (to a relative 1e-6) on some axis.
bool hits_bound(const Vec3& u, double bound);

struct SeedResult {
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_final_distance_m = 0.0;
  int episodes_to_first_success = 0;
  double policy_bound_hit_fraction = 0.0;
};

struct CellResult {
  ExperimentSpec spec;
  std::vector<SeedResult> seeds;
  double success_rate = 0.0;  // mean over seeds
  double mean_final_distance_m = 0.0;
  double median_episodes_to_first_success = 0.0;
  double policy_bound_hit_fraction = 0.0;
  std::optional<std::string> error;
};

nlohmann::json to_json(const CellResult& r);

struct GridOptions {
  std::filesystem::path out;  // empty: keep nothing on disk
  bool verbose = false;
};

/// Trains and evaluates every seed of one cell. With an output directory,
/// each seed gets a run directory under cells/<slug>/seed_<n>/.
CellResult run_cell(const ExperimentSpec& spec, const GridOptions& options = {});

/// Runs every cell (a failing cell is recorded and the grid continues) and,
/// with an output directory, writes table.csv, table.json and curves/*.svg.
std::vector<CellResult> run_grid(const std::vector<ExperimentSpec>& specs, const GridOptions& options);

void write_table_csv(const std::filesystem::path& path, const std::vector<CellResult>& results);
void write_table_json(const std::filesystem::path& path, const std::vector<CellResult>& results);
/// curves/<slug>.svg for every cell with run directories, plus curves/success.svg.
void write_grid_curves(const std::filesystem::path& out, const std::vector<CellResult>& results);

/// The method x reward x connector comparison grid at the default budgets.
std::vector<ExperimentSpec> default_grid();

double median(std::vector<double> values);

}  // namespace insertion
