#pragma once

#include "insertion/nn.hpp"
#include "insertion/replay.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace insertion {

enum class Algo { SAC, TD3 };

std::string_view to_string(Algo algo);
Algo algo_from_string(std::string_view name);

enum class ActMode { Train, Eval };

/// Hyperparameters shared by SAC and TD3; TD3- or SAC-only fields are ignored
/// by the other algorithm.
struct AgentConfig {
  int obs_dim = 4;
  /// Elementwise input scaling applied to observations before any network.
  VecX obs_scale = VecX::Ones(4);
  std::vector<int> hidden = {64, 64};

  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  int batch_size = 128;
  double action_bound = kActionBound;
  double final_layer_range = 3e-3;

  // TD3
  double exploration_noise_std = 0.1 * kActionBound;
  double target_noise_std = 0.2 * kActionBound;
  double target_noise_clip = 0.5 * kActionBound;
  int policy_delay = 2;
  double bc_weight = 1.0;

  // SAC
  double target_entropy = -3.0;
  double initial_temperature = 0.1;

  /// Defaults for the state-vector observation: positions in cm, force in
  /// tens of newtons.
  static AgentConfig for_state();
  /// Defaults for flattened 32x32 frames.
  static AgentConfig for_image();
};

void to_json(nlohmann::json& j, const AgentConfig& c);
void from_json(const nlohmann::json& j, AgentConfig& c);

struct UpdateStats {
  double critic_loss = 0.0;  // mean of the two critic losses
  std::optional<double> actor_loss;
  double temperature = 0.0;  // SAC only
};

/// Common interface of the off-policy learners. Actions are in metres.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual Algo algo() const = 0;
  virtual const AgentConfig& config() const = 0;
  virtual Vec3 select_action(const VecX& obs, ActMode mode, Rng& rng) const = 0;
  /// Batched eval-mode actions (3 x B).
  virtual MatX eval_actions(const MatX& obs) const = 0;
  /// One gradient step. `demo` enables the behaviour-cloning term (TD3 only).
  virtual UpdateStats update(const Batch& batch, Rng& rng, const Batch* demo = nullptr) = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;

  /// Named parameter sets, used for checkpoints and hashing.
  virtual std::vector<std::pair<std::string, const NetParams*>> networks() const = 0;
  virtual void load_network(const std::string& name, const NetParams& params) = 0;
  /// Scalar state not held in networks (update counters, temperature).
  virtual nlohmann::json scalar_state() const = 0;
  virtual void load_scalar_state(const nlohmann::json& j) = 0;
  /// Updates performed so far.
  virtual long steps() const = 0;
  /// Overwrite the actor with zeros (a frozen zero residual).
  virtual void zero_actor() = 0;
};

std::unique_ptr<Agent> make_agent(Algo algo, const AgentConfig& config, Rng& rng);

namespace detail {

/// Row-stack scaled observations with normalised actions.
MatX critic_input(const MatX& obs_scaled, const MatX& actions_norm);
MatX scale_obs(const MatX& obs, const VecX& scale);
/// 1 - tanh(u)^2 in log space, stable for large |u|.
Eigen::ArrayXXd log1m_tanh2(const Eigen::ArrayXXd& u);

}  // namespace detail

}  // namespace insertion
