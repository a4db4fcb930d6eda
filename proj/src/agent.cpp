#include "insertion/agent.hpp"

#include "insertion/render.hpp"
#include "insertion/sac.hpp"
#include "insertion/td3.hpp"

namespace insertion {

std::string_view to_string(Algo algo) { return algo == Algo::TD3 ? "TD3" : "SAC"; }

Algo algo_from_string(std::string_view name) {
  if (name == "SAC" || name == "sac") return Algo::SAC;
  if (name == "TD3" || name == "td3") return Algo::TD3;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

AgentConfig AgentConfig::for_state() {
  AgentConfig c;
  c.obs_dim = 4;
  c.obs_scale = VecX(4);
  c.obs_scale << 100.0, 100.0, 100.0, 0.1;
  c.hidden = {64, 64};
  return c;
}

AgentConfig AgentConfig::for_image() {
  AgentConfig c;
  c.obs_dim = Frame::kPixels;
  c.obs_scale = VecX::Ones(Frame::kPixels);
  c.hidden = {128, 64};
  return c;
}

void to_json(nlohmann::json& j, const AgentConfig& c) {
  j = nlohmann::json{{"obs_dim", c.obs_dim},
                     {"obs_scale", std::vector<double>(c.obs_scale.data(), c.obs_scale.data() + c.obs_scale.size())},
                     {"hidden", c.hidden},
                     {"gamma", c.gamma},
                     {"tau", c.tau},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"action_bound", c.action_bound},
                     {"final_layer_range", c.final_layer_range},
                     {"exploration_noise_std", c.exploration_noise_std},
                     {"target_noise_std", c.target_noise_std},
                     {"target_noise_clip", c.target_noise_clip},
                     {"policy_delay", c.policy_delay},
                     {"bc_weight", c.bc_weight},
                     {"target_entropy", c.target_entropy},
                     {"initial_temperature", c.initial_temperature}};
}

void from_json(const nlohmann::json& j, AgentConfig& c) {
  c.obs_dim = j.at("obs_dim").get<int>();
  const auto scale = j.at("obs_scale").get<std::vector<double>>();
  c.obs_scale = Eigen::Map<const VecX>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.gamma = j.at("gamma").get<double>();
  c.tau = j.at("tau").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.action_bound = j.at("action_bound").get<double>();
  c.final_layer_range = j.at("final_layer_range").get<double>();
  c.exploration_noise_std = j.at("exploration_noise_std").get<double>();
  c.target_noise_std = j.at("target_noise_std").get<double>();
  c.target_noise_clip = j.at("target_noise_clip").get<double>();
  c.policy_delay = j.at("policy_delay").get<int>();
  c.bc_weight = j.at("bc_weight").get<double>();
  c.target_entropy = j.at("target_entropy").get<double>();
  c.initial_temperature = j.at("initial_temperature").get<double>();
  if (c.obs_scale.size() != c.obs_dim) throw ConfigError("obs_scale length must equal obs_dim");
}

std::unique_ptr<Agent> make_agent(Algo algo, const AgentConfig& config, Rng& rng) {
  if (config.obs_scale.size() != config.obs_dim) {
    throw ConfigError("obs_scale length must equal obs_dim");
  }
  if (algo == Algo::SAC) return std::make_unique<SacAgent>(config, rng);
  return std::make_unique<Td3Agent>(config, rng);
}

namespace detail {

MatX critic_input(const MatX& obs_scaled, const MatX& actions_norm) {
  MatX x(obs_scaled.rows() + actions_norm.rows(), obs_scaled.cols());
  x.topRows(obs_scaled.rows()) = obs_scaled;
  x.bottomRows(actions_norm.rows()) = actions_norm;
  return x;
}

MatX scale_obs(const MatX& obs, const VecX& scale) {
  if (obs.rows() != scale.size()) {
    throw DimensionMismatch("observation length " + std::to_string(obs.rows()) +
                            " does not match the agent (" + std::to_string(scale.size()) + ")");
  }
  return scale.asDiagonal() * obs;
}

Eigen::ArrayXXd log1m_tanh2(const Eigen::ArrayXXd& u) {
  const Eigen::ArrayXXd a = u.abs();
  // log(1 - tanh(u)^2) = 2 (log 2 - |u| - log(1 + exp(-2|u|)))
  return 2.0 * (std::log(2.0) - a - (-2.0 * a).exp().log1p());
}

}  // namespace detail

}  // namespace insertion
