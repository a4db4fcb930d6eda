#include "insertion/rewards.hpp"

namespace insertion {

void DenseRewardParams::validate() const {
  if (!(alpha > 0.0 && beta > 0.0 && phi > 0.0)) {
    throw ConfigError("dense reward weights must be positive");
  }
  if (!(epsilon > 0.0 && epsilon <= 0.01)) throw ConfigError("epsilon must lie in (0, 0.01]");
}

double sparse_reward(const EnvState& state) { return state.inserted ? 1.0 : 0.0; }

double dense_reward(const Vec3& pos, double f_z, bool inserted, const Vec3& goal_estimate,
                    const DenseRewardParams& params) {
  const Vec3 err = pos - goal_estimate;
  const double phi = inserted ? -params.phi : params.phi;
  return -params.alpha * err.lpNorm<1>() - params.beta / (err.norm() + params.epsilon) - phi * f_z;
}

double image_reward(const VecX& frame, const VecX& goal_frame) {
  if (frame.size() != goal_frame.size()) {
    throw DimensionMismatch("image_reward: frames differ in size");
  }
  if (frame.size() == 0) return 0.0;
  return -(frame - goal_frame).cwiseAbs().sum() / static_cast<double>(frame.size());
}

double image_reward(const Frame& frame, const Frame& goal_frame) {
  return image_reward(frame.pixels, goal_frame.pixels);
}

std::string_view to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::Dense: return "dense";
    case RewardMode::Sparse: return "sparse";
    case RewardMode::Image: return "image";
  }
  return "dense";
}

RewardMode reward_mode_from_string(std::string_view name) {
  if (name == "dense") return RewardMode::Dense;
  if (name == "sparse") return RewardMode::Sparse;
  if (name == "image") return RewardMode::Image;
  throw ConfigError("unknown reward_mode '" + std::string(name) + "'");
}

double RewardContext::operator()(const EnvState& state, const EnvConfig& config) const {
  switch (mode) {
    case RewardMode::Sparse: return sparse_reward(state);
    case RewardMode::Dense:
      return dense_reward(state.pos, state.f_z, state.inserted, config.goal_estimate, dense);
    case RewardMode::Image:
      if (!goal_frame) throw ConfigError("image reward requires a goal frame");
      return image_reward(render(state, config), *goal_frame);
  }
  return 0.0;
}

}  // namespace insertion
