#pragma once

#include "insertion/render.hpp"
#include "insertion/sim.hpp"

#include <memory>
#include <string_view>

namespace insertion {

/// Weights of the shaped reward. The force weight flips sign once inserted.
struct DenseRewardParams {
  double alpha = 100.0;   // per metre of L1 distance
  double beta = 0.002;    // metre-weighted proximity bonus
  double phi = 0.1;       // per newton
  double epsilon = 1e-3;  // m

  void validate() const;
};

/// 1 if the insertion signal is present, 0 otherwise.
double sparse_reward(const EnvState& state);

double dense_reward(const Vec3& pos, double f_z, bool inserted, const Vec3& goal_estimate,
                    const DenseRewardParams& params = {});

/// Negated mean absolute pixel difference, in [-1, 0].
double image_reward(const Frame& frame, const Frame& goal_frame);
/// Same on raw pixel vectors; throws DimensionMismatch on unequal sizes.
double image_reward(const VecX& frame, const VecX& goal_frame);

enum class RewardMode { Dense, Sparse, Image };

std::string_view to_string(RewardMode mode);
RewardMode reward_mode_from_string(std::string_view name);

/// Everything needed to score a state under one reward mode.
struct RewardContext {
  RewardMode mode = RewardMode::Dense;
  DenseRewardParams dense;
  std::shared_ptr<const Frame> goal_frame;  // required for RewardMode::Image

  double operator()(const EnvState& state, const EnvConfig& config) const;
};

}  // namespace insertion
