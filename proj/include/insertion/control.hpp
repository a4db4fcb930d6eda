#pragma once

#include "insertion/rewards.hpp"
#include "insertion/sim.hpp"
#include "insertion/transition.hpp"

#include <vector>

namespace insertion {

/// Hand-engineered Cartesian P-controller, u = -k_p * (x - x*).
struct PController {
  Vec3 gains = Vec3(1.0, 1.0, 0.3);
  Vec3 goal_estimate = Vec3::Zero();
  double bound = kActionBound;
};

Action p_control(const Vec3& pos, const PController& ctrl);
/// The control law without the action bound.
Vec3 p_control_unclamped(const Vec3& pos, const PController& ctrl);

/// Executed action of residual RL: clamp(policy + P-controller).
Action residual_action(const Action& policy_action, const Vec3& pos, const PController& ctrl);

struct DemoOptions {
  double jitter_std = 2e-4;  // per-axis Gaussian jitter on executed actions (m)
  double wiggle = 5e-4;      // lateral offset added while blocked (m)
  double blocked_force = 1.0;
  int max_attempts = 5;
};

/// One scripted demonstration; `transitions` store the executed actions.
struct Demonstration {
  std::vector<Transition> transitions;
  int attempts = 0;
  int steps_to_insert = -1;
};

/// P-controller toward the true goal with jitter and a force-triggered
/// alternating lateral wiggle. Retries with fresh randomness and throws
/// DemoFailed after `max_attempts` unsuccessful rollouts.
Demonstration scripted_demo(const EnvConfig& config, const DemoOptions& options, Rng& rng,
                            const RewardContext& reward);

}  // namespace insertion
