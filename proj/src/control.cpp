#include "insertion/control.hpp"

namespace insertion {

Vec3 p_control_unclamped(const Vec3& pos, const PController& ctrl) {
  return -ctrl.gains.cwiseProduct(pos - ctrl.goal_estimate);
}

Action p_control(const Vec3& pos, const PController& ctrl) {
  return {clamp_action(p_control_unclamped(pos, ctrl), ctrl.bound)};
}

Action residual_action(const Action& policy_action, const Vec3& pos, const PController& ctrl) {
  return {clamp_action(policy_action.delta + p_control(pos, ctrl).delta, ctrl.bound)};
}

Demonstration scripted_demo(const EnvConfig& config, const DemoOptions& options, Rng& rng,
                            const RewardContext& reward) {
  EnvConfig demo_config = config;
  demo_config.goal_estimate = config.goal;
  const PController ctrl{.goal_estimate = demo_config.goal};
  const ObservationMode mode =
      reward.mode == RewardMode::Image ? ObservationMode::Image : ObservationMode::StateVector;

  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    InsertionEnv env(demo_config);
    env.reset(rng());

    Demonstration demo;
    demo.attempts = attempt;
    int wiggle_sign = 1;
    VecX obs = observe(env.state(), demo_config, mode);
    while (!env.done()) {
      const EnvState& s = env.state();
      Vec3 u = p_control(s.pos, ctrl).delta;
      if (options.jitter_std > 0.0) {
        for (int i = 0; i < 3; ++i) u[i] += options.jitter_std * jitter(rng);
      }
      if (s.f_z > options.blocked_force && !s.inserted) {
        u.x() += wiggle_sign * options.wiggle;
        u.y() += wiggle_sign * options.wiggle;
        wiggle_sign = -wiggle_sign;
      }
      u = clamp_action(u);

      const StepResult res = env.step(Action{u});
      VecX next = observe(res.state, demo_config, mode);
      demo.transitions.push_back(
          Transition{obs, u, reward(res.state, demo_config), next, false});
      obs = std::move(next);
      if (res.state.inserted && demo.steps_to_insert < 0) demo.steps_to_insert = res.state.step_index;
    }
    if (demo.steps_to_insert >= 0 && env.state().inserted) return demo;
  }
  throw DemoFailed("scripted demonstration failed after " + std::to_string(options.max_attempts) +
                   " attempts");
}

}  // namespace insertion
