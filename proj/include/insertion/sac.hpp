#pragma once

#include "insertion/agent.hpp"

namespace insertion {

/// Pre-squash Gaussian of the policy for a batch of observations.
struct GaussianPolicy {
  MatX mean;     // 3 x B
  MatX log_std;  // 3 x B, clamped
};

/// Soft actor-critic with twin critics and a learned temperature (stored as
/// its logarithm). Actions are a tanh-squashed Gaussian scaled to the bound;
/// entropies are measured in normalised action units.
class SacAgent final : public Agent {
 public:
  SacAgent(const AgentConfig& config, Rng& rng);

  Algo algo() const override { return Algo::SAC; }
  const AgentConfig& config() const override { return config_; }
  Vec3 select_action(const VecX& obs, ActMode mode, Rng& rng) const override;
  MatX eval_actions(const MatX& obs) const override;
  UpdateStats update(const Batch& batch, Rng& rng, const Batch* demo = nullptr) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<SacAgent>(*this); }
  std::vector<std::pair<std::string, const NetParams*>> networks() const override;
  void load_network(const std::string& name, const NetParams& params) override;
  nlohmann::json scalar_state() const override;
  void load_scalar_state(const nlohmann::json& j) override;
  long steps() const override { return updates_; }
  void zero_actor() override { actor_.values.setZero(); }

  GaussianPolicy policy(const MatX& obs) const;

  /// Bellman targets r + gamma (1 - done) (min Q'(s', a') - alpha log pi(a'|s')).
  VecX td_target(const Batch& batch, Rng& rng) const;

  struct CriticLosses {
    double q1 = 0.0;
    double q2 = 0.0;
  };
  /// Regress both critics onto the given targets (one Adam step each), then
  /// move the target critics.
  CriticLosses critic_update(const Batch& batch, const VecX& targets);
  CriticLosses critic_update(const Batch& batch, Rng& rng) {
    return critic_update(batch, td_target(batch, rng));
  }

  struct ActorStats {
    double loss = 0.0;
    double log_prob = 0.0;  // batch mean
  };
  /// Reparameterised policy step followed by the temperature step.
  ActorStats actor_update(const Batch& batch, Rng& rng);

  double temperature() const { return std::exp(log_alpha_); }
  double log_temperature() const { return log_alpha_; }
  void set_log_temperature(double v) { log_alpha_ = v; }
  /// Disable the temperature update (for fixed-temperature experiments).
  void freeze_temperature(bool frozen) { temperature_frozen_ = frozen; }

  NetParams& actor() { return actor_; }
  NetParams& q1() { return q1_; }
  NetParams& q2() { return q2_; }
  NetParams& q1_target() { return q1_target_; }
  NetParams& q2_target() { return q2_target_; }
  const NetParams& actor() const { return actor_; }

 private:
  struct Sample {
    MatX action;    // normalised, 3 x B
    VecX log_prob;  // B
  };
  Sample sample(const MatX& obs_scaled, Rng& rng) const;

  AgentConfig config_;
  NetParams actor_, q1_, q2_, q1_target_, q2_target_;
  AdamState actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  double log_alpha_;
  bool temperature_frozen_ = false;
  long updates_ = 0;
};

}  // namespace insertion
