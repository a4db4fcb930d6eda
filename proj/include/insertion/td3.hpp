#pragma once

#include "insertion/agent.hpp"

namespace insertion {

/// Twin delayed deterministic policy gradients, optionally with a
/// behaviour-cloning term on demonstration batches.
class Td3Agent final : public Agent {
 public:
  Td3Agent(const AgentConfig& config, Rng& rng);

  Algo algo() const override { return Algo::TD3; }
  const AgentConfig& config() const override { return config_; }
  Vec3 select_action(const VecX& obs, ActMode mode, Rng& rng) const override;
  MatX eval_actions(const MatX& obs) const override;
  UpdateStats update(const Batch& batch, Rng& rng, const Batch* demo = nullptr) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<Td3Agent>(*this); }
  std::vector<std::pair<std::string, const NetParams*>> networks() const override;
  void load_network(const std::string& name, const NetParams& params) override;
  nlohmann::json scalar_state() const override;
  void load_scalar_state(const nlohmann::json& j) override;
  long steps() const override { return critic_updates_; }
  void zero_actor() override { actor_.values.setZero(); }

  /// r + gamma (1 - done) min(Q1', Q2')(s', a'), with a' the target actor's
  /// action plus clipped Gaussian smoothing noise.
  VecX td_target(const Batch& batch, Rng& rng) const;
  /// Same with the smoothing noise disabled.
  VecX td_target_noiseless(const Batch& batch) const;

  struct CriticLosses {
    double q1 = 0.0;
    double q2 = 0.0;
  };
  CriticLosses critic_update(const Batch& batch, const VecX& targets);
  CriticLosses critic_update(const Batch& batch, Rng& rng) {
    return critic_update(batch, td_target(batch, rng));
  }

  /// Deterministic policy gradient on Q1. Runs on every policy_delay-th call
  /// (and then also moves all target networks); returns nullopt otherwise.
  std::optional<double> actor_update(const Batch& batch);

  struct BcLoss {
    double total = 0.0;
    double rl_term = 0.0;  // -mean Q1(s, pi(s))
    double bc_term = 0.0;  // mean ||(pi(s_d) - u_d) / bound||^2
  };
  /// Actor step on -mean Q1(s, pi(s)) + bc_weight * behaviour-cloning loss.
  /// Obeys the same delay schedule as actor_update. Throws on an empty
  /// demonstration batch.
  std::optional<BcLoss> bc_augmented_actor_update(const Batch& rl_batch, const Batch& demo_batch,
                                                  double bc_weight);

  NetParams& actor() { return actor_; }
  NetParams& actor_target() { return actor_target_; }
  NetParams& q1() { return q1_; }
  NetParams& q2() { return q2_; }
  NetParams& q1_target() { return q1_target_; }
  NetParams& q2_target() { return q2_target_; }
  const NetParams& actor() const { return actor_; }

 private:
  VecX target_from_actions(const Batch& batch, const MatX& next_scaled, const MatX& next_actions) const;
  bool actor_due();
  void move_targets();

  AgentConfig config_;
  NetParams actor_, actor_target_, q1_, q2_, q1_target_, q2_target_;
  AdamState actor_opt_, q1_opt_, q2_opt_;
  long critic_updates_ = 0;
  long actor_calls_ = 0;
};

}  // namespace insertion
