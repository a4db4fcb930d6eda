#include "insertion/td3.hpp"

namespace insertion {

namespace {

PolicySpec actor_spec(const AgentConfig& c) {
  PolicySpec s;
  s.input_dim = c.obs_dim;
  s.hidden = c.hidden;
  s.output_dim = kActionDim;
  s.output = OutputKind::TanhScaled;
  s.output_scale = c.action_bound;
  return s;
}

PolicySpec critic_spec(const AgentConfig& c) {
  PolicySpec s;
  s.input_dim = c.obs_dim + kActionDim;
  s.hidden = c.hidden;
  s.output_dim = 1;
  return s;
}

}  // namespace

Td3Agent::Td3Agent(const AgentConfig& config, Rng& rng)
    : config_(config),
      actor_(NetParams::init(actor_spec(config), rng, config.final_layer_range)),
      actor_target_(actor_),
      q1_(NetParams::init(critic_spec(config), rng, config.final_layer_range)),
      q2_(NetParams::init(critic_spec(config), rng, config.final_layer_range)),
      q1_target_(q1_),
      q2_target_(q2_),
      actor_opt_(AdamState::zeros(actor_.values.size())),
      q1_opt_(AdamState::zeros(q1_.values.size())),
      q2_opt_(AdamState::zeros(q2_.values.size())) {}

Vec3 Td3Agent::select_action(const VecX& obs, ActMode mode, Rng& rng) const {
  const VecX scaled = config_.obs_scale.cwiseProduct(obs);
  if (obs.size() != config_.obs_scale.size()) throw DimensionMismatch("TD3: observation size mismatch");
  Vec3 a = mlp_eval(actor_, scaled);
  if (mode == ActMode::Train && config_.exploration_noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, config_.exploration_noise_std);
    for (int i = 0; i < kActionDim; ++i) a[i] += n(rng);
  }
  return clamp_action(a, config_.action_bound);
}

MatX Td3Agent::eval_actions(const MatX& obs) const {
  return mlp_eval(actor_, detail::scale_obs(obs, config_.obs_scale));
}

VecX Td3Agent::target_from_actions(const Batch& batch, const MatX& next_scaled,
                                   const MatX& next_actions) const {
  const MatX x = detail::critic_input(next_scaled, next_actions / config_.action_bound);
  const VecX q1 = mlp_eval(q1_target_, x).row(0).transpose();
  const VecX q2 = mlp_eval(q2_target_, x).row(0).transpose();
  return batch.rewards.array() + config_.gamma * (1.0 - batch.done.array()) * q1.cwiseMin(q2).array();
}

VecX Td3Agent::td_target(const Batch& batch, Rng& rng) const {
  const MatX next = detail::scale_obs(batch.next_obs, config_.obs_scale);
  MatX a = mlp_eval(actor_target_, next);
  std::normal_distribution<double> n(0.0, config_.target_noise_std);
  const double clip = config_.target_noise_clip;
  const double bound = config_.action_bound;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double eps = config_.target_noise_std > 0.0 ? std::clamp(n(rng), -clip, clip) : 0.0;
      a(r, c) = std::clamp(a(r, c) + eps, -bound, bound);
    }
  }
  return target_from_actions(batch, next, a);
}

VecX Td3Agent::td_target_noiseless(const Batch& batch) const {
  const MatX next = detail::scale_obs(batch.next_obs, config_.obs_scale);
  return target_from_actions(batch, next, mlp_eval(actor_target_, next));
}

Td3Agent::CriticLosses Td3Agent::critic_update(const Batch& batch, const VecX& targets) {
  const double n = static_cast<double>(batch.size());
  const MatX x = detail::critic_input(detail::scale_obs(batch.obs, config_.obs_scale),
                                      batch.actions / config_.action_bound);
  auto regress = [&](NetParams& q, AdamState& opt) {
    Forward f = mlp_forward(q, x);
    const Eigen::RowVectorXd diff = f.output.row(0) - targets.transpose();
    const double loss = diff.squaredNorm() / n;
    if (!std::isfinite(loss)) throw NonFiniteError("TD3 critic loss is not finite");
    const Gradients g = backward(f.tape, MatX(2.0 * diff / n), true, false);
    adam_step(q.values, g.params, opt, {.lr = config_.lr});
    return loss;
  };
  CriticLosses losses;
  losses.q1 = regress(q1_, q1_opt_);
  losses.q2 = regress(q2_, q2_opt_);
  ++critic_updates_;
  return losses;
}

bool Td3Agent::actor_due() {
  ++actor_calls_;
  return actor_calls_ % std::max(1, config_.policy_delay) == 0;
}

void Td3Agent::move_targets() {
  soft_update(actor_target_.values, actor_.values, config_.tau);
  soft_update(q1_target_.values, q1_.values, config_.tau);
  soft_update(q2_target_.values, q2_.values, config_.tau);
}

std::optional<double> Td3Agent::actor_update(const Batch& batch) {
  if (!actor_due()) return std::nullopt;
  const double n = static_cast<double>(batch.size());
  const MatX obs = detail::scale_obs(batch.obs, config_.obs_scale);
  Forward fa = mlp_forward(actor_, obs);
  Forward fq = mlp_forward(q1_, detail::critic_input(obs, fa.output / config_.action_bound));
  const double loss = -fq.output.sum() / n;
  if (!std::isfinite(loss)) throw NonFiniteError("TD3 actor loss is not finite");
  const Gradients gq = backward(fq.tape, MatX::Constant(1, batch.size(), -1.0 / n), false, true);
  const MatX d_a = gq.input.bottomRows(kActionDim) / config_.action_bound;
  const Gradients ga = backward(fa.tape, d_a, true, false);
  adam_step(actor_.values, ga.params, actor_opt_, {.lr = config_.lr});
  move_targets();
  return loss;
}

std::optional<Td3Agent::BcLoss> Td3Agent::bc_augmented_actor_update(const Batch& rl_batch,
                                                                   const Batch& demo_batch,
                                                                   double bc_weight) {
  if (demo_batch.size() == 0) throw Error("behaviour cloning needs a non-empty demonstration batch");
  if (!actor_due()) return std::nullopt;
  const double bound = config_.action_bound;

  const double n = static_cast<double>(rl_batch.size());
  const MatX obs = detail::scale_obs(rl_batch.obs, config_.obs_scale);
  Forward fa = mlp_forward(actor_, obs);
  Forward fq = mlp_forward(q1_, detail::critic_input(obs, fa.output / bound));
  BcLoss out;
  out.rl_term = -fq.output.sum() / n;
  const Gradients gq = backward(fq.tape, MatX::Constant(1, rl_batch.size(), -1.0 / n), false, true);
  Gradients ga = backward(fa.tape, MatX(gq.input.bottomRows(kActionDim) / bound), true, false);

  const double nd = static_cast<double>(demo_batch.size());
  const MatX demo_obs = detail::scale_obs(demo_batch.obs, config_.obs_scale);
  Forward fd = mlp_forward(actor_, demo_obs);
  const MatX err = (fd.output - demo_batch.actions) / bound;
  out.bc_term = err.colwise().squaredNorm().sum() / nd;
  out.total = out.rl_term + bc_weight * out.bc_term;
  if (!std::isfinite(out.total)) throw NonFiniteError("TD3+BC actor loss is not finite");
  if (bc_weight != 0.0) {
    const Gradients gd = backward(fd.tape, MatX(bc_weight * 2.0 * err / (bound * nd)), true, false);
    ga.params += gd.params;
  }
  adam_step(actor_.values, ga.params, actor_opt_, {.lr = config_.lr});
  move_targets();
  return out;
}

UpdateStats Td3Agent::update(const Batch& batch, Rng& rng, const Batch* demo) {
  const CriticLosses cl = critic_update(batch, rng);
  UpdateStats stats;
  stats.critic_loss = 0.5 * (cl.q1 + cl.q2);
  if (demo != nullptr) {
    if (auto l = bc_augmented_actor_update(batch, *demo, config_.bc_weight)) stats.actor_loss = l->total;
  } else {
    stats.actor_loss = actor_update(batch);
  }
  return stats;
}

std::vector<std::pair<std::string, const NetParams*>> Td3Agent::networks() const {
  return {{"actor", &actor_},       {"actor_target", &actor_target_}, {"q1", &q1_},
          {"q2", &q2_},             {"q1_target", &q1_target_},       {"q2_target", &q2_target_}};
}

void Td3Agent::load_network(const std::string& name, const NetParams& params) {
  NetParams* slot = name == "actor"          ? &actor_
                    : name == "actor_target" ? &actor_target_
                    : name == "q1"           ? &q1_
                    : name == "q2"           ? &q2_
                    : name == "q1_target"    ? &q1_target_
                    : name == "q2_target"    ? &q2_target_
                                             : nullptr;
  if (slot == nullptr) throw Error("TD3 agent has no network '" + name + "'");
  if (!(slot->spec == params.spec)) throw DimensionMismatch("network spec mismatch for '" + name + "'");
  *slot = params;
}

nlohmann::json Td3Agent::scalar_state() const {
  return {{"critic_updates", critic_updates_}, {"actor_calls", actor_calls_}};
}

void Td3Agent::load_scalar_state(const nlohmann::json& j) {
  critic_updates_ = j.at("critic_updates").get<long>();
  actor_calls_ = j.at("actor_calls").get<long>();
}

}  // namespace insertion
