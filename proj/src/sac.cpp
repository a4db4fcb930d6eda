#include "insertion/sac.hpp"

#include <numbers>

namespace insertion {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

MatX standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatX m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  }
  return m;
}

PolicySpec actor_spec(const AgentConfig& c) {
  PolicySpec s;
  s.input_dim = c.obs_dim;
  s.hidden = c.hidden;
  s.output_dim = 2 * kActionDim;
  s.output = OutputKind::Gaussian;
  return s;
}

PolicySpec critic_spec(const AgentConfig& c) {
  PolicySpec s;
  s.input_dim = c.obs_dim + kActionDim;
  s.hidden = c.hidden;
  s.output_dim = 1;
  s.output = OutputKind::Linear;
  return s;
}

}  // namespace

SacAgent::SacAgent(const AgentConfig& config, Rng& rng)
    : config_(config),
      actor_(NetParams::init(actor_spec(config), rng, config.final_layer_range)),
      q1_(NetParams::init(critic_spec(config), rng, config.final_layer_range)),
      q2_(NetParams::init(critic_spec(config), rng, config.final_layer_range)),
      q1_target_(q1_),
      q2_target_(q2_),
      actor_opt_(AdamState::zeros(actor_.values.size())),
      q1_opt_(AdamState::zeros(q1_.values.size())),
      q2_opt_(AdamState::zeros(q2_.values.size())),
      alpha_opt_(AdamState::zeros(1)),
      log_alpha_(std::log(config.initial_temperature)) {}

GaussianPolicy SacAgent::policy(const MatX& obs) const {
  const MatX out = mlp_eval(actor_, detail::scale_obs(obs, config_.obs_scale));
  return {out.topRows(kActionDim), out.bottomRows(kActionDim)};
}

SacAgent::Sample SacAgent::sample(const MatX& obs_scaled, Rng& rng) const {
  const MatX out = mlp_eval(actor_, obs_scaled);
  const Eigen::ArrayXXd mean = out.topRows(kActionDim).array();
  const Eigen::ArrayXXd log_std = out.bottomRows(kActionDim).array();
  const Eigen::ArrayXXd xi = standard_normal(kActionDim, out.cols(), rng).array();
  const Eigen::ArrayXXd u = mean + log_std.exp() * xi;
  Sample s;
  s.action = u.tanh().matrix();
  const Eigen::ArrayXXd lp = -0.5 * xi.square() - log_std - kHalfLog2Pi - detail::log1m_tanh2(u);
  s.log_prob = lp.colwise().sum().transpose().matrix();
  return s;
}

Vec3 SacAgent::select_action(const VecX& obs, ActMode mode, Rng& rng) const {
  const MatX x = detail::scale_obs(MatX(obs), config_.obs_scale);
  if (mode == ActMode::Eval) {
    const VecX out = mlp_eval(actor_, x).col(0);
    return config_.action_bound * out.head<kActionDim>().array().tanh().matrix();
  }
  const Sample s = sample(x, rng);
  return config_.action_bound * s.action.col(0);
}

MatX SacAgent::eval_actions(const MatX& obs) const {
  const MatX out = mlp_eval(actor_, detail::scale_obs(obs, config_.obs_scale));
  return config_.action_bound * out.topRows(kActionDim).array().tanh().matrix();
}

VecX SacAgent::td_target(const Batch& batch, Rng& rng) const {
  const MatX next = detail::scale_obs(batch.next_obs, config_.obs_scale);
  const Sample s = sample(next, rng);
  const MatX x = detail::critic_input(next, s.action);
  const VecX q1 = mlp_eval(q1_target_, x).row(0).transpose();
  const VecX q2 = mlp_eval(q2_target_, x).row(0).transpose();
  const VecX soft = q1.cwiseMin(q2) - temperature() * s.log_prob;
  return batch.rewards.array() + config_.gamma * (1.0 - batch.done.array()) * soft.array();
}

SacAgent::CriticLosses SacAgent::critic_update(const Batch& batch, const VecX& targets) {
  const double n = static_cast<double>(batch.size());
  const MatX x = detail::critic_input(detail::scale_obs(batch.obs, config_.obs_scale),
                                      batch.actions / config_.action_bound);
  CriticLosses losses;
  auto regress = [&](NetParams& q, AdamState& opt) {
    Forward f = mlp_forward(q, x);
    const Eigen::RowVectorXd diff = f.output.row(0) - targets.transpose();
    const double loss = diff.squaredNorm() / n;
    if (!std::isfinite(loss)) throw NonFiniteError("SAC critic loss is not finite");
    const Gradients g = backward(f.tape, MatX(2.0 * diff / n), true, false);
    adam_step(q.values, g.params, opt, {.lr = config_.lr});
    return loss;
  };
  losses.q1 = regress(q1_, q1_opt_);
  losses.q2 = regress(q2_, q2_opt_);
  soft_update(q1_target_.values, q1_.values, config_.tau);
  soft_update(q2_target_.values, q2_.values, config_.tau);
  return losses;
}

SacAgent::ActorStats SacAgent::actor_update(const Batch& batch, Rng& rng) {
  const Eigen::Index b = batch.size();
  const double n = static_cast<double>(b);
  const MatX obs = detail::scale_obs(batch.obs, config_.obs_scale);

  Forward fa = mlp_forward(actor_, obs);
  const Eigen::ArrayXXd mean = fa.output.topRows(kActionDim).array();
  const Eigen::ArrayXXd log_std = fa.output.bottomRows(kActionDim).array();
  const Eigen::ArrayXXd std_dev = log_std.exp();
  const Eigen::ArrayXXd xi = standard_normal(kActionDim, b, rng).array();
  const Eigen::ArrayXXd u = mean + std_dev * xi;
  const Eigen::ArrayXXd a = u.tanh();
  const Eigen::ArrayXXd lp_terms = -0.5 * xi.square() - log_std - kHalfLog2Pi - detail::log1m_tanh2(u);
  const VecX log_prob = lp_terms.colwise().sum().transpose().matrix();

  const MatX x = detail::critic_input(obs, a.matrix());
  Forward f1 = mlp_forward(q1_, x);
  Forward f2 = mlp_forward(q2_, x);
  const Eigen::RowVectorXd q1 = f1.output.row(0);
  const Eigen::RowVectorXd q2 = f2.output.row(0);
  MatX g1 = MatX::Zero(1, b), g2 = MatX::Zero(1, b);
  Eigen::RowVectorXd qmin(b);
  for (Eigen::Index k = 0; k < b; ++k) {
    if (q1[k] <= q2[k]) {
      qmin[k] = q1[k];
      g1(0, k) = -1.0 / n;
    } else {
      qmin[k] = q2[k];
      g2(0, k) = -1.0 / n;
    }
  }
  const double alpha = temperature();
  const double loss = (alpha * log_prob.sum() - qmin.sum()) / n;
  if (!std::isfinite(loss)) throw NonFiniteError("SAC actor loss is not finite");

  const Gradients c1 = backward(f1.tape, g1, false, true);
  const Gradients c2 = backward(f2.tape, g2, false, true);
  const Eigen::ArrayXXd dq_da = (c1.input + c2.input).bottomRows(kActionDim).array();

  const Eigen::ArrayXXd d_u = alpha * 2.0 * a / n + dq_da * (1.0 - a.square());
  MatX d_out(2 * kActionDim, b);
  d_out.topRows(kActionDim) = d_u.matrix();
  d_out.bottomRows(kActionDim) = (-alpha / n + d_u * std_dev * xi).matrix();
  const Gradients ga = backward(fa.tape, d_out, true, false);
  adam_step(actor_.values, ga.params, actor_opt_, {.lr = config_.lr});

  if (!temperature_frozen_) {
    VecX la(1);
    la[0] = log_alpha_;
    VecX grad(1);
    grad[0] = -(log_prob.array() + config_.target_entropy).mean();
    adam_step(la, grad, alpha_opt_, {.lr = config_.lr});
    log_alpha_ = la[0];
  }
  return {loss, log_prob.mean()};
}

UpdateStats SacAgent::update(const Batch& batch, Rng& rng, const Batch* /*demo*/) {
  const CriticLosses cl = critic_update(batch, rng);
  const ActorStats as = actor_update(batch, rng);
  ++updates_;
  return {0.5 * (cl.q1 + cl.q2), as.loss, temperature()};
}

std::vector<std::pair<std::string, const NetParams*>> SacAgent::networks() const {
  return {{"actor", &actor_},
          {"q1", &q1_},
          {"q2", &q2_},
          {"q1_target", &q1_target_},
          {"q2_target", &q2_target_}};
}

void SacAgent::load_network(const std::string& name, const NetParams& params) {
  NetParams* slot = name == "actor"       ? &actor_
                    : name == "q1"        ? &q1_
                    : name == "q2"        ? &q2_
                    : name == "q1_target" ? &q1_target_
                    : name == "q2_target" ? &q2_target_
                                          : nullptr;
  if (slot == nullptr) throw Error("SAC agent has no network '" + name + "'");
  if (!(slot->spec == params.spec)) throw DimensionMismatch("network spec mismatch for '" + name + "'");
  *slot = params;
}

nlohmann::json SacAgent::scalar_state() const {
  return {{"updates", updates_}, {"log_temperature", log_alpha_}};
}

void SacAgent::load_scalar_state(const nlohmann::json& j) {
  updates_ = j.at("updates").get<long>();
  log_alpha_ = j.at("log_temperature").get<double>();
}

}  // namespace insertion
