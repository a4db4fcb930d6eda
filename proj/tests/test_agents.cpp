#include "oracles.hpp"

#include "insertion/replay.hpp"
#include "insertion/sac.hpp"
#include "insertion/td3.hpp"

#include <doctest.h>

#include <cstring>
#include <map>

using namespace insertion;

namespace {

AgentConfig small_config() {
  AgentConfig c;
  c.hidden = {16, 16};
  return c;
}

Transition tagged(double tag, int obs_dim = 4) {
  Transition t;
  t.obs = VecX::Constant(obs_dim, tag);
  t.next_obs = VecX::Constant(obs_dim, tag + 1.0);
  t.reward = tag;
  return t;
}

Batch random_batch(Rng& rng, int n, int obs_dim = 4) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution coin(0.3);
  std::vector<Transition> items;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.obs.resize(obs_dim);
    t.next_obs.resize(obs_dim);
    for (auto& v : t.obs) v = u(rng);
    for (auto& v : t.next_obs) v = u(rng);
    t.action = kActionBound * Vec3(u(rng), u(rng), u(rng));
    t.reward = u(rng);
    t.done = coin(rng);
    items.push_back(std::move(t));
  }
  return Batch::from(items);
}

/// Make a critic that ignores its input and returns `value`.
void make_constant(NetParams& net, double value) {
  const int last = net.spec.layer_count() - 1;
  net.weight(last).setZero();
  net.bias(last).setConstant(value);
}

/// Q(s, u) of one critic, evaluated independently of the agents' batching.
VecX q_values(const NetParams& q, const MatX& obs, const MatX& actions, double bound) {
  VecX out(obs.cols());
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    VecX x(obs.rows() + 3);
    x << obs.col(k), actions.col(k) / bound;
    out[k] = oracle::forward(q, x)[0];
  }
  return out;
}

bool bit_equal(const VecX& a, const VecX& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Replay buffer

TEST_CASE("a single stored item is returned every time") {
  ReplayBuffer buf(10);
  buf.push(tagged(7.0));
  Rng rng(1);
  const Batch b = buf.sample(64, rng);
  CHECK((b.rewards.array() == 7.0).all());
  CHECK((b.obs.array() == 7.0).all());
}

TEST_CASE("the ring evicts the oldest item first") {
  ReplayBuffer buf(3);
  for (int i = 1; i <= 4; ++i) buf.push(tagged(i));
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(1).reward == 3.0);
  CHECK(buf.at(2).reward == 4.0);
  Rng rng(2);
  const Batch b = buf.sample(1000, rng);
  CHECK((b.rewards.array() != 1.0).all());
  for (double tag : {2.0, 3.0, 4.0}) CHECK((b.rewards.array() == tag).any());
  for (int i = 5; i <= 9; ++i) buf.push(tagged(i));
  CHECK(buf.at(0).reward == 7.0);
  CHECK(buf.at(2).reward == 9.0);
}

TEST_CASE("sampling is uniform over stored items") {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(tagged(i));
  Rng rng(3);
  std::map<double, int> counts;
  const int draws = 100000;
  for (int k = 0; k < draws / 100; ++k) {
    const Batch b = buf.sample(100, rng);
    for (Eigen::Index j = 0; j < b.size(); ++j) ++counts[b.rewards[j]];
  }
  REQUIRE(counts.size() == 10);
  double chi2 = 0.0;
  for (const auto& [tag, n] : counts) {
    const double freq = static_cast<double>(n) / draws;
    CHECK(freq >= 0.09);
    CHECK(freq <= 0.11);
    chi2 += std::pow(n - draws / 10.0, 2) / (draws / 10.0);
  }
  // 9 degrees of freedom, 99.9th percentile.
  CHECK(chi2 < 27.88);
}

TEST_CASE("sampling an empty buffer is an error") {
  ReplayBuffer buf(4);
  Rng rng(4);
  CHECK_THROWS_AS(buf.sample(1, rng), Error);
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
}

// ---------------------------------------------------------------------------
// Bellman targets

TEST_CASE("terminal transitions do not bootstrap") {
  Rng rng(5);
  Td3Agent td3(small_config(), rng);
  SacAgent sac(small_config(), rng);
  Batch b = random_batch(rng, 8);
  b.rewards.setOnes();
  b.done.setOnes();
  CHECK((td3.td_target(b, rng).array() == 1.0).all());
  CHECK((sac.td_target(b, rng).array() == 1.0).all());
}

TEST_CASE("TD3 target with known target critics") {
  Rng rng(6);
  Td3Agent td3(small_config(), rng);
  make_constant(td3.q1_target(), 2.0);
  make_constant(td3.q2_target(), 3.0);
  Batch b = random_batch(rng, 5);
  b.rewards.setOnes();
  b.done.setZero();
  const VecX y = td3.td_target_noiseless(b);
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - 2.98) <= 1e-15);
}

TEST_CASE("targets never exceed either single-critic target") {
  Rng rng(7);
  Td3Agent td3(small_config(), rng);
  SacAgent sac(small_config(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    // Independent target critics so the minimum actually bites.
    td3.q1_target() = NetParams::init(td3.q1_target().spec, rng, 1.0);
    td3.q2_target() = NetParams::init(td3.q2_target().spec, rng, 1.0);
    const Batch b = random_batch(rng, 32);
    const MatX next = detail::scale_obs(b.next_obs, td3.config().obs_scale);
    const MatX a = mlp_eval(td3.actor_target(), next);
    const VecX y = td3.td_target_noiseless(b);
    const VecX y1 = b.rewards.array() +
                    0.99 * (1.0 - b.done.array()) * q_values(td3.q1_target(), next, a, kActionBound).array();
    const VecX y2 = b.rewards.array() +
                    0.99 * (1.0 - b.done.array()) * q_values(td3.q2_target(), next, a, kActionBound).array();
    CHECK(((y.array() <= y1.array() + 1e-12) && (y.array() <= y2.array() + 1e-12)).all());
    CHECK((y.array() >= y1.array().min(y2.array()) - 1e-12).all());

    // SAC: the same sampled a' with each target critic duplicated.
    sac.q1_target() = NetParams::init(sac.q1_target().spec, rng, 1.0);
    sac.q2_target() = NetParams::init(sac.q2_target().spec, rng, 1.0);
    SacAgent only1 = sac, only2 = sac;
    only1.q2_target() = sac.q1_target();
    only2.q1_target() = sac.q2_target();
    Rng r0(trial), r1(trial), r2(trial);
    const VecX ys = sac.td_target(b, r0);
    CHECK((ys.array() <= only1.td_target(b, r1).array() + 1e-12).all());
    CHECK((ys.array() <= only2.td_target(b, r2).array() + 1e-12).all());
  }
}

TEST_CASE("SAC target approaches the deterministic target as temperature vanishes") {
  Rng rng(8);
  SacAgent sac(small_config(), rng);
  sac.q1_target() = NetParams::init(sac.q1_target().spec, rng, 1.0);
  sac.q2_target() = NetParams::init(sac.q2_target().spec, rng, 1.0);
  NetParams& actor = sac.actor();
  const int last = actor.spec.layer_count() - 1;
  actor.bias(last).tail(3).setConstant(-100.0);  // log-std clamped at its minimum
  sac.set_log_temperature(std::log(1e-8));
  const Batch b = random_batch(rng, 16);
  const VecX y = sac.td_target(b, rng);

  const MatX next = detail::scale_obs(b.next_obs, sac.config().obs_scale);
  VecX expected(b.size());
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const VecX out = oracle::forward(actor, next.col(k));
    const VecX a = kActionBound * out.head(3).array().tanh();
    VecX x1(7);
    x1 << next.col(k), a / kActionBound;
    const double q = std::min(oracle::forward(sac.q1_target(), x1)[0], oracle::forward(sac.q2_target(), x1)[0]);
    expected[k] = b.rewards[k] + 0.99 * (1.0 - b.done[k]) * q;
  }
  // Residual: temperature * log-density at std e^-20, about 1e-8 * 60.
  CHECK((y - expected).cwiseAbs().maxCoeff() <= 1e-5);
}

// ---------------------------------------------------------------------------
// Critic regression

TEST_CASE("critics at their targets do not move") {
  Rng rng(9);
  for (Algo algo : {Algo::SAC, Algo::TD3}) {
    const Batch b = random_batch(rng, 16);
    auto check = [&](auto& agent) {
      agent.q2() = agent.q1();
      const MatX obs = detail::scale_obs(b.obs, agent.config().obs_scale);
      const VecX current = mlp_eval(agent.q1(), detail::critic_input(obs, b.actions / kActionBound)).row(0).transpose();
      const VecX before = agent.q1().values;
      const auto losses = agent.critic_update(b, current);
      CHECK(losses.q1 == 0.0);
      CHECK(bit_equal(agent.q1().values, before));
      CHECK(bit_equal(agent.q2().values, before));
    };
    if (algo == Algo::SAC) {
      SacAgent a(small_config(), rng);
      check(a);
    } else {
      Td3Agent a(small_config(), rng);
      check(a);
    }
  }
}

TEST_CASE("one critic step moves Q toward the target and reports the MSE") {
  Rng rng(10);
  Td3Agent td3(small_config(), rng);
  const Batch one = random_batch(rng, 1);
  const double q0 = q_values(td3.q1(), one.obs, one.actions, kActionBound)[0];
  VecX y(1);
  y[0] = q0 + 0.5;
  const auto losses = td3.critic_update(one, y);
  CHECK(losses.q1 == doctest::Approx(0.25).epsilon(1e-12));
  const double q1 = q_values(td3.q1(), one.obs, one.actions, kActionBound)[0];
  CHECK(q1 > q0);
  CHECK(q1 < y[0]);

  SacAgent sac(small_config(), rng);
  const Batch b = random_batch(rng, 32);
  std::normal_distribution<double> n;
  VecX targets(32);
  for (auto& v : targets) v = n(rng);
  const VecX qa = q_values(sac.q1(), b.obs, b.actions, kActionBound);
  const VecX qb = q_values(sac.q2(), b.obs, b.actions, kActionBound);
  const auto l = sac.critic_update(b, targets);
  CHECK(l.q1 == doctest::Approx((qa - targets).squaredNorm() / 32.0).epsilon(1e-12));
  CHECK(l.q2 == doctest::Approx((qb - targets).squaredNorm() / 32.0).epsilon(1e-12));
}

TEST_CASE("target critics are exact moving averages") {
  Rng rng(11);
  SacAgent sac(small_config(), rng);
  const VecX prev = sac.q1_target().values;
  const Batch b = random_batch(rng, 16);
  sac.critic_update(b, rng);
  const double tau = sac.config().tau;
  const VecX expected = tau * sac.q1().values + (1.0 - tau) * prev;
  CHECK((sac.q1_target().values - expected).cwiseAbs().maxCoeff() == 0.0);

  Td3Agent td3(small_config(), rng);
  td3.critic_update(b, rng);
  const VecX actor_prev = td3.actor_target().values, q_prev = td3.q2_target().values;
  td3.actor_update(b);
  REQUIRE(td3.actor_update(b).has_value());
  CHECK((td3.actor_target().values - (tau * td3.actor().values + (1.0 - tau) * actor_prev)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((td3.q2_target().values - (tau * td3.q2().values + (1.0 - tau) * q_prev)).cwiseAbs().maxCoeff() == 0.0);
}

// ---------------------------------------------------------------------------
// Actor updates

TEST_CASE("TD3 actor is unchanged under a flat critic and updates on every second call") {
  Rng rng(12);
  Td3Agent flat(small_config(), rng);
  make_constant(flat.q1(), 4.0);
  const Batch b = random_batch(rng, 16);
  const VecX before = flat.actor().values;
  flat.actor_update(b);
  CHECK(flat.actor_update(b).value() == doctest::Approx(-4.0));
  CHECK(bit_equal(flat.actor().values, before));

  Td3Agent td3(small_config(), rng);
  td3.q1() = NetParams::init(td3.q1().spec, rng, 1.0);
  std::vector<bool> changed;
  for (int call = 1; call <= 6; ++call) {
    const VecX prev = td3.actor().values;
    const bool ran = td3.actor_update(b).has_value();
    CHECK(ran == (call % 2 == 0));
    changed.push_back(!bit_equal(prev, td3.actor().values));
  }
  CHECK(changed == std::vector<bool>{false, true, false, true, false, true});
}

TEST_CASE("SAC under a flat critic raises its log-std") {
  Rng rng(13);
  SacAgent sac(small_config(), rng);
  make_constant(sac.q1(), 1.0);
  make_constant(sac.q2(), 1.0);
  NetParams& actor = sac.actor();
  actor.bias(actor.spec.layer_count() - 1).tail(3).setConstant(-2.0);
  const Batch b = random_batch(rng, 64);
  auto mean_log_std = [&] { return sac.policy(b.obs).log_std.mean(); };
  double prev = mean_log_std();
  CHECK(prev == doctest::Approx(-2.0).epsilon(0.01));
  int increases = 0;
  for (int t = 0; t < 100; ++t) {
    sac.actor_update(b, rng);
    const double now = mean_log_std();
    increases += now > prev;
    prev = now;
    CHECK(sac.temperature() > 0.0);
  }
  CHECK(increases == 100);
  CHECK(prev > -2.0 + 0.01);
}

TEST_CASE("actions respect the bound in every mode") {
  Rng rng(14);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (Algo algo : {Algo::SAC, Algo::TD3}) {
    AgentConfig c = small_config();
    c.final_layer_range = 3.0;  // saturating outputs
    auto agent = make_agent(algo, c, rng);
    for (int i = 0; i < 10000; ++i) {
      VecX obs(4);
      for (auto& v : obs) v = u(rng);
      const ActMode mode = i % 2 ? ActMode::Train : ActMode::Eval;
      const Vec3 a = agent->select_action(obs, mode, rng);
      if (a.cwiseAbs().maxCoeff() > kActionBound) FAIL("action outside the bound");
    }
  }
}

TEST_CASE("TD3 evaluation is deterministic") {
  Rng rng(15);
  Td3Agent td3(small_config(), rng);
  const VecX obs = VecX::Random(4);
  Rng r1(1), r2(2);
  CHECK(td3.select_action(obs, ActMode::Eval, r1) == td3.select_action(obs, ActMode::Eval, r2));
  CHECK(td3.select_action(obs, ActMode::Train, r1) != td3.select_action(obs, ActMode::Train, r2));
}

TEST_CASE("SAC training actions have the predicted spread") {
  Rng rng(16);
  SacAgent sac(small_config(), rng);
  NetParams& actor = sac.actor();
  actor.bias(actor.spec.layer_count() - 1).tail(3) << -1.0, -0.5, 0.0;
  const VecX obs = VecX::Random(4);
  const GaussianPolicy p = sac.policy(obs);
  const int n = 10000;
  Eigen::MatrixXd pre(3, n);
  for (int i = 0; i < n; ++i) {
    const Vec3 a = sac.select_action(obs, ActMode::Train, rng);
    pre.col(i) = (a / kActionBound).array().atanh();
  }
  for (int d = 0; d < 3; ++d) {
    const double mean = pre.row(d).mean();
    const double sd = std::sqrt((pre.row(d).array() - mean).square().sum() / (n - 1));
    const double predicted = std::exp(p.log_std(d, 0));
    CHECK(std::abs(sd - predicted) <= 0.1 * predicted);
    CHECK(std::abs(mean - p.mean(d, 0)) <= 0.05 * predicted + 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Behaviour cloning

TEST_CASE("zero BC weight is plain TD3") {
  Rng rng(17);
  Td3Agent a(small_config(), rng);
  a.q1() = NetParams::init(a.q1().spec, rng, 1.0);
  Td3Agent b = a;
  const Batch rl = random_batch(rng, 16), demo = random_batch(rng, 8);
  for (int i = 0; i < 4; ++i) {
    a.actor_update(rl);
    b.bc_augmented_actor_update(rl, demo, 0.0);
  }
  CHECK(bit_equal(a.actor().values, b.actor().values));
  CHECK(bit_equal(a.actor_target().values, b.actor_target().values));
}

TEST_CASE("a dominant BC weight fits the demonstrations") {
  Rng rng(18);
  AgentConfig c = small_config();
  c.policy_delay = 1;
  Td3Agent td3(c, rng);
  make_constant(td3.q1(), 0.0);
  const Batch rl = random_batch(rng, 16);
  const Batch demo = random_batch(rng, 10);
  const MatX demo_obs = detail::scale_obs(demo.obs, c.obs_scale);
  auto normalised_mse = [&] {
    return ((mlp_eval(td3.actor(), demo_obs) - demo.actions) / kActionBound).array().square().mean();
  };
  const double initial = normalised_mse();
  for (int i = 0; i < 2000; ++i) td3.bc_augmented_actor_update(rl, demo, 1e6);
  const double mse_m2 = (mlp_eval(td3.actor(), demo_obs) - demo.actions).array().square().mean();
  const double mse = normalised_mse();
  MESSAGE("BC fit MSE " << mse_m2 << " m^2, normalised " << initial << " -> " << mse);
  CHECK(mse_m2 < 1e-3);
  CHECK(mse < initial / 100.0);
}

TEST_CASE("BC loss decomposes into its two terms") {
  Rng rng(19);
  Td3Agent td3(small_config(), rng);
  td3.q1() = NetParams::init(td3.q1().spec, rng, 1.0);
  const Batch rl = random_batch(rng, 16), demo = random_batch(rng, 8);
  td3.bc_augmented_actor_update(rl, demo, 2.5);  // first call is skipped by the delay

  const MatX obs = detail::scale_obs(rl.obs, td3.config().obs_scale);
  const MatX pi = mlp_eval(td3.actor(), obs);
  const double rl_term = -q_values(td3.q1(), obs, pi, kActionBound).mean();
  const MatX pd = mlp_eval(td3.actor(), detail::scale_obs(demo.obs, td3.config().obs_scale));
  const double bc_term = ((pd - demo.actions) / kActionBound).colwise().squaredNorm().mean();

  const auto loss = td3.bc_augmented_actor_update(rl, demo, 2.5);
  REQUIRE(loss.has_value());
  CHECK(loss->rl_term == doctest::Approx(rl_term).epsilon(1e-12));
  CHECK(loss->bc_term == doctest::Approx(bc_term).epsilon(1e-12));
  CHECK(loss->total == doctest::Approx(rl_term + 2.5 * bc_term).epsilon(1e-12));
  CHECK_THROWS_AS(td3.bc_augmented_actor_update(rl, Batch{}, 1.0), Error);
}

// ---------------------------------------------------------------------------

TEST_CASE("updates are deterministic in the agent state, batch and rng") {
  for (Algo algo : {Algo::SAC, Algo::TD3}) {
    Rng ra(20), rb(20);
    auto a = make_agent(algo, small_config(), ra);
    auto b = make_agent(algo, small_config(), rb);
    Rng data(21);
    for (int t = 0; t < 50; ++t) {
      const Batch batch = random_batch(data, 32);
      a->update(batch, ra);
      b->update(batch, rb);
    }
    const auto na = a->networks(), nb = b->networks();
    for (std::size_t i = 0; i < na.size(); ++i) CHECK(bit_equal(na[i].second->values, nb[i].second->values));
    CHECK(a->scalar_state() == b->scalar_state());
  }
}
