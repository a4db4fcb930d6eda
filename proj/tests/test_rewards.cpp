#include "insertion/rewards.hpp"

#include <doctest.h>

#include <cmath>

using namespace insertion;

TEST_CASE("dense reward scalar evaluations") {
  const Vec3 goal(0.01, -0.02, 0.003);
  const double at_goal = dense_reward(goal, 0.0, false, goal);
  CHECK(std::abs(at_goal - (-2.0)) <= 1e-12);

  const double cm = dense_reward(goal + Vec3(0.01, 0.0, 0.0), 0.0, false, goal);
  CHECK(std::abs(cm - (-1.0 - 0.002 / 0.011)) <= 1e-12);
  CHECK(std::abs(cm - (-1.18182)) <= 1e-5);

  const double seated = dense_reward(goal, 5.0, true, goal);
  CHECK(std::abs(seated - (-1.5)) <= 1e-12);
}

TEST_CASE("the force term flips sign once inserted") {
  const DenseRewardParams p;
  const Vec3 goal = Vec3::Zero();
  CHECK(dense_reward(goal, 5.0, true, goal) - dense_reward(goal, 5.0, false, goal) == 2.0 * p.phi * 5.0);

  Rng rng(17);
  std::uniform_real_distribution<double> pos(-0.03, 0.03), force(0.0, 50.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 x(pos(rng), pos(rng), pos(rng));
    const double f = force(rng);
    const double diff = dense_reward(x, f, true, goal) - dense_reward(x, f, false, goal);
    worst = std::max(worst, std::abs(diff - 2.0 * p.phi * f));
  }
  // Two roundings of a sum whose magnitude is a few units.
  CHECK(worst <= 1e-12);
}

TEST_CASE("dense reward parameters are validated") {
  DenseRewardParams p;
  CHECK_NOTHROW(p.validate());
  p.epsilon = 0.02;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.alpha = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("image reward identities") {
  Frame zero, one;
  one.pixels.setOnes();
  CHECK(image_reward(zero, zero) == 0.0);
  CHECK(image_reward(zero, one) == -1.0);
  CHECK(image_reward(one, zero) == -1.0);

  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Frame a, b;
    for (int i = 0; i < Frame::kPixels; ++i) {
      a.pixels[i] = u(rng);
      b.pixels[i] = u(rng);
    }
    const double r = image_reward(a, b);
    CHECK(r == image_reward(b, a));
    CHECK(r >= -1.0);
    CHECK(r < 0.0);
    CHECK(image_reward(a, a) == 0.0);
  }
  CHECK_THROWS_AS(image_reward(VecX::Zero(1024), VecX::Zero(1023)), DimensionMismatch);
}

TEST_CASE("sparse reward is the insertion flag") {
  Rng rng(9);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int i = 0; i < 1000000; ++i) {
    EnvState s;
    s.pos = Vec3(u(rng), u(rng), u(rng));
    s.inserted = coin(rng);
    const double r = sparse_reward(s);
    if (r != (s.inserted ? 1.0 : 0.0)) FAIL("sparse reward disagrees with the flag");
  }
}

TEST_CASE("reward context dispatches on the mode") {
  const EnvConfig c = EnvConfig::for_profile(ConnectorKind::UsbLike, 2);
  EnvState s;
  s.pos = c.goal_estimate;
  s.inserted = true;
  RewardContext ctx;
  ctx.mode = RewardMode::Sparse;
  CHECK(ctx(s, c) == 1.0);
  ctx.mode = RewardMode::Dense;
  CHECK(ctx(s, c) == dense_reward(s.pos, s.f_z, true, c.goal_estimate));
  ctx.mode = RewardMode::Image;
  CHECK_THROWS_AS(ctx(s, c), ConfigError);
  ctx.goal_frame = std::make_shared<const Frame>(render(s, c));
  CHECK(ctx(s, c) == 0.0);
  CHECK(reward_mode_from_string(to_string(RewardMode::Image)) == RewardMode::Image);
}
