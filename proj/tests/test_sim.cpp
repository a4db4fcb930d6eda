#include "oracles.hpp"

#include "insertion/control.hpp"
#include "insertion/sim.hpp"

#include <doctest.h>

#include <limits>

using namespace insertion;

namespace {

EnvConfig quiet(ConnectorKind kind) {
  EnvConfig c = EnvConfig::for_profile(kind, 7);
  c.actuator_noise_std = 0.0;
  return c;
}

}  // namespace

TEST_CASE("profiles are ordered by difficulty") {
  const auto usb = ConnectorProfile::preset(ConnectorKind::UsbLike);
  const auto dsub = ConnectorProfile::preset(ConnectorKind::DSubLike);
  const auto mode = ConnectorProfile::preset(ConnectorKind::ModelELike);
  CHECK(usb.clearance > dsub.clearance);
  CHECK(dsub.clearance > mode.clearance);
  CHECK(usb.resistance_force < dsub.resistance_force);
  CHECK(dsub.resistance_force < mode.resistance_force);
  CHECK(mode.clearance == 0.0004);

  ConnectorProfile bad = usb;
  bad.clearance = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = usb;
  bad.resistance_force = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("reset puts the plug 5 cm above the goal with a calibrated sensor") {
  EnvConfig c = quiet(ConnectorKind::UsbLike);
  c.goal = Vec3::Zero();
  c.goal_estimate = Vec3::Zero();
  InsertionEnv env(c);
  const EnvState s = env.reset(11);
  CHECK(s.pos == Vec3(0.0, 0.0, 0.05));
  CHECK(s.f_z == 0.0);
  CHECK_FALSE(s.inserted);
  CHECK(s.step_index == 0);
}

TEST_CASE("zero bias range makes raw and calibrated force identical") {
  EnvConfig c = EnvConfig::for_profile(ConnectorKind::DSubLike, 5);
  c.sensor_bias_range = 0.0;
  InsertionEnv env(c);
  env.reset(5);
  const PController ctrl{.goal_estimate = c.goal + Vec3(0.003, 0.0, 0.0)};
  while (!env.done()) {
    const StepResult r = env.step(p_control(env.state().pos, ctrl));
    CHECK(r.info.raw_f_z == r.state.f_z);
  }
}

TEST_CASE("equal seeds give identical trajectories") {
  const EnvConfig c = EnvConfig::for_profile(ConnectorKind::ModelELike, 9);
  InsertionEnv a(c), b(c);
  CHECK(a.reset(42).pos == b.reset(42).pos);
  CHECK(a.sensor_bias() == b.sensor_bias());
  Rng rng(1);
  std::uniform_real_distribution<double> u(-0.006, 0.006);
  while (!a.done()) {
    const Action act{Vec3(u(rng), u(rng), u(rng))};
    const StepResult ra = a.step(act);
    const StepResult rb = b.step(act);
    CHECK(ra.state.pos == rb.state.pos);
    CHECK(ra.state.f_z == rb.state.f_z);
    CHECK(ra.state.inserted == rb.state.inserted);
  }
}

TEST_CASE("free-space motion integrates the command exactly") {
  InsertionEnv env(quiet(ConnectorKind::UsbLike));
  const Vec3 start = env.reset(1).pos;
  const StepResult r = env.step(Action{Vec3(0.0, 0.0, -0.002)});
  CHECK(r.state.pos.x() == start.x());
  CHECK(r.state.pos.y() == start.y());
  CHECK(r.state.pos.z() == start.z() + (-0.002));
  CHECK(r.state.f_z == 0.0);
  CHECK_FALSE(r.info.contact);
}

TEST_CASE("a plug beside the opening is stopped by the face plate") {
  const EnvConfig c = quiet(ConnectorKind::UsbLike);
  const Vec3 on_face(c.goal.x() + 0.003, c.goal.y(), c.profile.surface_height);
  const ContactResult r = resolve_contact(on_face, on_face + Vec3(0.0, 0.0, -0.002), c);
  CHECK(r.pos == on_face);
  CHECK(r.f_z == doctest::Approx(c.profile.wall_stiffness * 0.002).epsilon(1e-12));
  CHECK(r.contact);

  // The same through the environment: push down beside the opening.
  InsertionEnv env(c);
  env.reset(1);
  const PController ctrl{.goal_estimate = on_face};
  double last_fz = 0.0;
  while (!env.done()) last_fz = env.step(p_control(env.state().pos, ctrl)).state.f_z;
  CHECK(std::abs(env.state().pos.z() - c.profile.surface_height) < 1e-6);
  CHECK(last_fz == 0.0);  // the set-point approaches the face from above
}

TEST_CASE("projection agrees with a brute-force grid search") {
  // Every projected point must be feasible, and no feasible grid point may be
  // cheaper (under the stiffness metric) by more than the grid's resolution.
  Rng rng(2024);
  for (auto kind : {ConnectorKind::UsbLike, ConnectorKind::ModelELike}) {
    const EnvConfig c = EnvConfig::for_profile(kind);
    const oracle::Socket s = oracle::socket_of(c);
    std::uniform_real_distribution<double> lat(-0.0025, 0.0025), vert(-0.018, 0.002);
    for (int trial = 0; trial < 40; ++trial) {
      const Vec3 target(c.goal.x() + lat(rng), c.goal.y() + lat(rng), vert(rng));
      const Vec3 p = project_to_feasible(target, c);
      CHECK(oracle::free_point(s, p.x(), p.y(), p.z(), 1e-9));
      const double cost = oracle::stiffness_cost(p, target);

      const double step_xy = 2.5e-5, step_z = 2.5e-4;
      double best = std::numeric_limits<double>::infinity();
      for (int i = -40; i <= 40; ++i) {
        for (int j = -40; j <= 40; ++j) {
          for (int k = -80; k <= 12; ++k) {
            const double x = target.x() + i * step_xy, y = target.y() + j * step_xy;
            const double z = target.z() + k * step_z * 0.25;
            if (!oracle::free_point(s, x, y, z)) continue;
            best = std::min(best, oracle::stiffness_cost(Vec3(x, y, z), target));
          }
        }
      }
      // Grid resolution bound on the cost of the best grid neighbour.
      const double slack = 1000.0 * 2.0 * std::pow(step_xy, 2) + std::pow(step_z * 0.25, 2) +
                           2.0 * std::sqrt(cost) * (std::sqrt(1000.0 * 2.0) * step_xy + step_z * 0.25);
      if (std::isfinite(best)) CHECK(cost <= best + slack);
    }
  }
}

TEST_CASE("friction absorbs part of the descent inside the bore") {
  const EnvConfig c = quiet(ConnectorKind::UsbLike);
  const Vec3 from(c.goal.x(), c.goal.y(), c.profile.surface_height - 0.002);
  const double dz = 0.002;
  const double k = c.profile.wall_stiffness, R = c.profile.resistance_force;
  REQUIRE(k * dz > R);
  // Quasi-static balance: the wall penalty on the blocked part of the command
  // equals the resistance, so the plug advances dz - R / k.
  const double expected_descent = dz - R / k;
  const ContactResult r = resolve_contact(from, from - Vec3(0.0, 0.0, dz), c);
  CHECK(from.z() - r.pos.z() == doctest::Approx(expected_descent).epsilon(1e-12));
  CHECK(r.f_z == doctest::Approx(R).epsilon(1e-9));

  EnvConfig stuck = c;
  stuck.profile.resistance_force = std::numeric_limits<double>::infinity();
  const ContactResult r2 = resolve_contact(from, from - Vec3(0.0, 0.0, dz), stuck);
  CHECK(r2.pos.z() == from.z());
  CHECK(r2.f_z == doctest::Approx(k * dz).epsilon(1e-12));

  // Below the resistance threshold nothing moves.
  const ContactResult r3 = resolve_contact(from, from - Vec3(0.0, 0.0, 0.5 * R / k), c);
  CHECK(r3.pos.z() == from.z());
}

TEST_CASE("rollouts never penetrate the socket") {
  Rng rng(77);
  std::uniform_real_distribution<double> u(-0.008, 0.008);
  for (auto kind : {ConnectorKind::UsbLike, ConnectorKind::DSubLike, ConnectorKind::ModelELike}) {
    const EnvConfig c = EnvConfig::for_profile(kind, 3);
    const oracle::Socket s = oracle::socket_of(c);
    InsertionEnv env(c);
    for (int ep = 0; ep < 30; ++ep) {
      env.reset();
      const PController ctrl{.goal_estimate = c.goal + Vec3(u(rng) / 8, u(rng) / 8, 0.0)};
      while (!env.done()) {
        Vec3 a = p_control(env.state().pos, ctrl).delta + 0.3 * Vec3(u(rng), u(rng), u(rng));
        const Vec3 p = env.step(Action{a}).state.pos;
        CHECK(oracle::free_point(s, p.x(), p.y(), p.z(), 1e-9));
        CHECK(feasibility_margin(p, c) >= -1e-9);
      }
    }
  }
}

TEST_CASE("commands are clamped, including non-finite inputs") {
  InsertionEnv env(quiet(ConnectorKind::UsbLike));
  env.reset(1);
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const Vec3& raw : {Vec3(1.0, -1.0, 0.0), Vec3(inf, -inf, nan), Vec3(nan, nan, nan),
                          Vec3(1e300, 0.001, -1e-300)}) {
    const StepResult r = env.step(Action{raw});
    CHECK(r.info.applied_delta.cwiseAbs().maxCoeff() <= kActionBound);
    CHECK(r.info.applied_delta.allFinite());
    CHECK(r.state.pos.allFinite());
  }
}

TEST_CASE("harder profiles never insert earlier under a held descent") {
  auto steps_to_insert = [](EnvConfig c) {
    c.actuator_noise_std = 0.0;
    InsertionEnv env(c);
    env.reset(0);
    while (!env.done()) {
      if (env.step(Action{Vec3(0.0, 0.0, -kActionBound)}).state.inserted) return env.state().step_index;
    }
    return c.horizon + 1;
  };
  const int usb = steps_to_insert(EnvConfig::for_profile(ConnectorKind::UsbLike));
  const int dsub = steps_to_insert(EnvConfig::for_profile(ConnectorKind::DSubLike));
  const int mode = steps_to_insert(EnvConfig::for_profile(ConnectorKind::ModelELike));
  CHECK(usb <= dsub);
  CHECK(dsub <= mode);
  CHECK(usb <= 50);

  EnvConfig base = EnvConfig::for_profile(ConnectorKind::DSubLike);
  EnvConfig tighter = base;
  tighter.profile.resistance_force = 40.0;
  CHECK(steps_to_insert(base) <= steps_to_insert(tighter));
}

TEST_CASE("first free-space step reads zero force for any bias") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EnvConfig c = EnvConfig::for_profile(ConnectorKind::ModelELike, seed);
    c.sensor_bias_range = 25.0;
    InsertionEnv env(c);
    env.reset(seed);
    const StepResult r = env.step(Action{Vec3(0.001, 0.0, -0.001)});
    CHECK(std::abs(r.state.f_z) <= 1e-12);
    CHECK(std::abs(r.info.raw_f_z - env.sensor_bias()) <= 1e-12);
  }
}

TEST_CASE("stepping past the horizon is an error") {
  EnvConfig c = quiet(ConnectorKind::UsbLike);
  c.horizon = 2;
  InsertionEnv env(c);
  env.reset(0);
  env.step(Action{});
  CHECK(env.step(Action{}).info.done);
  CHECK_THROWS_AS(env.step(Action{}), TerminalStepError);
}

TEST_CASE("state observation is goal-estimate centred") {
  EnvConfig c = quiet(ConnectorKind::UsbLike);
  EnvState s;
  s.pos = c.goal_estimate;
  CHECK(observe(s, c, ObservationMode::StateVector) == VecX::Zero(4));

  c.goal_estimate = c.goal + Vec3(0.001, 0.0, 0.0);
  s.pos = c.goal;
  s.f_z = 2.5;
  const VecX o = observe(s, c, ObservationMode::StateVector);
  CHECK(o[0] == doctest::Approx(-0.001).epsilon(1e-12));
  CHECK(o[1] == 0.0);
  CHECK(o[3] == 2.5);

  CHECK(observe(s, c, ObservationMode::Image) == observe(s, c, ObservationMode::Image));
  CHECK(observe(s, c, ObservationMode::Image).size() == 1024);
}

TEST_CASE("inserted flag follows depth and lateral offset") {
  const EnvConfig c = quiet(ConnectorKind::DSubLike);
  const double deep = c.profile.surface_height - c.profile.socket_depth;
  CHECK(insertion_condition(Vec3(c.goal.x(), c.goal.y(), deep), c));
  CHECK_FALSE(insertion_condition(Vec3(c.goal.x(), c.goal.y(), deep + 1e-6), c));
  CHECK(insertion_condition(Vec3(c.goal.x() + c.profile.clearance, c.goal.y(), deep - 0.001), c));
  CHECK_FALSE(insertion_condition(Vec3(c.goal.x() + c.profile.clearance * 1.001, c.goal.y(), deep), c));
}

TEST_CASE("P-controller inserts with a perfect goal and misses with 1.5 mm of error") {
  InsertionEnv usb(quiet(ConnectorKind::UsbLike));
  usb.reset(0);
  const PController good{.goal_estimate = usb.config().goal};
  bool inserted = false;
  while (!usb.done()) inserted = usb.step(p_control(usb.state().pos, good)).state.inserted || inserted;
  CHECK(inserted);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const EnvConfig c = EnvConfig::for_profile(ConnectorKind::ModelELike, seed);
    InsertionEnv env(c);
    env.reset(seed);
    const PController off{.goal_estimate = c.goal + Vec3(0.0015, 0.0, 0.0)};
    bool any = false;
    while (!env.done()) any = env.step(p_control(env.state().pos, off)).state.inserted || any;
    CHECK_FALSE(any);
  }
}

TEST_CASE("EnvConfig JSON uses exactly the documented field names") {
  const EnvConfig c = EnvConfig::for_profile(ConnectorKind::ModelELike, 12);
  const nlohmann::json j = c;
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  CHECK(keys == std::vector<std::string>{"actuator_noise_std", "goal", "goal_estimate", "horizon", "profile",
                                         "reset_height", "rng_seed", "sensor_bias_range"});
  std::vector<std::string> pkeys;
  for (const auto& [k, _] : j.at("profile").items()) pkeys.push_back(k);
  std::sort(pkeys.begin(), pkeys.end());
  CHECK(pkeys == std::vector<std::string>{"clearance", "name", "resistance_force", "socket_depth",
                                          "surface_height", "wall_stiffness"});
  CHECK(j.get<EnvConfig>() == c);

  nlohmann::json extra = j;
  extra["start_jitter"] = 0.0;
  CHECK_THROWS_AS(extra.get<EnvConfig>(), ConfigError);
  nlohmann::json missing = j;
  missing.erase("horizon");
  CHECK_THROWS_AS(missing.get<EnvConfig>(), ConfigError);
}
