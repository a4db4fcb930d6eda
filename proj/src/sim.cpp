#include "insertion/sim.hpp"

#include "insertion/render.hpp"

#include <array>
#include <limits>

namespace insertion {

std::string_view to_string(ConnectorKind kind) {
  switch (kind) {
    case ConnectorKind::UsbLike: return "UsbLike";
    case ConnectorKind::DSubLike: return "DSubLike";
    case ConnectorKind::ModelELike: return "ModelELike";
  }
  return "UsbLike";
}

ConnectorKind connector_from_string(std::string_view name) {
  if (name == "UsbLike" || name == "usb") return ConnectorKind::UsbLike;
  if (name == "DSubLike" || name == "dsub") return ConnectorKind::DSubLike;
  if (name == "ModelELike" || name == "model-e" || name == "modele") return ConnectorKind::ModelELike;
  throw ConfigError("unknown connector profile '" + std::string(name) + "'");
}

ConnectorProfile ConnectorProfile::preset(ConnectorKind kind) {
  ConnectorProfile p;
  p.name = kind;
  p.socket_depth = 0.010;
  p.wall_stiffness = 5000.0;
  p.surface_height = 0.0;
  switch (kind) {
    case ConnectorKind::UsbLike:
      p.clearance = 0.0010;
      p.resistance_force = 3.0;
      break;
    case ConnectorKind::DSubLike:
      p.clearance = 0.0006;
      p.resistance_force = 5.0;
      break;
    case ConnectorKind::ModelELike:
      p.clearance = 0.0004;
      p.resistance_force = 8.0;
      break;
  }
  return p;
}

void ConnectorProfile::validate() const {
  if (!(clearance > 0.0)) throw ConfigError("clearance must be > 0");
  if (!(socket_depth > 0.0)) throw ConfigError("socket_depth must be > 0");
  if (!(resistance_force >= 0.0)) throw ConfigError("resistance_force must be >= 0");
  if (!(wall_stiffness > 0.0) || !std::isfinite(wall_stiffness)) {
    throw ConfigError("wall_stiffness must be finite and > 0");
  }
  if (!std::isfinite(surface_height)) throw ConfigError("surface_height must be finite");
}

EnvConfig EnvConfig::for_profile(ConnectorKind kind, std::uint64_t seed) {
  EnvConfig c;
  c.profile = ConnectorProfile::preset(kind);
  c.goal = Vec3(0.0, 0.0, c.profile.surface_height + c.floor_height());
  c.goal_estimate = c.goal;
  c.rng_seed = seed;
  return c;
}

void EnvConfig::validate() const {
  profile.validate();
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!goal.allFinite() || !goal_estimate.allFinite()) throw ConfigError("goal must be finite");
  if (!(reset_height > 0.0)) throw ConfigError("reset_height must be > 0");
  if (!(actuator_noise_std >= 0.0)) throw ConfigError("actuator_noise_std must be >= 0");
  if (!(sensor_bias_range >= 0.0)) throw ConfigError("sensor_bias_range must be >= 0");
}

double EnvConfig::floor_height() const {
  return -(profile.socket_depth + ContactModel::kSeatDepth);
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void require_exact_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const char* k : keys) {
    if (!j.contains(k)) throw ConfigError(std::string(what) + ": missing field '" + k + "'");
  }
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* want : keys) known = known || k == want;
    if (!known) throw ConfigError(std::string(what) + ": unknown field '" + k + "'");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ConnectorProfile& p) {
  j = nlohmann::json{{"name", std::string(to_string(p.name))},
                     {"clearance", p.clearance},
                     {"socket_depth", p.socket_depth},
                     {"resistance_force", p.resistance_force},
                     {"wall_stiffness", p.wall_stiffness},
                     {"surface_height", p.surface_height}};
}

void from_json(const nlohmann::json& j, ConnectorProfile& p) {
  require_exact_keys(j,
                     {"name", "clearance", "socket_depth", "resistance_force", "wall_stiffness",
                      "surface_height"},
                     "profile");
  p.name = connector_from_string(j.at("name").get<std::string>());
  p.clearance = j.at("clearance").get<double>();
  p.socket_depth = j.at("socket_depth").get<double>();
  p.resistance_force = j.at("resistance_force").get<double>();
  p.wall_stiffness = j.at("wall_stiffness").get<double>();
  p.surface_height = j.at("surface_height").get<double>();
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"profile", c.profile},
                     {"goal", vec_json(c.goal)},
                     {"goal_estimate", vec_json(c.goal_estimate)},
                     {"horizon", c.horizon},
                     {"reset_height", c.reset_height},
                     {"actuator_noise_std", c.actuator_noise_std},
                     {"sensor_bias_range", c.sensor_bias_range},
                     {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  require_exact_keys(j,
                     {"profile", "goal", "goal_estimate", "horizon", "reset_height",
                      "actuator_noise_std", "sensor_bias_range", "rng_seed"},
                     "env config");
  c.profile = j.at("profile").get<ConnectorProfile>();
  c.goal = vec_from_json(j.at("goal"));
  c.goal_estimate = vec_from_json(j.at("goal_estimate"));
  c.horizon = j.at("horizon").get<int>();
  c.reset_height = j.at("reset_height").get<double>();
  c.actuator_noise_std = j.at("actuator_noise_std").get<double>();
  c.sensor_bias_range = j.at("sensor_bias_range").get<double>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  c.validate();
}

// ---------------------------------------------------------------------------
// Contact geometry.
//
// The socket is axisymmetric about the vertical line through goal.xy, so every
// query reduces to the half-plane (r, h): r = radial offset, h = height above
// the face. The solid is {h < 0, r > R(h)} united with {h < floor}, where
// R(h) = c for h <= -w and grows linearly to c + w at the face (the chamfer).

namespace {

struct HalfPlane {
  double r;
  double h;
};

struct SocketShape {
  double c;      // bore radius (clearance)
  double w;      // chamfer width
  double floor;  // bore bottom height (negative)
};

SocketShape shape_of(const EnvConfig& config) {
  return {config.profile.clearance, ContactModel::kChamferWidth, config.floor_height()};
}

double bore_radius(const SocketShape& s, double h) {
  if (h <= -s.w) return s.c;
  return s.c + (s.w + h);
}

bool feasible_2d(const SocketShape& s, HalfPlane p, double tol) {
  if (p.h >= -tol) return true;
  if (p.h < s.floor - tol) return false;
  return p.r <= bore_radius(s, std::min(p.h + tol, 0.0)) + tol;
}

double weighted_cost(HalfPlane a, HalfPlane b) {
  const double dr = a.r - b.r;
  const double dh = a.h - b.h;
  return ContactModel::kLateralStiffnessRatio * dr * dr + dh * dh;
}

// Projection onto segment [a, b] under the stiffness metric.
HalfPlane project_segment(HalfPlane q, HalfPlane a, HalfPlane b) {
  const double s = std::sqrt(ContactModel::kLateralStiffnessRatio);
  const double ax = s * a.r, ay = a.h;
  const double dx = s * (b.r - a.r), dy = b.h - a.h;
  const double qx = s * q.r, qy = q.h;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((qx - ax) * dx + (qy - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {a.r + t * (b.r - a.r), a.h + t * (b.h - a.h)};
}

HalfPlane project_2d(const SocketShape& s, HalfPlane q) {
  if (feasible_2d(s, q, 0.0)) return q;

  const std::array<HalfPlane, 4> candidates = {
      // face plate around the chamfer
      HalfPlane{std::max(q.r, s.c + s.w), 0.0},
      // chamfer
      project_segment(q, {s.c + s.w, 0.0}, {s.c, -s.w}),
      // bore wall
      HalfPlane{s.c, std::clamp(q.h, s.floor, -s.w)},
      // bore bottom
      HalfPlane{std::clamp(q.r, 0.0, s.c), s.floor},
  };
  HalfPlane best = candidates[0];
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    if (!feasible_2d(s, cand, 1e-12)) continue;
    const double cost = weighted_cost(cand, q);
    if (cost < best_cost) {
      best_cost = cost;
      best = cand;
    }
  }
  return best;
}

Eigen::Vector2d lateral(const Vec3& pos, const Vec3& goal) {
  return Eigen::Vector2d(pos.x() - goal.x(), pos.y() - goal.y());
}

}  // namespace

double lateral_offset(const Vec3& pos, const Vec3& goal) { return lateral(pos, goal).norm(); }

bool insertion_condition(const Vec3& pos, const EnvConfig& config) {
  const double depth = config.profile.surface_height - pos.z();
  // Relative slack keeps the boundary case robust to the round-off of the
  // projection onto the bore wall.
  const double c = config.profile.clearance;
  return depth >= config.profile.socket_depth && lateral_offset(pos, config.goal) <= c * (1.0 + 1e-12);
}

double feasibility_margin(const Vec3& pos, const EnvConfig& config) {
  const SocketShape s = shape_of(config);
  const double h = pos.z() - config.profile.surface_height;
  const double r = lateral_offset(pos, config.goal);
  if (h >= 0.0) return h;
  const double inside = std::min(bore_radius(s, h) - r, h - s.floor);
  return inside;
}

bool is_feasible(const Vec3& pos, const EnvConfig& config, double tol) {
  return feasibility_margin(pos, config) >= -tol;
}

Vec3 project_to_feasible(const Vec3& target, const EnvConfig& config) {
  const SocketShape s = shape_of(config);
  const Eigen::Vector2d d = lateral(target, config.goal);
  const double r = d.norm();
  const HalfPlane q{r, target.z() - config.profile.surface_height};
  const HalfPlane p = project_2d(s, q);
  if (p.r == q.r && p.h == q.h) return target;

  const Eigen::Vector2d dir = r > 0.0 ? Eigen::Vector2d(d / r) : Eigen::Vector2d(1.0, 0.0);
  const Eigen::Vector2d xy = Eigen::Vector2d(config.goal.x(), config.goal.y()) + p.r * dir;
  return Vec3(xy.x(), xy.y(), p.h + config.profile.surface_height);
}

ContactResult resolve_contact(const Vec3& from, const Vec3& target, const EnvConfig& config) {
  const auto& prof = config.profile;
  const SocketShape s = shape_of(config);

  ContactResult out;
  out.pos = project_to_feasible(target, config);

  // A plug already inside the straight bore is held by its wall: it cannot
  // leave sideways, however the set-point is displaced.
  const double entrance = prof.surface_height - s.w;
  const Eigen::Vector2d from_xy = lateral(from, config.goal);
  if (from.z() < entrance && from_xy.norm() <= s.c * (1.0 + 1e-12)) {
    const double z = std::max(target.z(), prof.surface_height + s.floor);
    if (z <= entrance) {
      const Eigen::Vector2d d = lateral(target, config.goal);
      const double r = d.norm();
      const Eigen::Vector2d xy = r > s.c ? Eigen::Vector2d(d * (s.c / r)) : d;
      out.pos = Vec3(config.goal.x() + xy.x(), config.goal.y() + xy.y(), z);
    }
  }
  out.contact = !(out.pos == target);

  // Friction in the straight bore: the descent below the bore entrance only
  // progresses by the part of the commanded penetration the resistance does
  // not absorb.
  const double r = lateral_offset(out.pos, config.goal);
  if (out.pos.z() < entrance && r <= s.c + 1e-12 && prof.resistance_force > 0.0) {
    const double start = std::min(from.z(), entrance);
    const double commanded = start - out.pos.z();
    if (commanded > 0.0) {
      const double slip = prof.resistance_force / prof.wall_stiffness;
      const double descent = std::max(0.0, commanded - slip);
      out.pos.z() = start - descent;
      out.contact = true;
    }
  }

  const double blocked = out.pos.z() - target.z();
  out.f_z = blocked > 0.0 ? prof.wall_stiffness * blocked : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

InsertionEnv::InsertionEnv(EnvConfig config) : config_(std::move(config)), rng_(config_.rng_seed) {
  config_.validate();
  state_.pos = config_.goal + Vec3(0.0, 0.0, config_.reset_height);
}

EnvState InsertionEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset();
}

EnvState InsertionEnv::reset() {
  std::uniform_real_distribution<double> bias(-config_.sensor_bias_range, config_.sensor_bias_range);
  bias_ = config_.sensor_bias_range > 0.0 ? bias(rng_) : 0.0;
  state_ = EnvState{};
  state_.pos = config_.goal + Vec3(0.0, 0.0, config_.reset_height);
  state_.f_z = 0.0;
  state_.inserted = insertion_condition(state_.pos, config_);
  state_.step_index = 0;
  return state_;
}

StepResult InsertionEnv::step(const Action& action) {
  if (state_.step_index >= config_.horizon) {
    throw TerminalStepError("step() called after the horizon was reached");
  }
  StepResult out;
  out.info.applied_delta = clamp_action(action.delta);
  Vec3 noise = Vec3::Zero();
  if (config_.actuator_noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, config_.actuator_noise_std);
    for (int i = 0; i < 3; ++i) noise[i] = gauss(rng_);
  }
  out.info.target = state_.pos + out.info.applied_delta + noise;

  const ContactResult contact = resolve_contact(state_.pos, out.info.target, config_);
  out.info.raw_f_z = contact.f_z + bias_;
  out.info.contact = contact.contact;

  state_.pos = contact.pos;
  state_.f_z = out.info.raw_f_z - bias_;
  state_.inserted = insertion_condition(state_.pos, config_);
  state_.step_index += 1;
  out.info.done = state_.step_index >= config_.horizon;
  out.state = state_;
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ObservationMode mode) {
  return mode == ObservationMode::Image ? "image" : "state";
}

ObservationMode observation_from_string(std::string_view name) {
  if (name == "state" || name == "StateVector") return ObservationMode::StateVector;
  if (name == "image" || name == "Image") return ObservationMode::Image;
  throw ConfigError("unknown observation mode '" + std::string(name) + "'");
}

int observation_dim(ObservationMode mode) {
  return mode == ObservationMode::Image ? Frame::kPixels : 4;
}

VecX observe(const EnvState& state, const EnvConfig& config, ObservationMode mode) {
  if (mode == ObservationMode::Image) return render(state, config).pixels;
  VecX obs(4);
  obs.head<3>() = state.pos - config.goal_estimate;
  obs[3] = state.f_z;
  return obs;
}

}  // namespace insertion
