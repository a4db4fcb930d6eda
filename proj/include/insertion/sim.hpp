#pragma once

#include "insertion/common.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace insertion {

enum class ConnectorKind { UsbLike, DSubLike, ModelELike };

std::string_view to_string(ConnectorKind kind);
ConnectorKind connector_from_string(std::string_view name);

/// Geometry and friction of one insertion task. Lengths in m, forces in N.
struct ConnectorProfile {
  ConnectorKind name = ConnectorKind::UsbLike;
  double clearance = 0.001;        // radial slack between plug and socket bore
  double socket_depth = 0.010;     // travel below the face needed for insertion
  double resistance_force = 3.0;   // channel friction opposing descent
  double wall_stiffness = 5000.0;  // penalty constant for blocked motion
  double surface_height = 0.0;     // z of the socket face

  static ConnectorProfile preset(ConnectorKind kind);
  void validate() const;

  bool operator==(const ConnectorProfile&) const = default;
};

/// Fixed parameters of the contact model shared by all profiles.
///
/// The socket is a round bore of radius `clearance` (measured relative to the
/// plug axis) with a 45 degree entry chamfer. The bore bottom sits `kSeatDepth`
/// below the insertion depth. Contact is resolved by projecting the commanded
/// set-point onto the feasible set under the end-effector stiffness metric,
/// which is stiffer laterally than vertically.
struct ContactModel {
  static constexpr double kChamferWidth = 0.0006;
  static constexpr double kSeatDepth = 0.006;
  static constexpr double kLateralStiffnessRatio = 1000.0;
  /// Tolerance used by the non-penetration checks.
  static constexpr double kPenetrationTol = 1e-9;
};

struct EnvConfig {
  ConnectorProfile profile;
  Vec3 goal = Vec3::Zero();           // true socket center (bore bottom)
  Vec3 goal_estimate = Vec3::Zero();  // what controllers and rewards are told
  int horizon = 50;
  double reset_height = 0.05;
  double actuator_noise_std = 1e-4;
  double sensor_bias_range = 2.0;
  std::uint64_t rng_seed = 0;

  /// Default task for a profile: goal at the bore bottom below the origin.
  static EnvConfig for_profile(ConnectorKind kind, std::uint64_t seed = 0);
  void validate() const;

  /// Depth of the bore bottom relative to the socket face (negative).
  double floor_height() const;

  bool operator==(const EnvConfig&) const = default;
};

void to_json(nlohmann::json& j, const ConnectorProfile& p);
void from_json(const nlohmann::json& j, ConnectorProfile& p);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

struct EnvState {
  Vec3 pos = Vec3::Zero();  // plug tip position
  double f_z = 0.0;         // calibrated vertical force reading
  bool inserted = false;
  int step_index = 0;
};

struct Action {
  Vec3 delta = Vec3::Zero();
};

struct StepInfo {
  Vec3 applied_delta = Vec3::Zero();  // clamped command
  Vec3 target = Vec3::Zero();         // set-point after actuator noise
  double raw_f_z = 0.0;               // uncalibrated sensor value
  bool contact = false;
  bool done = false;
};

struct StepResult {
  EnvState state;
  StepInfo info;
};

/// Outcome of resolving one commanded set-point against the socket.
struct ContactResult {
  Vec3 pos = Vec3::Zero();
  double f_z = 0.0;  // true (bias-free) vertical reaction
  bool contact = false;
};

/// Signed clearance of a point from the socket solid (>= 0 means feasible).
/// Positive values are a lower bound on the distance to the solid.
double feasibility_margin(const Vec3& pos, const EnvConfig& config);
bool is_feasible(const Vec3& pos, const EnvConfig& config,
                 double tol = ContactModel::kPenetrationTol);

/// Nearest feasible point to `target` under the end-effector stiffness metric
/// (lateral displacement weighted by kLateralStiffnessRatio). Identity on
/// feasible points.
Vec3 project_to_feasible(const Vec3& target, const EnvConfig& config);

/// Quasi-static contact resolution of a move from `from` to set-point `target`.
ContactResult resolve_contact(const Vec3& from, const Vec3& target, const EnvConfig& config);

double lateral_offset(const Vec3& pos, const Vec3& goal);
bool insertion_condition(const Vec3& pos, const EnvConfig& config);

/// Single connector-insertion environment. Owns its random stream and the
/// per-rollout sensor bias; not shared between threads.
class InsertionEnv {
 public:
  explicit InsertionEnv(EnvConfig config);

  /// Start a rollout, continuing the random stream.
  EnvState reset();
  /// Reseed the stream first; equal seeds give equal rollouts.
  EnvState reset(std::uint64_t seed);

  StepResult step(const Action& action);

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  /// Replace the goal estimate for subsequent rollouts.
  void set_goal_estimate(const Vec3& estimate) { config_.goal_estimate = estimate; }
  double sensor_bias() const { return bias_; }
  bool done() const { return state_.step_index >= config_.horizon; }

 private:
  EnvConfig config_;
  Rng rng_;
  EnvState state_;
  double bias_ = 0.0;
};

enum class ObservationMode { StateVector, Image };

std::string_view to_string(ObservationMode mode);
ObservationMode observation_from_string(std::string_view name);
int observation_dim(ObservationMode mode);

/// StateVector: (pos - goal_estimate, f_z). Image: flattened 32x32 frame.
VecX observe(const EnvState& state, const EnvConfig& config, ObservationMode mode);

}  // namespace insertion
