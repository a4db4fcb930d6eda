#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace insertion {

using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Deterministic generator used everywhere a seed is threaded through.
using Rng = std::mt19937_64;

/// Maximum per-axis end-effector displacement per control step (m).
inline constexpr double kActionBound = 0.005;
inline constexpr int kActionDim = 3;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TerminalStepError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class GoalCaptureFailed : public Error {
 public:
  using Error::Error;
};

class DemoFailed : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Componentwise clamp to [-bound, bound]; NaN components map to 0.
inline Vec3 clamp_action(const Vec3& v, double bound = kActionBound) {
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    const double x = v[i];
    out[i] = std::isnan(x) ? 0.0 : std::clamp(x, -bound, bound);
  }
  return out;
}

/// Derive an independent stream from a parent seed and a salt.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace insertion
