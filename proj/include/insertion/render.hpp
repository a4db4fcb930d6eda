#pragma once

#include "insertion/sim.hpp"

#include <filesystem>

namespace insertion {

/// 32x32 grayscale image, row-major, row 0 at the top, intensities in [0, 1].
struct Frame {
  static constexpr int kSize = 32;
  static constexpr int kPixels = kSize * kSize;

  VecX pixels = VecX::Zero(kPixels);

  double at(int row, int col) const { return pixels[row * kSize + col]; }
  bool operator==(const Frame& other) const { return pixels == other.pixels; }
};

namespace palette {
inline constexpr double kBackground = 0.0;
inline constexpr double kSocket = 0.4;
inline constexpr double kPlug = 0.9;
}  // namespace palette

/// Side view of the x-z plane through the socket axis: a 6 cm square window
/// centered laterally on the socket and spanning from just below the bore
/// bottom to above the reset height. The y coordinate is not visible.
Frame render(const EnvState& state, const EnvConfig& config);

/// The frame with the plug removed.
Frame render_background(const EnvConfig& config);

/// Runs the P-controller toward `config.goal_estimate` for one rollout and
/// returns the final frame. Throws GoalCaptureFailed if it never inserts.
Frame capture_goal_image(const EnvConfig& config);

/// Binary PGM (P5, maxval 255).
void write_pgm(const Frame& frame, const std::filesystem::path& path);

}  // namespace insertion
