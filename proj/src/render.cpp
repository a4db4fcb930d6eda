#include "insertion/render.hpp"

#include "insertion/control.hpp"

#include <fstream>

namespace insertion {

namespace {

constexpr double kWindow = 0.06;
constexpr double kBelowGoal = 0.005;
constexpr double kPitch = kWindow / Frame::kSize;
constexpr double kPlugHalfWidth = 0.002;
constexpr double kPlugLength = 0.015;
constexpr double kHousingHalfWidth = 0.012;
constexpr double kHousingBase = 0.003;
constexpr int kSupersample = 8;

struct Window {
  double x0;    // left edge
  double ztop;  // top edge
};

Window window_of(const EnvConfig& config) {
  return {config.goal.x() - 0.5 * kWindow, config.goal.z() - kBelowGoal + kWindow};
}

// Socket material in the plane through the socket axis.
bool socket_solid(double x, double z, const EnvConfig& config) {
  const double h = z - config.profile.surface_height;
  const double floor = config.floor_height();
  if (h >= 0.0 || h < floor - kHousingBase) return false;
  const double u = std::abs(x - config.goal.x());
  if (u > kHousingHalfWidth) return false;
  if (h < floor) return true;
  const double w = ContactModel::kChamferWidth;
  const double radius = config.profile.clearance + (h <= -w ? 0.0 : w + h);
  return u > kPlugHalfWidth + radius;
}

double socket_coverage(int row, int col, const Window& win, const EnvConfig& config) {
  int hits = 0;
  for (int i = 0; i < kSupersample; ++i) {
    for (int j = 0; j < kSupersample; ++j) {
      const double x = win.x0 + (col + (j + 0.5) / kSupersample) * kPitch;
      const double z = win.ztop - (row + (i + 0.5) / kSupersample) * kPitch;
      hits += socket_solid(x, z, config) ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / (kSupersample * kSupersample);
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

Frame compose(const EnvConfig& config, const Vec3* plug) {
  const Window win = window_of(config);
  Frame frame;
  for (int row = 0; row < Frame::kSize; ++row) {
    const double ptop = win.ztop - row * kPitch;
    const double pbot = ptop - kPitch;
    for (int col = 0; col < Frame::kSize; ++col) {
      const double pleft = win.x0 + col * kPitch;
      const double pright = pleft + kPitch;
      const double socket = socket_coverage(row, col, win, config);
      double cover = 0.0;
      if (plug != nullptr) {
        const double wx = overlap(pleft, pright, plug->x() - kPlugHalfWidth, plug->x() + kPlugHalfWidth);
        const double wz = overlap(pbot, ptop, plug->z(), plug->z() + kPlugLength);
        cover = std::clamp(wx * wz / (kPitch * kPitch), 0.0, 1.0);
      }
      const double value = cover * palette::kPlug + (1.0 - cover) * socket * palette::kSocket;
      frame.pixels[row * Frame::kSize + col] = std::clamp(value, 0.0, 1.0);
    }
  }
  return frame;
}

}  // namespace

Frame render(const EnvState& state, const EnvConfig& config) { return compose(config, &state.pos); }

Frame render_background(const EnvConfig& config) { return compose(config, nullptr); }

Frame capture_goal_image(const EnvConfig& config) {
  InsertionEnv env(config);
  env.reset(config.rng_seed);
  const PController ctrl{.goal_estimate = config.goal_estimate};
  bool inserted = false;
  while (!env.done()) {
    const auto res = env.step(p_control(env.state().pos, ctrl));
    inserted = inserted || res.state.inserted;
  }
  if (!inserted) {
    throw GoalCaptureFailed("scripted insertion did not reach the inserted state");
  }
  return render(env.state(), config);
}

void write_pgm(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P5\n" << Frame::kSize << ' ' << Frame::kSize << "\n255\n";
  for (int i = 0; i < Frame::kPixels; ++i) {
    const double v = std::clamp(frame.pixels[i], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

}  // namespace insertion
