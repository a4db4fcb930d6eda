#pragma once

#include "insertion/common.hpp"

namespace insertion {

/// One (s, u, r, s', done) record. `action` is in metres.
struct Transition {
  VecX obs;
  Vec3 action = Vec3::Zero();
  double reward = 0.0;
  VecX next_obs;
  bool done = false;
};

}  // namespace insertion
