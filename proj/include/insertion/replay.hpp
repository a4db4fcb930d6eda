#pragma once

#include "insertion/transition.hpp"

#include <vector>

namespace insertion {

/// Column-stacked minibatch.
struct Batch {
  MatX obs;       // obs_dim x B
  MatX actions;   // 3 x B, metres
  VecX rewards;   // B
  MatX next_obs;  // obs_dim x B
  VecX done;      // B, 0 or 1

  Eigen::Index size() const { return rewards.size(); }
  static Batch from(const std::vector<Transition>& items);
};

/// Fixed-capacity ring of transitions; the oldest entry is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  /// Stored item by age: 0 is the oldest.
  const Transition& at(std::size_t i) const;

  /// Indices drawn i.i.d. uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
  /// Throws Error on an empty buffer.
  Batch sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t next_ = 0;  // slot overwritten by the next push once full
};

}  // namespace insertion
