#include "insertion/replay.hpp"

namespace insertion {

Batch Batch::from(const std::vector<Transition>& items) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(items.size());
  if (n == 0) return b;
  const Eigen::Index d = items.front().obs.size();
  b.obs.resize(d, n);
  b.next_obs.resize(d, n);
  b.actions.resize(3, n);
  b.rewards.resize(n);
  b.done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = items[static_cast<std::size_t>(i)];
    if (t.obs.size() != d || t.next_obs.size() != d) {
      throw DimensionMismatch("batch: observation sizes differ");
    }
    b.obs.col(i) = t.obs;
    b.next_obs.col(i) = t.next_obs;
    b.actions.col(i) = t.action;
    b.rewards[i] = t.reward;
    b.done[i] = t.done ? 1.0 : 0.0;
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be > 0");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (t.obs.size() != t.next_obs.size()) throw DimensionMismatch("transition obs sizes differ");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[next_] = std::move(t);
  next_ = (next_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw Error("replay buffer index out of range");
  return items_[(next_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (items_.empty()) throw Error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  const auto idx = sample_indices(batch_size, rng);
  const auto n = static_cast<Eigen::Index>(batch_size);
  const Eigen::Index d = items_.front().obs.size();
  Batch b;
  b.obs.resize(d, n);
  b.next_obs.resize(d, n);
  b.actions.resize(3, n);
  b.rewards.resize(n);
  b.done.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Transition& t = items_[idx[static_cast<std::size_t>(k)]];
    b.obs.col(k) = t.obs;
    b.next_obs.col(k) = t.next_obs;
    b.actions.col(k) = t.action;
    b.rewards[k] = t.reward;
    b.done[k] = t.done ? 1.0 : 0.0;
  }
  return b;
}

}  // namespace insertion
