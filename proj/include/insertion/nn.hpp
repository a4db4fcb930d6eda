#pragma once

#include "insertion/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace insertion {

/// Output head of a network.
enum class OutputKind {
  Linear,      // critics
  TanhScaled,  // deterministic actors: output_scale * tanh(.)
  Gaussian,    // stochastic actors: [mean; log_std] with log_std clamped
};

/// Architecture of a tanh multilayer perceptron.
struct PolicySpec {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  OutputKind output = OutputKind::Linear;
  double output_scale = 1.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  Eigen::Index param_count() const;
  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int layer) const { return layer == 0 ? input_dim : hidden[layer - 1]; }
  int layer_out(int layer) const {
    return layer + 1 == layer_count() ? output_dim : hidden[layer];
  }
  void validate() const;

  bool operator==(const PolicySpec&) const = default;
};

void to_json(nlohmann::json& j, const PolicySpec& spec);
void from_json(const nlohmann::json& j, PolicySpec& spec);

/// Architecture plus its flat parameter vector. Per layer: W (out x in,
/// column-major) followed by b (out).
struct NetParams {
  PolicySpec spec;
  VecX values;

  NetParams() = default;
  explicit NetParams(PolicySpec s);

  /// Uniform(+-1/sqrt(fan_in)) initialisation; the last layer is drawn from
  /// Uniform(+-final_layer_range) instead.
  static NetParams init(const PolicySpec& spec, Rng& rng, double final_layer_range = 3e-3);

  Eigen::Map<const MatX> weight(int layer) const;
  Eigen::Map<MatX> weight(int layer);
  Eigen::Map<const VecX> bias(int layer) const;
  Eigen::Map<VecX> bias(int layer);

  void validate() const;
};

/// Operation record of one forward pass. Holds a pointer to the parameters it
/// was built from; they must outlive the tape and stay unchanged until
/// backward() consumes it.
class Tape {
 public:
  enum class Op { Affine, Tanh, ScaledTanh, ClampRows };

  struct Node {
    Op op;
    int layer = -1;
    MatX cache;  // affine: input; tanh variants: tanh output; clamp: pass mask
    double scale = 1.0;
    int row_begin = 0;
    int row_end = 0;
  };

  Eigen::Index batch() const { return batch_; }
  bool consumed() const { return consumed_; }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend struct TapeAccess;
  const NetParams* params_ = nullptr;
  std::vector<Node> nodes_;
  Eigen::Index batch_ = 0;
  bool consumed_ = false;
};

struct Forward {
  MatX output;  // output_dim x batch
  Tape tape;
};

struct Gradients {
  VecX params;  // summed over the batch
  MatX input;   // input_dim x batch
};

/// Batched forward pass; columns of `input` are samples.
Forward mlp_forward(const NetParams& params, const MatX& input);
/// Forward pass without recording.
MatX mlp_eval(const NetParams& params, const MatX& input);
VecX mlp_eval(const NetParams& params, const VecX& input);

/// Vector-Jacobian product: gradient of sum(output_grad .* output) with
/// respect to the parameters and the input. Consumes the tape. Either half
/// can be skipped when the caller does not need it.
Gradients backward(Tape& tape, const MatX& output_grad, bool param_grads = true,
                   bool input_grad = true);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  VecX m;
  VecX v;
  long step = 0;

  static AdamState zeros(Eigen::Index n) { return {VecX::Zero(n), VecX::Zero(n), 0}; }
};

/// Bias-corrected Adam. Throws NonFiniteError if `grad` has a NaN or inf.
void adam_step(VecX& params, const VecX& grad, AdamState& state, const AdamConfig& cfg);

/// Polyak averaging: target <- tau * source + (1 - tau) * target.
void soft_update(VecX& target, const VecX& source, double tau);

/// Checkpoint file: one JSON header line, then the parameters as
/// little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const NetParams& params, long step);
NetParams load_checkpoint(const std::filesystem::path& path, long* step = nullptr);

}  // namespace insertion
