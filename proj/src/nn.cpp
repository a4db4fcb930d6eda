#include "insertion/nn.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace insertion {

Eigen::Index PolicySpec::param_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layer_count(); ++l) {
    n += static_cast<Eigen::Index>(layer_in(l)) * layer_out(l) + layer_out(l);
  }
  return n;
}

void PolicySpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw DimensionMismatch("network dimensions must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw DimensionMismatch("hidden widths must be >= 1");
  }
  if (output == OutputKind::Gaussian && output_dim % 2 != 0) {
    throw DimensionMismatch("gaussian head needs an even output size");
  }
  if (!(log_std_min <= log_std_max)) throw ConfigError("log_std bounds out of order");
}

namespace {

const char* output_name(OutputKind k) {
  switch (k) {
    case OutputKind::Linear: return "linear";
    case OutputKind::TanhScaled: return "tanh_scaled";
    case OutputKind::Gaussian: return "gaussian";
  }
  return "linear";
}

OutputKind output_from_name(const std::string& s) {
  if (s == "linear") return OutputKind::Linear;
  if (s == "tanh_scaled") return OutputKind::TanhScaled;
  if (s == "gaussian") return OutputKind::Gaussian;
  throw ConfigError("unknown output head '" + s + "'");
}

std::vector<Eigen::Index> layer_offsets(const PolicySpec& spec) {
  std::vector<Eigen::Index> off(spec.layer_count() + 1, 0);
  for (int l = 0; l < spec.layer_count(); ++l) {
    off[l + 1] = off[l] + static_cast<Eigen::Index>(spec.layer_in(l)) * spec.layer_out(l) +
                 spec.layer_out(l);
  }
  return off;
}

}  // namespace

void to_json(nlohmann::json& j, const PolicySpec& spec) {
  j = nlohmann::json{{"input_dim", spec.input_dim},
                     {"hidden", spec.hidden},
                     {"output_dim", spec.output_dim},
                     {"output", output_name(spec.output)},
                     {"output_scale", spec.output_scale},
                     {"log_std_min", spec.log_std_min},
                     {"log_std_max", spec.log_std_max}};
}

void from_json(const nlohmann::json& j, PolicySpec& spec) {
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.output = output_from_name(j.at("output").get<std::string>());
  spec.output_scale = j.at("output_scale").get<double>();
  spec.log_std_min = j.at("log_std_min").get<double>();
  spec.log_std_max = j.at("log_std_max").get<double>();
  spec.validate();
}

NetParams::NetParams(PolicySpec s) : spec(std::move(s)) {
  spec.validate();
  values = VecX::Zero(spec.param_count());
}

NetParams NetParams::init(const PolicySpec& spec, Rng& rng, double final_layer_range) {
  NetParams p(spec);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int l = 0; l < spec.layer_count(); ++l) {
    const bool last = l + 1 == spec.layer_count();
    const double range = last ? final_layer_range : 1.0 / std::sqrt(double(spec.layer_in(l)));
    auto w = p.weight(l);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = range * unit(rng);
    auto b = p.bias(l);
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = range * unit(rng);
  }
  return p;
}

Eigen::Map<const MatX> NetParams::weight(int layer) const {
  const auto off = layer_offsets(spec);
  return {values.data() + off[layer], spec.layer_out(layer), spec.layer_in(layer)};
}

Eigen::Map<MatX> NetParams::weight(int layer) {
  const auto off = layer_offsets(spec);
  return {values.data() + off[layer], spec.layer_out(layer), spec.layer_in(layer)};
}

Eigen::Map<const VecX> NetParams::bias(int layer) const {
  const auto off = layer_offsets(spec);
  const Eigen::Index w = static_cast<Eigen::Index>(spec.layer_out(layer)) * spec.layer_in(layer);
  return {values.data() + off[layer] + w, spec.layer_out(layer)};
}

Eigen::Map<VecX> NetParams::bias(int layer) {
  const auto off = layer_offsets(spec);
  const Eigen::Index w = static_cast<Eigen::Index>(spec.layer_out(layer)) * spec.layer_in(layer);
  return {values.data() + off[layer] + w, spec.layer_out(layer)};
}

void NetParams::validate() const {
  spec.validate();
  if (values.size() != spec.param_count()) {
    throw DimensionMismatch("parameter vector length does not match the network spec");
  }
  if (!values.allFinite()) throw NonFiniteError("network parameters are not finite");
}

// ---------------------------------------------------------------------------

struct TapeAccess {
  static Tape make(const NetParams& params, Eigen::Index batch) {
    Tape t;
    t.params_ = &params;
    t.batch_ = batch;
    return t;
  }
  static std::vector<Tape::Node>& nodes(Tape& t) { return t.nodes_; }
  static const NetParams* params(const Tape& t) { return t.params_; }
  static void consume(Tape& t) { t.consumed_ = true; }
};

namespace {

template <bool Record>
MatX run_forward(const NetParams& params, const MatX& input, Tape* tape) {
  const PolicySpec& spec = params.spec;
  if (input.rows() != spec.input_dim) {
    throw DimensionMismatch("mlp_forward: expected input of size " + std::to_string(spec.input_dim) +
                            ", got " + std::to_string(input.rows()));
  }
  std::vector<Tape::Node>* nodes = nullptr;
  if constexpr (Record) nodes = &TapeAccess::nodes(*tape);
  MatX x = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    MatX y = params.weight(l) * x;
    y.colwise() += params.bias(l);
    if constexpr (Record) nodes->push_back({Tape::Op::Affine, l, std::move(x)});
    const bool last = l + 1 == spec.layer_count();
    if (!last) {
      y = y.array().tanh().matrix();
      if constexpr (Record) nodes->push_back({Tape::Op::Tanh, l, y});
    } else if (spec.output == OutputKind::TanhScaled) {
      MatX t = y.array().tanh().matrix();
      y = spec.output_scale * t;
      if constexpr (Record) nodes->push_back({Tape::Op::ScaledTanh, l, std::move(t), spec.output_scale});
    } else if (spec.output == OutputKind::Gaussian) {
      const int half = spec.output_dim / 2;
      MatX mask = MatX::Ones(y.rows(), y.cols());
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        for (int r = half; r < spec.output_dim; ++r) {
          const double v = y(r, c);
          if (v < spec.log_std_min || v > spec.log_std_max) {
            y(r, c) = std::clamp(v, spec.log_std_min, spec.log_std_max);
            mask(r, c) = 0.0;
          }
        }
      }
      if constexpr (Record) {
        Tape::Node n{Tape::Op::ClampRows, l, std::move(mask)};
        n.row_begin = half;
        n.row_end = spec.output_dim;
        nodes->push_back(std::move(n));
      }
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

Forward mlp_forward(const NetParams& params, const MatX& input) {
  Forward f{MatX(), TapeAccess::make(params, input.cols())};
  f.output = run_forward<true>(params, input, &f.tape);
  return f;
}

MatX mlp_eval(const NetParams& params, const MatX& input) {
  return run_forward<false>(params, input, nullptr);
}

VecX mlp_eval(const NetParams& params, const VecX& input) {
  return run_forward<false>(params, MatX(input), nullptr).col(0);
}

Gradients backward(Tape& tape, const MatX& output_grad, bool param_grads, bool input_grad) {
  if (tape.consumed()) throw Error("backward: tape already consumed");
  const NetParams* params = TapeAccess::params(tape);
  if (params == nullptr) throw Error("backward: empty tape");
  const PolicySpec& spec = params->spec;
  if (output_grad.rows() != spec.output_dim || output_grad.cols() != tape.batch()) {
    throw DimensionMismatch("backward: output gradient shape does not match the forward pass");
  }
  TapeAccess::consume(tape);

  const auto off = layer_offsets(spec);
  Gradients g{param_grads ? VecX::Zero(spec.param_count()) : VecX(), MatX()};
  MatX grad = output_grad;
  auto& recorded = TapeAccess::nodes(tape);
  for (auto it = recorded.rbegin(); it != recorded.rend(); ++it) {
    Tape::Node& n = *it;
    switch (n.op) {
      case Tape::Op::ClampRows:
        grad = grad.cwiseProduct(n.cache);
        break;
      case Tape::Op::ScaledTanh:
        grad = (n.scale * grad.array() * (1.0 - n.cache.array().square())).matrix();
        break;
      case Tape::Op::Tanh:
        grad = (grad.array() * (1.0 - n.cache.array().square())).matrix();
        break;
      case Tape::Op::Affine: {
        const int l = n.layer;
        const Eigen::Index out = spec.layer_out(l), in = spec.layer_in(l);
        if (param_grads) {
          Eigen::Map<MatX> dW(g.params.data() + off[l], out, in);
          Eigen::Map<VecX> db(g.params.data() + off[l] + out * in, out);
          dW.noalias() = grad * n.cache.transpose();
          db = grad.rowwise().sum();
        }
        if (l == 0 && !input_grad) {
          grad.resize(0, 0);
        } else {
          grad = params->weight(l).transpose() * grad;
        }
        break;
      }
    }
    n.cache.resize(0, 0);
  }
  g.input = std::move(grad);
  return g;
}

// ---------------------------------------------------------------------------

void adam_step(VecX& params, const VecX& grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.size() != params.size()) throw DimensionMismatch("adam_step: gradient size mismatch");
  if (!grad.allFinite()) throw NonFiniteError("adam_step: non-finite gradient");
  if (state.m.size() != params.size()) state = AdamState::zeros(params.size());
  state.step += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  params.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

void soft_update(VecX& target, const VecX& source, double tau) {
  if (target.size() != source.size()) throw DimensionMismatch("soft_update: size mismatch");
  target = tau * source + (1.0 - tau) * target;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "insertion-checkpoint";
constexpr int kCheckpointVersion = 1;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetParams& params, long step) {
  params.validate();
  nlohmann::json header{{"format", kCheckpointFormat},
                        {"version", kCheckpointVersion},
                        {"spec", params.spec},
                        {"step", step},
                        {"count", params.values.size()},
                        {"encoding", "float64-le"}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  for (Eigen::Index i = 0; i < params.values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(params.values[i]);
    bits = to_little_endian(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path, long* step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CorruptionError("checkpoint has no header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("checkpoint header is not JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != kCheckpointFormat ||
      header.value("version", 0) != kCheckpointVersion) {
    throw CorruptionError("unsupported checkpoint format in " + path.string());
  }
  NetParams p(header.at("spec").get<PolicySpec>());
  const auto count = header.at("count").get<Eigen::Index>();
  if (count != p.values.size()) throw CorruptionError("checkpoint count does not match spec");
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
      throw CorruptionError("checkpoint truncated: " + path.string());
    }
    p.values[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError("trailing bytes in checkpoint " + path.string());
  }
  if (step != nullptr) *step = header.at("step").get<long>();
  return p;
}

}  // namespace insertion
