#include "mdnu/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mdnu/errors.hpp"
#include "binary_io.hpp"

namespace mdnu {

namespace {

constexpr char kMlpMagic[8] = {'M', 'D', 'N', 'U', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kMlpVersion = 1;

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double keep_prob,
                             RandomState& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double scale = 1.0 / keep_prob;
  // Column-major fill order keeps the mask a pure function of the rng state.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      mask(r, c) = uniform01(rng) < keep_prob ? scale : 0.0;
    }
  }
  return mask;
}

// tanh via the vectorized exp; Eigen's double tanh is scalar. Absolute error ~1e-16.
Eigen::MatrixXd fast_tanh(const Eigen::MatrixXd& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

// Shared forward body. rng == nullptr disables dropout; cache == nullptr
// skips storing activations.
Eigen::MatrixXd run_layers(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& inputs,
                           double keep_prob, RandomState* rng, std::vector<DenseLayer>* cache) {
  Eigen::MatrixXd act = inputs;
  const std::size_t last = layers.size() - 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& layer = layers[i];
    Eigen::MatrixXd pre = layer.weights * act;
    pre.colwise() += layer.biases;
    if (cache) {
      (*cache)[i].cached_input = act;
      (*cache)[i].cached_mask.resize(0, 0);
    }
    if (i == last) {
      if (cache) (*cache)[i].cached_preactivation = pre;
      return pre;
    }
    Eigen::MatrixXd out = fast_tanh(pre);
    if (cache) (*cache)[i].cached_activation = out;
    if (rng && keep_prob < 1.0) {
      Eigen::MatrixXd mask = dropout_mask(out.rows(), out.cols(), keep_prob, *rng);
      out.array() *= mask.array();
      if (cache) (*cache)[i].cached_mask = std::move(mask);
    }
    if (cache) (*cache)[i].cached_preactivation = std::move(pre);
    act = std::move(out);
  }
  return act;
}

void check_input(const Eigen::MatrixXd& inputs, std::size_t input_dim) {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim) {
    throw ArgumentError("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                        std::to_string(input_dim));
  }
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (output_dim == 0) throw ConfigError("output_dim must be positive");
  if (hidden_dims.empty()) throw ConfigError("hidden_dims must contain at least one layer");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer width must be positive");
  }
  if (!(dropout_keep_prob > 0.0 && dropout_keep_prob <= 1.0)) {
    throw ConfigError("dropout_keep_prob must lie in (0, 1]");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be a finite nonnegative number");
  }
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

Mlp::Mlp(const MlpConfig& config) : config_(config) {
  config_.validate();
  RandomState rng(config_.seed);
  std::vector<std::size_t> dims;
  dims.push_back(config_.input_dim);
  dims.insert(dims.end(), config_.hidden_dims.begin(), config_.hidden_dims.end());
  dims.push_back(config_.output_dim);

  layers_.resize(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(dims[i]);
    const auto fan_out = static_cast<Eigen::Index>(dims[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer& layer = layers_[i];
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) {
        layer.weights(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
      }
    }
    layer.biases = Eigen::VectorXd::Zero(fan_out);
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) flat.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) flat.push_back(l.biases(r));
  }
  return flat;
}

void Mlp::set_parameters(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw ArgumentError("parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = flat[k++];
  }
}

Eigen::MatrixXd Mlp::forward_train(const Eigen::MatrixXd& inputs, RandomState& rng) {
  check_input(inputs, config_.input_dim);
  Eigen::MatrixXd out = run_layers(layers_, inputs, config_.dropout_keep_prob, &rng, &layers_);
  has_cache_ = true;
  return out;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
  check_input(inputs, config_.input_dim);
  return run_layers(layers_, inputs, 1.0, nullptr, nullptr);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
  const Eigen::MatrixXd out = forward(Eigen::MatrixXd(input));
  return out.col(0);
}

Eigen::MatrixXd Mlp::forward_stochastic(const Eigen::MatrixXd& inputs, RandomState& rng) const {
  check_input(inputs, config_.input_dim);
  return run_layers(layers_, inputs, config_.dropout_keep_prob, &rng, nullptr);
}

Gradients Mlp::backward(const Eigen::MatrixXd& grad_output) const {
  if (!has_cache_) throw StateError("backward called without a cached training forward pass");
  const DenseLayer& top = layers_.back();
  if (grad_output.rows() != top.weights.rows() ||
      grad_output.cols() != top.cached_input.cols()) {
    throw ArgumentError("grad_output shape does not match the cached forward batch");
  }

  Gradients g;
  g.weights.resize(layers_.size());
  g.biases.resize(layers_.size());

  Eigen::MatrixXd delta = grad_output;  // dL/d(preactivation) of the current layer
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const DenseLayer& layer = layers_[i];
    g.weights[i].noalias() = delta * layer.cached_input.transpose();
    if (config_.weight_decay > 0.0) g.weights[i] += config_.weight_decay * layer.weights;
    g.biases[i] = delta.rowwise().sum();
    if (i == 0) break;

    // Back through the previous layer's dropout and tanh.
    const DenseLayer& below = layers_[i - 1];
    Eigen::MatrixXd grad_act = layer.weights.transpose() * delta;
    if (below.cached_mask.size() != 0) grad_act.array() *= below.cached_mask.array();
    delta = (grad_act.array() * (1.0 - below.cached_activation.array().square())).matrix();
  }
  return g;
}

bool Mlp::same_parameters(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols()) return false;
    if (std::memcmp(a.weights.data(), b.weights.data(), sizeof(double) * a.weights.size()) != 0)
      return false;
    if (std::memcmp(a.biases.data(), b.biases.data(), sizeof(double) * a.biases.size()) != 0)
      return false;
  }
  return true;
}

void Mlp::save(std::ostream& out) const {
  out.write(kMlpMagic, sizeof(kMlpMagic));
  io::write_u32(out, kMlpVersion);
  io::write_u32(out, static_cast<std::uint32_t>(config_.activation));
  io::write_u64(out, config_.seed);
  io::write_f64(out, config_.dropout_keep_prob);
  io::write_f64(out, config_.weight_decay);
  io::write_u32(out, static_cast<std::uint32_t>(config_.input_dim));
  io::write_u32(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) io::write_u32(out, static_cast<std::uint32_t>(l.out_dim()));
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) io::write_f64(out, l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) io::write_f64(out, l.biases(r));
  }
  if (!out) throw ConfigError("failed writing network parameters");
}

Mlp Mlp::load(std::istream& in) {
  char magic[sizeof(kMlpMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMlpMagic, sizeof(magic)) != 0) {
    throw ConfigError("not a network parameter block (bad magic)");
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kMlpVersion) {
    throw ConfigError("unsupported network format version " + std::to_string(version));
  }
  MlpConfig cfg;
  const std::uint32_t act = io::read_u32(in);
  if (act != static_cast<std::uint32_t>(Activation::kTanh)) throw ConfigError("unknown activation");
  cfg.activation = Activation::kTanh;
  cfg.seed = io::read_u64(in);
  cfg.dropout_keep_prob = io::read_f64(in);
  cfg.weight_decay = io::read_f64(in);
  cfg.input_dim = io::read_u32(in);
  const std::uint32_t num_layers = io::read_u32(in);
  if (num_layers < 2) throw ConfigError("network needs at least one hidden layer");
  std::vector<std::size_t> outs(num_layers);
  for (auto& o : outs) o = io::read_u32(in);
  cfg.hidden_dims.assign(outs.begin(), outs.end() - 1);
  cfg.output_dim = outs.back();

  Mlp net(cfg);
  for (auto& l : net.layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = io::read_f64(in);
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = io::read_f64(in);
  }
  return net;
}

void apply_update(Mlp& net, const Gradients& grads, Optimizer& opt) {
  auto& layers = net.layers();
  if (grads.weights.size() != layers.size() || grads.biases.size() != layers.size()) {
    throw ArgumentError("gradient layer count does not match network");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads.weights[i].rows() != layers[i].weights.rows() ||
        grads.weights[i].cols() != layers[i].weights.cols() ||
        grads.biases[i].size() != layers[i].biases.size()) {
      throw ArgumentError("gradient shape mismatch in layer " + std::to_string(i));
    }
  }

  ++opt.step_count;
  if (opt.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weights -= opt.learning_rate * grads.weights[i];
      layers[i].biases -= opt.learning_rate * grads.biases[i];
    }
    return;
  }

  if (opt.m_weights.size() != layers.size()) {
    opt.m_weights.clear();
    opt.v_weights.clear();
    opt.m_biases.clear();
    opt.v_biases.clear();
    for (const auto& l : layers) {
      opt.m_weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
      opt.v_weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
      opt.m_biases.push_back(Eigen::VectorXd::Zero(l.biases.size()));
      opt.v_biases.push_back(Eigen::VectorXd::Zero(l.biases.size()));
    }
  }
  const double t = static_cast<double>(opt.step_count);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  const double b1 = opt.beta1, b2 = opt.beta2, lr = opt.learning_rate, eps = opt.epsilon;

  auto step = [&](auto& param, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    step(layers[i].weights, opt.m_weights[i], opt.v_weights[i], grads.weights[i]);
    step(layers[i].biases, opt.m_biases[i], opt.v_biases[i], grads.biases[i]);
  }
}

}  // namespace mdnu
