#pragma once

// Feed-forward network with manual backpropagation.
//
// Activations are stored one sample per column: a batch of N inputs is an
// (input_dim x N) matrix. Hidden layers use tanh followed by inverted dropout;
// the output layer is linear.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace mdnu {

using RandomState = std::mt19937_64;

enum class Activation : std::uint32_t { kTanh = 0 };

struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims{256, 256};
  std::size_t output_dim = 1;
  Activation activation = Activation::kTanh;
  double dropout_keep_prob = 1.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on zero dimensions, empty hidden_dims, keep_prob
  /// outside (0,1] or negative weight decay.
  void validate() const;
  bool operator==(const MlpConfig&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Eigen::MatrixXd cached_input;
  Eigen::MatrixXd cached_preactivation;
  Eigen::MatrixXd cached_activation;  // tanh(preactivation), before dropout
  Eigen::MatrixXd cached_mask;  // scaled dropout mask, empty when dropout is off

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  double squared_norm() const;
};

enum class OptimizerKind : std::uint32_t { kSgd = 0, kAdam = 1 };

struct Optimizer {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;

  // Adam moments, lazily sized on the first update.
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;
};

class Mlp {
 public:
  explicit Mlp(const MlpConfig& config);

  const MlpConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t output_dim() const { return config_.output_dim; }
  std::size_t parameter_count() const;

  /// Flattened parameters, layer by layer: row-major weights then biases.
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& flat);

  /// Training pass. Applies dropout when keep_prob < 1 and caches what
  /// backward() needs.
  Eigen::MatrixXd forward_train(const Eigen::MatrixXd& inputs, RandomState& rng);

  /// Deterministic evaluation pass, no dropout.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  /// Evaluation with dropout masks active (activations scaled by 1/keep_prob).
  /// Used by the MC-dropout comparator; each caller owns its RandomState.
  Eigen::MatrixXd forward_stochastic(const Eigen::MatrixXd& inputs, RandomState& rng) const;

  /// Gradients of a scalar loss given dL/d(output) for the last forward_train
  /// batch. Adds weight_decay * w to each weight gradient.
  Gradients backward(const Eigen::MatrixXd& grad_output) const;

  bool has_cached_forward() const { return has_cache_; }

  /// Byte-for-byte parameter equality.
  bool same_parameters(const Mlp& other) const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  Eigen::MatrixXd propagate(const Eigen::MatrixXd& inputs, RandomState* rng, bool cache);

  MlpConfig config_;
  std::vector<DenseLayer> layers_;
  bool has_cache_ = false;
};

/// sgd: w <- w - lr*g. adam: bias-corrected moment update. Increments step_count.
void apply_update(Mlp& net, const Gradients& grads, Optimizer& opt);

/// Uniform double in [0,1) from 53 random bits; identical on every platform.
inline double uniform01(RandomState& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mdnu
