#pragma once

// Mixture density network head on top of Mlp.
//
// Raw head layout for K mixtures over d outputs (length K*(1+2d)):
//   [0, K)              mixture logits
//   [K, K + K*d)        means, mixture-major (mixture j occupies K + j*d .. K + j*d + d)
//   [K + K*d, K*(1+2d)) variance logits, same ordering as the means

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdnu/mlp.hpp"

namespace mdnu {

struct MdnConfig {
  std::size_t num_mixtures = 10;
  std::size_t output_dim = 1;
  double sigma_max = 5.0;
  double nll_epsilon = 1e-6;

  std::size_t raw_dim() const { return num_mixtures * (1 + 2 * output_dim); }
  void validate() const;
  bool operator==(const MdnConfig&) const = default;
};

/// Gaussian mixture with diagonal covariances. Column j of means/variances
/// belongs to mixture j.
struct GmmParams {
  Eigen::VectorXd weights;    // K
  Eigen::MatrixXd means;      // d x K
  Eigen::MatrixXd variances;  // d x K

  std::size_t num_mixtures() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.rows()); }
};

/// Regression data, one sample per column.
struct TrainingSet {
  Eigen::MatrixXd inputs;   // d_in x n
  Eigen::MatrixXd targets;  // d x n

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
  /// Throws ArgumentError when empty, inconsistent, or non-finite.
  void validate() const;
};

GmmParams head_transform(std::span<const double> raw, const MdnConfig& cfg);
GmmParams head_transform(const Eigen::VectorXd& raw, const MdnConfig& cfg);

struct NllResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_raw;  // dloss/draw, raw_dim x N
};

/// Mean negative log-likelihood -(1/N) sum_i log(sum_j pi_j N(y_i|mu_j,Sigma_j) + eps)
/// of raw head outputs (raw_dim x N) against targets (d x N), with its
/// analytic gradient through the softmax and scaled-sigmoid transforms.
/// Throws DivergenceError(epoch 0) when the loss is not finite.
NllResult nll_loss(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& targets,
                   const MdnConfig& cfg);

/// Loss value only, from already transformed parameters.
double nll_value(const std::vector<GmmParams>& params, const Eigen::MatrixXd& targets,
                 double epsilon);

enum class HeadKind : std::uint32_t { kRegression = 0, kMdn = 1 };

/// A network plus the interpretation of its output.
struct Model {
  Mlp network;
  HeadKind head = HeadKind::kRegression;
  MdnConfig mdn;  // meaningful only when head == kMdn

  bool is_mdn() const { return head == HeadKind::kMdn; }
  std::size_t target_dim() const { return is_mdn() ? mdn.output_dim : network.output_dim(); }

  void save(std::ostream& out) const;
  static Model load(std::istream& in);
  void save_file(const std::string& path) const;
  static Model load_file(const std::string& path);
};

/// `base.output_dim` is overwritten with the head's raw dimension.
Model make_mdn_model(MlpConfig base, const MdnConfig& mdn);
/// Squared-loss regressor emitting `base.output_dim` values directly.
Model make_regression_model(MlpConfig base);

struct TrainSchedule {
  std::size_t batch_size = 64;
  std::size_t epochs = 2000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
};

struct TrainResult {
  double initial_loss = 0.0;             // full-data loss before the first update
  std::vector<double> epoch_losses;      // mean training-batch loss per epoch
  double final_loss = 0.0;               // full-data loss after training, no dropout
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Minibatch training: NLL for MDN heads, 0.5 * mean squared error summed
/// over outputs for regression heads. Shuffling is driven by schedule.seed.
/// Throws DivergenceError carrying the failing epoch index.
TrainResult train(Model& model, const TrainingSet& data, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch = {});

/// Full-data loss in evaluation mode.
double evaluate_loss(const Model& model, const TrainingSet& data);

struct MapPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::size_t mixture_index = 0;
};

/// Mixture with the largest weight; ties go to the lowest index.
std::size_t map_index(const GmmParams& g);
MapPrediction map_of(const GmmParams& g);

/// MAP prediction. Regression heads return their output with zero variance.
MapPrediction predict_map(const Model& model, const Eigen::VectorXd& x);

/// Mixture parameters for each column of `inputs`. Requires an MDN head.
std::vector<GmmParams> predict_gmm(const Model& model, const Eigen::MatrixXd& inputs);

}  // namespace mdnu
