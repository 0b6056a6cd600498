#pragma once

// Sampling-free moments of a Gaussian mixture and the MC-dropout comparator.
//
// For a mixture {pi_k, mu_k, Sigma_k} the predictive variance splits as
//   V(y|x) = V_k(E[y|x,k]) + E_k[V(y|x,k)]
//          = sum_k pi_k (mu_k - mean)^2  +  sum_k pi_k Sigma_k
// where the first term is the explained variance (spread of the mixture
// means, model ignorance) and the second the unexplained variance (noise).
// Everything is kept per output dimension.

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdnu/mdn.hpp"

namespace mdnu {

Eigen::VectorXd total_mean(const GmmParams& g);
Eigen::VectorXd explained_variance(const GmmParams& g);
Eigen::VectorXd unexplained_variance(const GmmParams& g);
/// Accumulated per mixture as pi_j (Sigma_j + (mu_j - mean)^2).
Eigen::VectorXd total_variance(const GmmParams& g);

struct UncertaintyReport {
  Eigen::VectorXd total_mean;
  Eigen::VectorXd total_variance;
  Eigen::VectorXd explained;
  Eigen::VectorXd unexplained;
  std::size_t map_index = 0;

  // Scalars summed over output dimensions; the switching policy thresholds these.
  double explained_sum() const { return explained.sum(); }
  double unexplained_sum() const { return unexplained.sum(); }
  double total_sum() const { return total_variance.sum(); }
};

UncertaintyReport make_report(const GmmParams& g);

/// One deterministic forward pass, no sampling. Requires an MDN head.
UncertaintyReport report(const Model& model, const Eigen::VectorXd& x);
std::vector<UncertaintyReport> report_batch(const Model& model, const Eigen::MatrixXd& inputs);

struct McDropoutReport {
  Eigen::VectorXd variance;
  std::size_t num_samples = 0;
  std::vector<Eigen::VectorXd> sample_means;
  std::vector<Eigen::VectorXd> sample_variances;
};

/// Predictive variance from T stochastic forward passes:
///   max(0, mean_t(mu_t^2) - mean_t(mu_t)^2) + mean_t(sigma_t)
/// with (mu_t, sigma_t) the MAP mixture of pass t (the only mixture for
/// K=1). Regression heads contribute sigma_t = 0. Throws ArgumentError for T < 2.
McDropoutReport mc_dropout_variance(const Model& model, const Eigen::VectorXd& x,
                                    std::size_t num_samples, RandomState& rng,
                                    bool keep_samples = false);

// Flat record: total_<i>, explained_<i>, unexplained_<i> per dimension, then map_index.
std::string report_csv_header(std::size_t dim);
std::string report_csv_row(const UncertaintyReport& r);
nlohmann::json report_to_json(const UncertaintyReport& r);

}  // namespace mdnu
