#include "mdnu/uncertainty.hpp"

#include <algorithm>
#include <sstream>

#include "mdnu/errors.hpp"
#include "mdnu/text_format.hpp"

namespace mdnu {

Eigen::VectorXd total_mean(const GmmParams& g) { return g.means * g.weights; }

Eigen::VectorXd explained_variance(const GmmParams& g) {
  const Eigen::VectorXd mean = total_mean(g);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mean.size());
  for (Eigen::Index k = 0; k < g.weights.size(); ++k) {
    out.array() += g.weights(k) * (g.means.col(k) - mean).array().square();
  }
  return out;
}

Eigen::VectorXd unexplained_variance(const GmmParams& g) { return g.variances * g.weights; }

Eigen::VectorXd total_variance(const GmmParams& g) {
  const Eigen::VectorXd mean = total_mean(g);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mean.size());
  for (Eigen::Index j = 0; j < g.weights.size(); ++j) {
    out.array() +=
        g.weights(j) * (g.variances.col(j).array() + (g.means.col(j) - mean).array().square());
  }
  return out;
}

UncertaintyReport make_report(const GmmParams& g) {
  UncertaintyReport r;
  r.total_mean = total_mean(g);
  r.explained = explained_variance(g);
  r.unexplained = unexplained_variance(g);
  r.total_variance = total_variance(g);
  r.map_index = map_index(g);
  return r;
}

UncertaintyReport report(const Model& model, const Eigen::VectorXd& x) {
  if (!model.is_mdn()) throw ArgumentError("uncertainty report requires a mixture head");
  return make_report(head_transform(model.network.forward(x), model.mdn));
}

std::vector<UncertaintyReport> report_batch(const Model& model, const Eigen::MatrixXd& inputs) {
  std::vector<UncertaintyReport> out;
  for (const GmmParams& g : predict_gmm(model, inputs)) out.push_back(make_report(g));
  return out;
}

McDropoutReport mc_dropout_variance(const Model& model, const Eigen::VectorXd& x,
                                    std::size_t num_samples, RandomState& rng,
                                    bool keep_samples) {
  if (num_samples < 2) throw ArgumentError("mc_dropout_variance needs at least 2 samples");
  const auto d = static_cast<Eigen::Index>(model.target_dim());
  Eigen::VectorXd sum_mu = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_mu_sq = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_sigma = Eigen::VectorXd::Zero(d);
  const Eigen::MatrixXd input = x;

  McDropoutReport rep;
  rep.num_samples = num_samples;
  for (std::size_t t = 0; t < num_samples; ++t) {
    const Eigen::VectorXd out = model.network.forward_stochastic(input, rng).col(0);
    Eigen::VectorXd mu, sigma;
    if (model.is_mdn()) {
      MapPrediction map = map_of(head_transform(out, model.mdn));
      mu = std::move(map.mean);
      sigma = std::move(map.variance);
    } else {
      mu = out;
      sigma = Eigen::VectorXd::Zero(d);
    }
    sum_mu += mu;
    sum_mu_sq.array() += mu.array().square();
    sum_sigma += sigma;
    if (keep_samples) {
      rep.sample_means.push_back(std::move(mu));
      rep.sample_variances.push_back(std::move(sigma));
    }
  }
  const double inv_t = 1.0 / static_cast<double>(num_samples);
  const Eigen::ArrayXd mean_mu = sum_mu.array() * inv_t;
  const Eigen::ArrayXd spread = (sum_mu_sq.array() * inv_t - mean_mu.square()).max(0.0);
  rep.variance = (spread + sum_sigma.array() * inv_t).matrix();
  return rep;
}

std::string report_csv_header(std::size_t dim) {
  std::ostringstream os;
  for (std::size_t i = 0; i < dim; ++i) {
    os << "total_" << i << ",explained_" << i << ",unexplained_" << i << ',';
  }
  os << "map_index";
  return os.str();
}

std::string report_csv_row(const UncertaintyReport& r) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < r.total_variance.size(); ++i) {
    os << fmt_real(r.total_variance(i)) << ',' << fmt_real(r.explained(i)) << ','
       << fmt_real(r.unexplained(i)) << ',';
  }
  os << r.map_index;
  return os.str();
}

nlohmann::json report_to_json(const UncertaintyReport& r) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return nlohmann::json{{"total", vec(r.total_variance)},
                        {"explained", vec(r.explained)},
                        {"unexplained", vec(r.unexplained)},
                        {"total_mean", vec(r.total_mean)},
                        {"map_index", r.map_index}};
}

}  // namespace mdnu
