#include "mdnu/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "binary_io.hpp"
#include "mdnu/errors.hpp"

namespace mdnu {

namespace {

constexpr char kModelMagic[8] = {'M', 'D', 'N', 'U', 'M', 'O', 'D', '\0'};
constexpr std::uint32_t kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_raw(std::size_t size, const MdnConfig& cfg) {
  if (size != cfg.raw_dim()) {
    throw ArgumentError("raw head output has length " + std::to_string(size) + ", expected " +
                        std::to_string(cfg.raw_dim()));
  }
}

}  // namespace

void MdnConfig::validate() const {
  if (num_mixtures == 0) throw ConfigError("num_mixtures must be positive");
  if (output_dim == 0) throw ConfigError("mdn output_dim must be positive");
  if (!(sigma_max > 0.0) || !std::isfinite(sigma_max)) throw ConfigError("sigma_max must be positive");
  if (!(nll_epsilon > 0.0) || !std::isfinite(nll_epsilon)) {
    throw ConfigError("nll_epsilon must be positive");
  }
}

void TrainingSet::validate() const {
  if (inputs.cols() == 0) throw ArgumentError("training set is empty");
  if (targets.cols() != inputs.cols()) {
    throw ArgumentError("inputs and targets disagree on the number of samples");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw ArgumentError("training set contains non-finite entries");
  }
}

GmmParams head_transform(std::span<const double> raw, const MdnConfig& cfg) {
  check_raw(raw.size(), cfg);
  const auto K = static_cast<Eigen::Index>(cfg.num_mixtures);
  const auto d = static_cast<Eigen::Index>(cfg.output_dim);
  GmmParams g;
  g.weights.resize(K);
  g.means.resize(d, K);
  g.variances.resize(d, K);

  double max_logit = raw[0];
  for (Eigen::Index j = 1; j < K; ++j) max_logit = std::max(max_logit, raw[j]);
  double total = 0.0;
  for (Eigen::Index j = 0; j < K; ++j) {
    g.weights(j) = std::exp(raw[j] - max_logit);
    total += g.weights(j);
  }
  g.weights /= total;

  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index l = 0; l < d; ++l) {
      g.means(l, j) = raw[K + j * d + l];
      g.variances(l, j) = cfg.sigma_max * sigmoid(raw[K + K * d + j * d + l]);
    }
  }
  return g;
}

GmmParams head_transform(const Eigen::VectorXd& raw, const MdnConfig& cfg) {
  return head_transform(std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())),
                        cfg);
}

NllResult nll_loss(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& targets,
                   const MdnConfig& cfg) {
  check_raw(static_cast<std::size_t>(raw.rows()), cfg);
  if (targets.rows() != static_cast<Eigen::Index>(cfg.output_dim) || targets.cols() != raw.cols()) {
    throw ArgumentError("targets shape does not match the head configuration");
  }
  const Eigen::Index K = static_cast<Eigen::Index>(cfg.num_mixtures);
  const Eigen::Index d = static_cast<Eigen::Index>(cfg.output_dim);
  const Eigen::Index n = raw.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  NllResult result;
  result.grad_raw.resize(raw.rows(), n);
  Eigen::VectorXd density(K);
  double total_loss = 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const double* col = raw.col(i).data();
    const GmmParams g = head_transform(std::span<const double>(col, raw.rows()), cfg);
    const auto y = targets.col(i);

    double p = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) {
      double log_n = 0.0;
      for (Eigen::Index l = 0; l < d; ++l) {
        const double s = g.variances(l, j);
        const double r = y(l) - g.means(l, j);
        log_n += -0.5 * (log_2pi + std::log(s)) - 0.5 * r * r / s;
      }
      density(j) = std::exp(log_n);  // underflows to 0 for far-away mixtures
      p += g.weights(j) * density(j);
    }
    const double denom = p + cfg.nll_epsilon;
    total_loss -= std::log(denom);

    // resp_j = pi_j N_j / (p + eps); sum of resp is p / (p + eps) < 1.
    double resp_sum = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) resp_sum += g.weights(j) * density(j) / denom;

    auto grad = result.grad_raw.col(i);
    for (Eigen::Index j = 0; j < K; ++j) {
      const double resp = g.weights(j) * density(j) / denom;
      grad(j) = inv_n * (-resp + g.weights(j) * resp_sum);
      for (Eigen::Index l = 0; l < d; ++l) {
        const double s = g.variances(l, j);
        const double r = y(l) - g.means(l, j);
        grad(K + j * d + l) = inv_n * (-resp * r / s);
        const double dloss_ds = -resp * (0.5 * r * r / (s * s) - 0.5 / s);
        const double ds_dz = s * (1.0 - s / cfg.sigma_max);
        grad(K + K * d + j * d + l) = inv_n * dloss_ds * ds_dz;
      }
    }
  }
  result.loss = total_loss * inv_n;
  if (!std::isfinite(result.loss)) throw DivergenceError("negative log-likelihood is not finite", 0);
  return result;
}

double nll_value(const std::vector<GmmParams>& params, const Eigen::MatrixXd& targets,
                 double epsilon) {
  if (params.size() != static_cast<std::size_t>(targets.cols())) {
    throw ArgumentError("one GMM per target column required");
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const GmmParams& g = params[i];
    const auto y = targets.col(static_cast<Eigen::Index>(i));
    double p = 0.0;
    for (std::size_t j = 0; j < g.num_mixtures(); ++j) {
      double log_n = 0.0;
      for (std::size_t l = 0; l < g.dim(); ++l) {
        const auto jj = static_cast<Eigen::Index>(j), ll = static_cast<Eigen::Index>(l);
        const double s = g.variances(ll, jj);
        const double r = y(ll) - g.means(ll, jj);
        log_n += -0.5 * (log_2pi + std::log(s)) - 0.5 * r * r / s;
      }
      p += g.weights(static_cast<Eigen::Index>(j)) * std::exp(log_n);
    }
    total -= std::log(p + epsilon);
  }
  return total / static_cast<double>(params.size());
}

Model make_mdn_model(MlpConfig base, const MdnConfig& mdn) {
  mdn.validate();
  base.output_dim = mdn.raw_dim();
  return Model{Mlp(base), HeadKind::kMdn, mdn};
}

Model make_regression_model(MlpConfig base) {
  return Model{Mlp(base), HeadKind::kRegression, MdnConfig{}};
}

void Model::save(std::ostream& out) const {
  out.write(kModelMagic, sizeof(kModelMagic));
  io::write_u32(out, kModelVersion);
  io::write_u32(out, static_cast<std::uint32_t>(head));
  if (is_mdn()) {
    io::write_u32(out, static_cast<std::uint32_t>(mdn.num_mixtures));
    io::write_u32(out, static_cast<std::uint32_t>(mdn.output_dim));
    io::write_f64(out, mdn.sigma_max);
    io::write_f64(out, mdn.nll_epsilon);
  }
  network.save(out);
}

Model Model::load(std::istream& in) {
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw ConfigError("not a model file (bad magic)");
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kModelVersion) {
    throw ConfigError("unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t head = io::read_u32(in);
  if (head > static_cast<std::uint32_t>(HeadKind::kMdn)) throw ConfigError("unknown head kind");
  MdnConfig mdn;
  if (head == static_cast<std::uint32_t>(HeadKind::kMdn)) {
    mdn.num_mixtures = io::read_u32(in);
    mdn.output_dim = io::read_u32(in);
    mdn.sigma_max = io::read_f64(in);
    mdn.nll_epsilon = io::read_f64(in);
    mdn.validate();
  }
  Model model{Mlp::load(in), static_cast<HeadKind>(head), mdn};
  if (model.is_mdn() && model.network.output_dim() != mdn.raw_dim()) {
    throw ConfigError("network output size does not match the mixture head");
  }
  return model;
}

void Model::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  save(out);
}

Model Model::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file " + path);
  return load(in);
}

namespace {

struct BatchLoss {
  double loss;
  Eigen::MatrixXd grad;
};

BatchLoss batch_loss(const Model& model, const Eigen::MatrixXd& out, const Eigen::MatrixXd& y) {
  if (model.is_mdn()) {
    NllResult r = nll_loss(out, y, model.mdn);
    return {r.loss, std::move(r.grad_raw)};
  }
  const double inv_n = 1.0 / static_cast<double>(out.cols());
  Eigen::MatrixXd diff = out - y;
  const double loss = 0.5 * diff.squaredNorm() * inv_n;
  return {loss, diff * inv_n};
}

}  // namespace

double evaluate_loss(const Model& model, const TrainingSet& data) {
  data.validate();
  if (static_cast<std::size_t>(data.targets.rows()) != model.target_dim()) {
    throw ArgumentError("target dimension does not match the model");
  }
  constexpr Eigen::Index kChunk = 4096;
  double weighted = 0.0;
  const Eigen::Index n = data.inputs.cols();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const Eigen::MatrixXd out = model.network.forward(Eigen::MatrixXd(data.inputs.middleCols(start, len)));
    weighted += batch_loss(model, out, data.targets.middleCols(start, len)).loss *
                static_cast<double>(len);
  }
  return weighted / static_cast<double>(n);
}

TrainResult train(Model& model, const TrainingSet& data, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch) {
  data.validate();
  if (static_cast<std::size_t>(data.inputs.rows()) != model.network.input_dim()) {
    throw ArgumentError("input dimension does not match the model");
  }
  if (schedule.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(schedule.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");

  TrainResult result;
  result.initial_loss = evaluate_loss(model, data);
  if (!std::isfinite(result.initial_loss)) {
    throw DivergenceError("initial loss is not finite", 0);
  }

  Optimizer opt;
  opt.kind = schedule.optimizer;
  opt.learning_rate = schedule.learning_rate;
  RandomState rng(schedule.seed);

  const std::size_t n = data.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd xb, yb;

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += schedule.batch_size) {
      const std::size_t len = std::min(schedule.batch_size, n - start);
      xb.resize(data.inputs.rows(), static_cast<Eigen::Index>(len));
      yb.resize(data.targets.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = data.inputs.col(order[start + k]);
        yb.col(static_cast<Eigen::Index>(k)) = data.targets.col(order[start + k]);
      }
      const Eigen::MatrixXd out = model.network.forward_train(xb, rng);
      BatchLoss bl;
      try {
        bl = batch_loss(model, out, yb);
      } catch (const DivergenceError&) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch), epoch);
      }
      if (!std::isfinite(bl.loss)) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch), epoch);
      }
      epoch_loss += bl.loss * static_cast<double>(len);
      apply_update(model.network, model.network.backward(bl.grad), opt);
    }
    epoch_loss /= static_cast<double>(n);
    result.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  result.final_loss = schedule.epochs == 0 ? result.initial_loss : evaluate_loss(model, data);
  if (!std::isfinite(result.final_loss)) {
    throw DivergenceError("final loss is not finite", schedule.epochs);
  }
  return result;
}

std::size_t map_index(const GmmParams& g) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < g.num_mixtures(); ++j) {
    if (g.weights(static_cast<Eigen::Index>(j)) > g.weights(static_cast<Eigen::Index>(best))) {
      best = j;
    }
  }
  return best;
}

MapPrediction map_of(const GmmParams& g) {
  const std::size_t j = map_index(g);
  const auto jj = static_cast<Eigen::Index>(j);
  return MapPrediction{g.means.col(jj), g.variances.col(jj), j};
}

std::vector<GmmParams> predict_gmm(const Model& model, const Eigen::MatrixXd& inputs) {
  if (!model.is_mdn()) throw ArgumentError("model has no mixture head");
  const Eigen::MatrixXd raw = model.network.forward(inputs);
  std::vector<GmmParams> out;
  out.reserve(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index i = 0; i < raw.cols(); ++i) {
    out.push_back(head_transform(
        std::span<const double>(raw.col(i).data(), static_cast<std::size_t>(raw.rows())),
        model.mdn));
  }
  return out;
}

MapPrediction predict_map(const Model& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd out = model.network.forward(x);
  if (!model.is_mdn()) {
    return MapPrediction{out, Eigen::VectorXd::Zero(out.size()), 0};
  }
  return map_of(head_transform(out, model.mdn));
}

}  // namespace mdnu
