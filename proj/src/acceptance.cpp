#include "mdnu/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>

#include "mdnu/config.hpp"
#include "mdnu/driving.hpp"
#include "mdnu/errors.hpp"
#include "mdnu/mdn.hpp"
#include "mdnu/parallel.hpp"
#include "mdnu/synthetic.hpp"
#include "mdnu/ualfd.hpp"
#include "mdnu/uncertainty.hpp"

namespace mdnu::acceptance {
namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kTitles[kNumCriteria + 1] = {
    "",
    "law of total variance on 10^4 random mixtures",
    "total variance against 10^6-sample Monte Carlo",
    "MDN gradients against central differences",
    "heavy-noise signature",
    "absence-of-data signature",
    "composition signature",
    "explained variance of K=1 models is exactly zero",
    "single pass vs MC dropout (T=50) timing",
    "driving safety ordering at density 1.0",
    "explained vs unexplained switching channel",
    "simulator conformance",
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

struct Context {
  const Options& opt;

  void note(const std::string& msg) const {
    if (opt.log) *opt.log << "  .. " << msg << std::endl;
  }
  std::optional<std::filesystem::path> artifact(const std::string& name) const {
    if (opt.artifact_dir.empty()) return std::nullopt;
    std::filesystem::create_directories(opt.artifact_dir);
    return std::filesystem::path(opt.artifact_dir) / name;
  }
};

GmmParams random_gmm(RandomState& rng, std::size_t max_k, std::size_t max_d, double mean_span,
                     double var_lo, double var_hi) {
  const std::size_t k = 1 + static_cast<std::size_t>(rng() % max_k);
  const std::size_t d = 1 + static_cast<std::size_t>(rng() % max_d);
  GmmParams g;
  g.weights.resize(static_cast<Eigen::Index>(k));
  std::exponential_distribution<double> expo(1.0);
  for (Eigen::Index j = 0; j < g.weights.size(); ++j) g.weights(j) = expo(rng) + 1e-12;
  g.weights /= g.weights.sum();
  g.means.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
  g.variances.resize(g.means.rows(), g.means.cols());
  for (Eigen::Index j = 0; j < g.means.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.means.rows(); ++i) {
      g.means(i, j) = mean_span * (2.0 * uniform01(rng) - 1.0);
      g.variances(i, j) = var_lo + (var_hi - var_lo) * uniform01(rng);
    }
  }
  return g;
}

// 1 -----------------------------------------------------------------------

CriterionResult total_variance_identity(const Context&) {
  CriterionResult r;
  const auto t0 = Clock::now();
  RandomState rng(101);
  double worst = 0.0;
  for (int n = 0; n < 10000; ++n) {
    // Wide ranges on purpose: tiny and huge variances, far-apart means.
    GmmParams g = random_gmm(rng, 16, 8, 50.0, 1e-4, 25.0);
    const Eigen::VectorXd total = total_variance(g);
    const Eigen::VectorXd parts = explained_variance(g) + unexplained_variance(g);
    for (Eigen::Index i = 0; i < total.size(); ++i) {
      worst = std::max(worst, std::abs(total(i) - parts(i)) / std::abs(total(i)));
    }
  }
  r.seconds = seconds_since(t0);
  r.passed = worst <= 1e-10 && r.seconds < 5.0;
  r.detail = fmt("max relative error %.3g (limit 1e-10), %.2f s (limit 5 s)", worst, r.seconds);
  return r;
}

// 2 -----------------------------------------------------------------------

CriterionResult monte_carlo_oracle(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  constexpr std::size_t kMixtures = 100;
  constexpr std::size_t kSamples = 1000000;
  RandomState gen(202);
  std::vector<GmmParams> gmms;
  for (std::size_t m = 0; m < kMixtures; ++m) gmms.push_back(random_gmm(gen, 16, 8, 2.0, 0.5, 2.0));

  std::vector<double> worst(kMixtures, 0.0);
  parallel_for(kMixtures, ctx.opt.jobs, [&](std::size_t m) {
    const GmmParams& g = gmms[m];
    RandomState rng(7000 + m);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = g.means.rows();
    std::vector<double> cumulative(g.num_mixtures());
    double acc = 0.0;
    for (std::size_t j = 0; j < cumulative.size(); ++j) cumulative[j] = acc += g.weights(static_cast<Eigen::Index>(j));
    const Eigen::MatrixXd sd = g.variances.cwiseSqrt();
    const Eigen::VectorXd mean = total_mean(g);
    // Centred on the analytic mean to keep the accumulation well conditioned.
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d), s2 = Eigen::VectorXd::Zero(d);
    for (std::size_t n = 0; n < kSamples; ++n) {
      const double u = uniform01(rng) * acc;
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const Eigen::Index j = std::min<Eigen::Index>(static_cast<Eigen::Index>(it - cumulative.begin()), g.means.cols() - 1);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double y = g.means(i, j) + sd(i, j) * normal(rng) - mean(i);
        s1(i) += y;
        s2(i) += y * y;
      }
    }
    const double n = static_cast<double>(kSamples);
    const Eigen::VectorXd empirical = s2 / n - (s1 / n).cwiseAbs2();
    const Eigen::VectorXd analytic = total_variance(g);
    for (Eigen::Index i = 0; i < d; ++i) {
      worst[m] = std::max(worst[m], std::abs(empirical(i) - analytic(i)) / analytic(i));
    }
  });
  const double max_err = *std::max_element(worst.begin(), worst.end());
  r.seconds = seconds_since(t0);
  r.passed = max_err <= 0.01 && r.seconds < 60.0;
  r.detail = fmt("max relative deviation %.4f over %zu mixtures (limit 0.01), %.1f s (limit 60 s)", max_err,
                 kMixtures, r.seconds);
  return r;
}

// 3 -----------------------------------------------------------------------

double pipeline_loss(Model& model, const std::vector<double>& params, const TrainingSet& data) {
  model.network.set_parameters(params);
  return nll_loss(model.network.forward(data.inputs), data.targets, model.mdn).loss;
}

CriterionResult gradient_check(const Context&) {
  CriterionResult r;
  const auto t0 = Clock::now();
  struct Case {
    std::size_t in;
    std::vector<std::size_t> hidden;
    std::size_t out;
    std::size_t k;
  };
  const std::vector<Case> cases{{2, {8}, 1, 3}, {3, {6, 5}, 2, 3}, {8, {8, 8}, 3, 2}, {4, {7}, 2, 1}};
  constexpr double h = 1e-5;
  std::size_t checked = 0;
  double worst = 0.0;
  RandomState rng(303);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const Case& cs = cases[c];
    MlpConfig base;
    base.input_dim = cs.in;
    base.hidden_dims = cs.hidden;
    base.seed = 40 + c;
    MdnConfig mdn;
    mdn.num_mixtures = cs.k;
    mdn.output_dim = cs.out;
    Model model = make_mdn_model(base, mdn);

    TrainingSet data;
    data.inputs = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(cs.in), 6, [&] { return 2.0 * uniform01(rng) - 1.0; });
    data.targets = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(cs.out), 6, [&] { return 3.0 * uniform01(rng) - 1.5; });

    RandomState unused(0);
    const Eigen::MatrixXd raw = model.network.forward_train(data.inputs, unused);
    const Gradients grads = model.network.backward(nll_loss(raw, data.targets, model.mdn).grad_raw);
    std::vector<double> analytic;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < grads.weights[l].rows(); ++i) {
        for (Eigen::Index j = 0; j < grads.weights[l].cols(); ++j) analytic.push_back(grads.weights[l](i, j));
      }
      for (Eigen::Index i = 0; i < grads.biases[l].size(); ++i) analytic.push_back(grads.biases[l](i));
    }

    const std::vector<double> params = model.network.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      std::vector<double> probe = params;
      probe[p] = params[p] + h;
      const double up = pipeline_loss(model, probe, data);
      probe[p] = params[p] - h;
      const double down = pipeline_loss(model, probe, data);
      const double numeric = (up - down) / (2.0 * h);
      // Relative error, with an absolute floor for gradients that vanish.
      const double scale = std::max({std::abs(analytic[p]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic[p] - numeric) / scale);
      ++checked;
    }
  }
  r.seconds = seconds_since(t0);
  r.passed = worst <= 1e-4 && checked >= 100;
  r.detail = fmt("%zu parameters over %zu networks, max relative error %.3g (limit 1e-4)", checked, cases.size(), worst);
  return r;
}

// 4-6 ---------------------------------------------------------------------

Model train_scenario_model(const Context& ctx, ScenarioKind kind) {
  ExperimentConfig cfg;
  cfg.set("seed", std::to_string(ctx.opt.seed));
  cfg.set("scenario.kind", to_string(kind));
  ScenarioSpec spec = scenario_spec(cfg);
  const TrainingSet data = generate(spec);
  Model model = make_mdn_model(mlp_config(cfg, 2), mdn_config(cfg, 1));
  const TrainSchedule schedule = train_schedule(cfg);
  ctx.note(fmt("training %s: %zu points, %zu epochs", to_string(kind).c_str(), data.size(), schedule.epochs));
  const TrainResult tr = train(model, data, schedule);
  ctx.note(fmt("loss %.4f -> %.4f", tr.initial_loss, tr.final_loss));
  return model;
}

GridEval scenario_grid(const Context& ctx, const Model& model, const std::string& name) {
  GridEval grid = evaluate_grid(model, 40, 6.0);
  if (auto path = ctx.artifact("grid_" + name + ".csv")) {
    std::ofstream out(*path);
    write_grid_csv(out, grid);
  }
  return grid;
}

CriterionResult heavy_noise_signature(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  const Model model = train_scenario_model(ctx, ScenarioKind::kHeavyNoise);
  const QuadrantStats q = quadrant_stats(scenario_grid(ctx, model, "heavy_noise"));
  const double noisy = q.quadrant[0].unexplained;
  const double clean = q.others(0).unexplained;
  const double ratio = noisy / clean;
  r.seconds = seconds_since(t0);
  r.passed = ratio >= 3.0 && r.seconds < 600.0;
  r.detail = fmt("unexplained Q1 %.4f vs others %.4f, ratio %.1f (limit 3), %.0f s (limit 600 s)", noisy, clean, ratio,
                 r.seconds);
  return r;
}

CriterionResult absence_signature(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  const Model model = train_scenario_model(ctx, ScenarioKind::kAbsenceOfData);
  const QuadrantStats q = quadrant_stats(scenario_grid(ctx, model, "absence_of_data"));
  const double empty = q.quadrant[0].explained;
  const double covered = q.others(0).explained;
  const double ratio = empty / covered;
  r.seconds = seconds_since(t0);
  r.passed = ratio >= 2.0;
  r.detail = fmt("explained Q1 %.4f vs others %.4f, ratio %.1f (limit 2)", empty, covered, ratio);
  return r;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

CriterionResult composition_signature(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  const Model model = train_scenario_model(ctx, ScenarioKind::kComposition);
  const GridEval grid = scenario_grid(ctx, model, "composition");
  std::vector<double> explained, unexplained, gap;
  for (const GridCell& c : grid.cells) {
    explained.push_back(c.report.explained_sum());
    unexplained.push_back(c.report.unexplained_sum());
    const double f = target_fn(c.x1, c.x2);
    gap.push_back(4.0 * f * f);
  }
  const double med_u = median(unexplained);
  const double med_e = median(explained);
  const double rho = pearson(explained, gap);
  r.seconds = seconds_since(t0);
  r.passed = med_u <= 0.2 * med_e && rho >= 0.5;
  r.detail = fmt("median unexplained %.4f vs 0.2 x median explained %.4f; correlation with (2f)^2 %.3f (limit 0.5)",
                 med_u, 0.2 * med_e, rho);
  return r;
}

// 7 -----------------------------------------------------------------------

CriterionResult k1_degeneracy(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  std::vector<Model> models;
  for (std::size_t s = 0; s < 4; ++s) {
    MlpConfig base;
    base.input_dim = 2 + s;
    base.hidden_dims = s % 2 == 0 ? std::vector<std::size_t>{32, 32} : std::vector<std::size_t>{16};
    base.dropout_keep_prob = s == 3 ? 0.8 : 1.0;
    base.seed = 70 + s;
    MdnConfig mdn;
    mdn.num_mixtures = 1;
    mdn.output_dim = 1 + s % 3;
    models.push_back(make_mdn_model(base, mdn));
  }
  {
    // One trained density network on data where a K>1 model would spread its means.
    ExperimentConfig cfg;
    cfg.set("seed", std::to_string(ctx.opt.seed));
    cfg.set("scenario.kind", "composition");
    cfg.set("scenario.points", "1000");
    cfg.set("model.hidden", "64,64");
    cfg.set("model.mixtures", "1");
    cfg.set("train.epochs", "30");
    Model m = make_mdn_model(mlp_config(cfg, 2), mdn_config(cfg, 1));
    train(m, generate(scenario_spec(cfg)), train_schedule(cfg));
    models.push_back(std::move(m));
  }

  RandomState rng(707);
  std::size_t evaluated = 0, nonzero = 0;
  for (const Model& m : models) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(m.network.input_dim()), 2000,
                                                           [&] { return 20.0 * uniform01(rng) - 10.0; });
    for (const UncertaintyReport& rep : report_batch(m, x)) {
      ++evaluated;
      if ((rep.explained.array() != 0.0).any()) ++nonzero;
    }
  }
  const GridEval grid = evaluate_grid(models.back(), 40, 6.0);
  for (const GridCell& c : grid.cells) {
    ++evaluated;
    if (c.report.explained_sum() != 0.0) ++nonzero;
  }
  r.seconds = seconds_since(t0);
  r.passed = nonzero == 0;
  r.detail = fmt("%zu of %zu reports over %zu models had nonzero explained variance (limit 0)", nonzero, evaluated,
                 models.size());
  return r;
}

// 8 -----------------------------------------------------------------------

CriterionResult timing(const Context& ctx) {
  CriterionResult r;
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.set("seed", std::to_string(ctx.opt.seed));
  cfg.set("model.keep_prob", cfg.text("bench.keep_prob"));
  const Model model = make_mdn_model(mlp_config(cfg, 2), mdn_config(cfg, 1));
  constexpr std::size_t kCalls = 1000;
  constexpr std::size_t kSamples = 50;

  RandomState rng(808);
  std::vector<Eigen::VectorXd> xs;
  for (std::size_t i = 0; i < kCalls; ++i) xs.push_back(Eigen::Vector2d(12.0 * uniform01(rng) - 6.0, 12.0 * uniform01(rng) - 6.0));

  double sink = 0.0;
  auto t = Clock::now();
  for (const auto& x : xs) sink += report(model, x).total_sum();
  const double single_ms = 1e3 * seconds_since(t) / kCalls;
  t = Clock::now();
  for (const auto& x : xs) sink += mc_dropout_variance(model, x, kSamples, rng).variance.sum();
  const double mc_ms = 1e3 * seconds_since(t) / kCalls;
  const double speedup = mc_ms / single_ms;
  r.seconds = seconds_since(t0);
  r.passed = std::isfinite(sink) && speedup >= 10.0;
  r.detail = fmt("%.4f ms vs %.4f ms per call over %zu calls, speedup %.1fx (limit 10x)", single_ms, mc_ms, kCalls,
                 speedup);
  return r;
}

// 9-10 --------------------------------------------------------------------

struct DrivingRun {
  lfd::SuiteResult suite;
  double threshold = 0.0;
  double seconds = 0.0;
  lfd::DemoStats demo_stats;
};

DrivingRun driving_pipeline(const Context& ctx) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.set("seed", std::to_string(ctx.opt.seed));
  cfg.set("jobs", std::to_string(ctx.opt.jobs));

  DrivingRun run;
  const TrainingSet demos = lfd::collect_demonstrations(demo_config(cfg), &run.demo_stats);
  ctx.note(fmt("demonstrations: %zu kept, %zu discarded, %zu samples", run.demo_stats.episodes_kept,
               run.demo_stats.episodes_discarded, run.demo_stats.samples));
  const lfd::DrivingModels models = lfd::train_driving_models(demos, driving_train_config(cfg));

  lfd::SwitchConfig switching = switch_config(cfg);
  run.threshold = lfd::calibrate_log_threshold(models.mdn_k10, demos.inputs, cfg.real("switch.threshold_percentile"));
  switching.log_explained_threshold = run.threshold;
  ctx.note(fmt("calibrated log threshold %.3f", run.threshold));

  run.suite = lfd::evaluate_suite(lfd::all_policies(), 50, {1.0, 0.8}, models.view(), episode_config(cfg), switching,
                                  0, ctx.opt.jobs);
  if (auto path = ctx.artifact("driving_metrics.csv")) {
    std::ofstream out(*path);
    lfd::write_metrics_csv(out, run.suite.table);
  }
  if (auto path = ctx.artifact("driving_episodes.csv")) {
    std::ofstream out(*path);
    lfd::write_episodes_csv(out, run.suite.episodes);
  }
  if (auto path = ctx.artifact("driving_table.txt")) {
    std::ofstream out(*path);
    lfd::write_metrics_table(out, run.suite.table);
  }
  run.seconds = seconds_since(t0);
  return run;
}

const lfd::PolicyAggregate& row(const DrivingRun& run, lfd::PolicyKind kind, double density) {
  for (const auto& a : run.suite.table) {
    if (a.policy == kind && a.density == density) return a;
  }
  throw StateError("suite has no row for " + lfd::to_string(kind));
}

CriterionResult driving_safety(const DrivingRun& run) {
  using lfd::PolicyKind;
  CriterionResult r;
  const auto& ualfd = row(run, PolicyKind::kUalfd, 1.0);
  const auto& safe = row(run, PolicyKind::kSafeMode, 1.0);
  const auto& k10 = row(run, PolicyKind::kMdnK10, 1.0);
  const auto& reg = row(run, PolicyKind::kRegNet, 1.0);
  const bool a = safe.collision_ratio_pct == 0.0 && ualfd.collision_ratio_pct == 0.0;
  const bool b = ualfd.collision_ratio_pct <= k10.collision_ratio_pct && k10.collision_ratio_pct <= reg.collision_ratio_pct;
  const bool c = ualfd.elapsed_s <= safe.elapsed_s;
  r.seconds = run.seconds;
  r.passed = a && b && c && ualfd.episodes >= 50 && run.seconds < 1200.0;
  r.detail = fmt("collisions %% ualfd %.0f, safe_mode %.0f, mdn_k10 %.0f, regnet %.0f; elapsed ualfd %.2f s vs "
                 "safe_mode %.2f s; %zu episodes each; pipeline %.0f s (limit 1200 s)",
                 ualfd.collision_ratio_pct, safe.collision_ratio_pct, k10.collision_ratio_pct, reg.collision_ratio_pct,
                 ualfd.elapsed_s, safe.elapsed_s, ualfd.episodes, run.seconds);
  return r;
}

CriterionResult channel_comparison(const DrivingRun& run) {
  using lfd::PolicyKind;
  CriterionResult r;
  const auto& u1 = row(run, PolicyKind::kUalfd, 1.0);
  const auto& u2 = row(run, PolicyKind::kUalfd2, 1.0);
  r.passed = u2.safe_tick_fraction >= 2.0 * u1.safe_tick_fraction && u2.lane_changes <= u1.lane_changes;
  r.detail = fmt("safe-mode tick fraction ualfd2 %.3f vs ualfd %.3f (need >= 2x); lane changes ualfd2 %.2f vs "
                 "ualfd %.2f",
                 u2.safe_tick_fraction, u1.safe_tick_fraction, u2.lane_changes, u1.lane_changes);
  return r;
}

// 11 ----------------------------------------------------------------------

// Exhaustive scan written against car intervals rather than centre distances.
sim::FeatureVector oracle_features(const sim::SimState& s, const sim::Track& track, double d_max) {
  const auto lane_index = [&](double y) {
    const int raw = static_cast<int>(std::floor(y / track.lane_width));
    return std::clamp(raw, 0, track.num_lanes - 1);
  };
  const int ego_lane = lane_index(s.ego.y);
  const double ego_rear = s.ego.x - 0.5 * s.ego.length;
  const double ego_front = s.ego.x + 0.5 * s.ego.length;
  sim::FeatureVector f;
  for (int side = 0; side < 3; ++side) {
    const int lane = ego_lane + side - 1;
    double front = d_max, back = d_max;
    if (lane < 0 || lane >= track.num_lanes) {
      front = back = 0.0;
    } else {
      for (const auto& car : s.traffic) {
        if (lane_index(car.state.y) != lane) continue;
        const double rear = car.state.x - 0.5 * car.state.length;
        const double nose = car.state.x + 0.5 * car.state.length;
        if (rear > ego_front) {
          front = std::min(front, rear - ego_front);
        } else if (nose < ego_rear) {
          back = std::min(back, ego_rear - nose);
        } else {
          front = back = 0.0;
        }
      }
    }
    f[static_cast<std::size_t>(side)] = std::min(front, d_max);
    f[static_cast<std::size_t>(3 + side)] = std::min(back, d_max);
  }
  f[sim::kLaneDeviation] = (ego_lane + 0.5) * track.lane_width - s.ego.y;
  return f;
}

CriterionResult simulator_conformance(const Context&) {
  CriterionResult r;
  const auto t0 = Clock::now();
  RandomState rng(1111);

  // Features against the oracle.
  std::size_t mismatches = 0;
  double worst_feature = 0.0;
  for (int scene = 0; scene < 1000; ++scene) {
    sim::Track track;
    track.num_lanes = 1 + static_cast<int>(rng() % 6);
    track.lane_width = 3.0 + uniform01(rng);
    sim::SimState s;
    s.ego.y = (0.02 + 0.96 * uniform01(rng)) * track.width();
    s.ego.x = 200.0 * uniform01(rng);
    s.ego.heading_deg = 20.0 * uniform01(rng) - 10.0;
    const int cars = static_cast<int>(rng() % 40);
    for (int c = 0; c < cars; ++c) {
      sim::TrafficCar car;
      car.state.x = s.ego.x + 140.0 * uniform01(rng) - 70.0;
      car.state.y = uniform01(rng) * track.width();
      car.state.length = 3.5 + 3.0 * uniform01(rng);
      car.state.speed_kmh = 60.0;
      s.traffic.push_back(car);
    }
    const double d_max = scene % 2 == 0 ? sim::kDefaultMaxDistance : 20.0 + 40.0 * uniform01(rng);
    const sim::FeatureVector got = sim::extract_features(s, track, d_max);
    const sim::FeatureVector want = oracle_features(s, track, d_max);
    bool same = true;
    for (std::size_t i = 0; i < sim::kNumFeatures; ++i) {
      const double err = std::abs(got[i] - want[i]);
      worst_feature = std::max(worst_feature, err);
      if (err > 1e-9) same = false;
    }
    if (!same) ++mismatches;
  }

  // Constant commands trace a circle of radius v / w.
  double worst_radius = 0.0;
  for (const auto& [v_kmh, w_deg] : std::vector<std::pair<double, double>>{{90, 20}, {36, 45}, {120, 5}, {50, -30}}) {
    sim::CarState car;
    const double v = v_kmh / sim::kKmhPerMps;
    const double expected = v / (std::abs(w_deg) * std::acos(-1.0) / 180.0);
    const int steps = static_cast<int>(std::lround(360.0 / std::abs(w_deg) / 0.1));
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i < steps; ++i) {
      car = sim::step_unicycle(car, v_kmh, w_deg, 0.1);
      pts.emplace_back(car.x, car.y);
    }
    Eigen::Vector2d centre = Eigen::Vector2d::Zero();
    for (const auto& p : pts) centre += p;
    centre /= static_cast<double>(pts.size());
    double radius = 0.0;
    for (const auto& p : pts) radius += (p - centre).norm();
    radius /= static_cast<double>(pts.size());
    worst_radius = std::max(worst_radius, std::abs(radius - expected) / expected);
  }

  // Safe controller on an empty road from offsets up to half a lane.
  double worst_settle = 0.0;
  sim::Track track;
  const sim::SafeControllerGains gains;
  for (int k = -20; k <= 20; ++k) {
    sim::SimState s;
    s.ego.y = track.lane_center(2) + k / 20.0 * 0.5 * track.lane_width;
    s.ego.speed_kmh = sim::kCruiseSpeedKmh;
    for (int tick = 0; tick < 50; ++tick) {
      const sim::Perception p = sim::perceive(s, track);
      const sim::SafeCommand cmd = sim::safe_controller(p.features, p.center, sim::wrap_degrees(s.ego.heading_deg),
                                                        p.features.lane_deviation(), gains);
      sim::step_world(s, track, cmd.speed_mps * sim::kKmhPerMps, cmd.yaw_rate_degps);
    }
    worst_settle = std::max(worst_settle, std::abs(sim::extract_features(s, track).lane_deviation()));
  }

  r.seconds = seconds_since(t0);
  r.passed = mismatches == 0 && worst_radius <= 0.01 && worst_settle < 0.05;
  r.detail = fmt("feature mismatches %zu/1000 (max diff %.2g); circle radius error %.4f%% (limit 1%%); "
                 "|d_dev| after 5 s at most %.4f m (limit 0.05)",
                 mismatches, worst_feature, 100.0 * worst_radius, worst_settle);
  return r;
}

}  // namespace

std::vector<CriterionResult> run(const Options& options, std::vector<int> ids) {
  if (ids.empty()) {
    for (int i = 1; i <= kNumCriteria; ++i) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) {
    if (id < 1 || id > kNumCriteria) throw ConfigError("no acceptance criterion " + std::to_string(id));
  }

  const Context ctx{options};
  std::unique_ptr<DrivingRun> driving;
  std::string driving_error;
  std::vector<CriterionResult> results;
  for (int id : ids) {
    if (options.log) *options.log << "criterion " << id << std::endl;
    CriterionResult res;
    try {
      switch (id) {
        case 1: res = total_variance_identity(ctx); break;
        case 2: res = monte_carlo_oracle(ctx); break;
        case 3: res = gradient_check(ctx); break;
        case 4: res = heavy_noise_signature(ctx); break;
        case 5: res = absence_signature(ctx); break;
        case 6: res = composition_signature(ctx); break;
        case 7: res = k1_degeneracy(ctx); break;
        case 8: res = timing(ctx); break;
        case 9:
        case 10:
          if (!driving && driving_error.empty()) {
            try {
              driving = std::make_unique<DrivingRun>(driving_pipeline(ctx));
            } catch (const std::exception& e) {
              driving_error = e.what();
            }
          }
          if (!driving) throw std::runtime_error(driving_error);
          res = id == 9 ? driving_safety(*driving) : channel_comparison(*driving);
          break;
        case 11: res = simulator_conformance(ctx); break;
      }
    } catch (const std::exception& e) {
      res.passed = false;
      res.detail = std::string("error: ") + e.what();
    }
    res.id = id;
    res.title = kTitles[id];
    if (options.log) *options.log << format_line(res) << std::endl;
    results.push_back(std::move(res));
  }
  return results;
}

std::string format_line(const CriterionResult& r) {
  return fmt("%s %2d %s: %s [%.1f s]", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(), r.detail.c_str(), r.seconds);
}

}  // namespace mdnu::acceptance
