#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdnu/errors.hpp"
#include "mdnu/ualfd.hpp"
#include "mdnu/uncertainty.hpp"

using namespace mdnu;
using namespace mdnu::lfd;

namespace {

MlpConfig policy_base(std::uint64_t seed = 2) {
  MlpConfig base;
  base.input_dim = sim::kNumFeatures;
  base.hidden_dims = {16, 16};
  base.seed = seed;
  return base;
}

Model policy_mdn(std::size_t k, std::uint64_t seed = 2) {
  MdnConfig mdn;
  mdn.num_mixtures = k;
  mdn.output_dim = 2;
  return make_mdn_model(policy_base(seed), mdn);
}

sim::FeatureVector open_road() {
  sim::FeatureVector f;
  for (std::size_t i = 0; i < 6; ++i) f[i] = sim::kDefaultMaxDistance;
  return f;
}

std::vector<sim::FeatureVector> random_features(std::size_t n, std::uint64_t seed) {
  RandomState rng(seed);
  std::vector<sim::FeatureVector> out(n);
  for (auto& f : out) {
    for (std::size_t i = 0; i < 6; ++i) f[i] = sim::kDefaultMaxDistance * uniform01(rng);
    f[sim::kLaneDeviation] = 3.7 * uniform01(rng) - 1.85;
  }
  return out;
}

EpisodeConfig short_episode(double density) {
  EpisodeConfig cfg;
  cfg.scene.traffic.density = density;
  cfg.timeout_s = 8.0;
  return cfg;
}

}  // namespace

TEST_CASE("heading target decoding") {
  CHECK(HeadingTarget{0.6, 0.8}.angle_deg() == doctest::Approx(53.130102354155979));
  CHECK(HeadingTarget{1.0, 0.0}.angle_deg() == 0.0);
  CHECK(HeadingTarget{2.0, -2.0}.angle_deg() == doctest::Approx(-45.0));
  for (double deg = -170.0; deg <= 170.0; deg += 17.0) {
    CHECK(HeadingTarget::from_degrees(deg).angle_deg() == doctest::Approx(deg));
  }
}

TEST_CASE("policy names round-trip") {
  CHECK(all_policies().size() == 6);
  for (PolicyKind k : all_policies()) CHECK(policy_from_string(to_string(k)) == k);
  CHECK(to_string(PolicyKind::kUalfd2) == "ualfd2");
  CHECK_THROWS_AS(policy_from_string("autopilot"), ConfigError);
}

TEST_CASE("channels and switch distances per policy") {
  CHECK(channel_for(PolicyKind::kUalfd) == UncertaintyChannel::kExplained);
  CHECK(channel_for(PolicyKind::kUalfd2) == UncertaintyChannel::kUnexplained);
  CHECK(channel_for(PolicyKind::kMdnK10) == UncertaintyChannel::kNone);
  const SwitchConfig sc;
  CHECK(immediate_switch_distance(sc, PolicyKind::kUalfd) == 1.5);
  CHECK(immediate_switch_distance(sc, PolicyKind::kUalfd2) == 2.5);
  CHECK(immediate_switch_distance(sc, PolicyKind::kRegNet) == 2.5);
}

TEST_CASE("feature encoding") {
  sim::FeatureVector f = open_road();
  f[sim::kFrontCenter] = 25.0;
  f[sim::kLaneDeviation] = -0.925;
  const Eigen::VectorXd x = FeatureScaling{}.encode(f);
  REQUIRE(x.size() == 7);
  CHECK(x(0) == 1.0);
  CHECK(x(1) == 0.5);
  CHECK(x(6) == doctest::Approx(-0.5));
}

TEST_CASE("expert keeps the lane on an open road") {
  CHECK(expert_policy(open_road()).angle_deg() == doctest::Approx(0.0));
  sim::FeatureVector f = open_road();
  f[sim::kLaneDeviation] = 0.5;  // left of centre: steer right
  CHECK(expert_policy(f).angle_deg() > 0.0);
}

TEST_CASE("expert overtakes on the roomier side") {
  sim::FeatureVector f = open_road();
  f[sim::kFrontCenter] = 15.0;
  f[sim::kFrontLeft] = 30.0;
  CHECK(expert_policy(f).angle_deg() > 0.0);  // right lane is open to d_max
  f[sim::kFrontRight] = 25.0;
  CHECK(expert_policy(f).angle_deg() < 0.0);
  f[sim::kBackLeft] = 2.0;  // left is closing from behind
  CHECK(expert_policy(f).angle_deg() > 0.0);
  f[sim::kBackRight] = 2.0;
  CHECK(expert_policy(f).angle_deg() == doctest::Approx(0.0));
}

TEST_CASE("expert tie-break follows the preference") {
  sim::FeatureVector f = open_road();
  f[sim::kFrontCenter] = 10.0;
  ExpertParams p;
  CHECK(expert_policy(f, p).angle_deg() < 0.0);
  p.prefer_left = false;
  CHECK(expert_policy(f, p).angle_deg() > 0.0);
  CHECK(std::abs(expert_policy(f, p).angle_deg()) <= p.max_heading_deg);
}

TEST_CASE("switching triggers") {
  const Model m = policy_mdn(10);
  const sim::FeatureVector f = open_road();
  SwitchConfig sc;

  sc.log_explained_threshold = -1e9;
  CHECK(switching_policy(m, f, sc, 1.5).mode == DriveMode::kSafe);
  CHECK(switching_policy(m, f, sc, 1.5).uncertainty_trigger);

  sc.log_explained_threshold = 1e9;
  const SwitchDecision calm = switching_policy(m, f, sc, 1.5);
  CHECK(calm.mode == DriveMode::kLearned);
  CHECK(calm.uncertainty > 0.0);

  sim::FeatureVector close = f;
  close[sim::kFrontCenter] = 1.0;
  const SwitchDecision near = switching_policy(m, close, sc, 1.5);
  CHECK(near.mode == DriveMode::kSafe);
  CHECK(near.distance_trigger);
  CHECK_FALSE(near.uncertainty_trigger);
}

TEST_CASE("raising the threshold never adds safe ticks") {
  const Model m = policy_mdn(10, 7);
  const auto feats = random_features(300, 3);
  std::size_t previous = feats.size() + 1;
  SwitchConfig sc;
  for (double t = -20.0; t <= 5.0; t += 0.5) {
    sc.log_explained_threshold = t;
    std::size_t safe = 0;
    for (const auto& f : feats) safe += switching_policy(m, f, sc, 1.5).mode == DriveMode::kSafe;
    CHECK(safe <= previous);
    previous = safe;
  }
}

TEST_CASE("K=1 models never switch on explained variance") {
  const Model m = policy_mdn(1);
  SwitchConfig sc;
  sc.log_explained_threshold = -700.0;
  for (const auto& f : random_features(200, 5)) {
    const SwitchDecision d = switching_policy(m, f, sc, 1.5);
    CHECK(d.uncertainty == 0.0);
    CHECK_FALSE(d.uncertainty_trigger);
    CHECK(d.mode == (f.front_center() < 1.5 ? DriveMode::kSafe : DriveMode::kLearned));
  }
}

TEST_CASE("threshold calibration picks the nearest-rank quantile") {
  const Model m = policy_mdn(10, 9);
  const auto feats = random_features(100, 6);
  Eigen::MatrixXd inputs(7, 100);
  std::vector<double> explained;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    inputs.col(static_cast<Eigen::Index>(i)) = FeatureScaling{}.encode(feats[i]);
    explained.push_back(report(m, inputs.col(static_cast<Eigen::Index>(i))).explained_sum());
  }
  std::sort(explained.begin(), explained.end());
  CHECK(calibrate_log_threshold(m, inputs, 95.0) == doctest::Approx(std::log(explained[94])));
  CHECK(calibrate_log_threshold(m, inputs, 100.0) == doctest::Approx(std::log(explained[99])));
  CHECK(calibrate_log_threshold(m, inputs, 1.0) == doctest::Approx(std::log(explained[0])));
  CHECK_THROWS_AS(calibrate_log_threshold(m, inputs, 0.0), ConfigError);
  CHECK_THROWS_AS(calibrate_log_threshold(m, Eigen::MatrixXd(7, 0), 50.0), ArgumentError);
}

TEST_CASE("learned policies need their model") {
  PolicyModels none;
  CHECK(none.for_policy(PolicyKind::kSafeMode) == nullptr);
  CHECK_THROWS_AS(none.for_policy(PolicyKind::kUalfd), ConfigError);
  CHECK_THROWS_AS(run_episode(PolicyKind::kRegNet, 0, none, short_episode(1.0)), ConfigError);
}

TEST_CASE("safe mode on an empty road holds its lane") {
  const EpisodeResult r = run_episode(PolicyKind::kSafeMode, 0, {}, short_episode(0.0));
  CHECK_FALSE(r.metrics.collision);
  CHECK(r.metrics.num_lane_changes == 0);
  CHECK(r.metrics.lane_dev_dist_mean < 1.0);
  CHECK(r.metrics.safe_tick_fraction() == 1.0);
  CHECK(r.metrics.min_dist_to_cars == sim::kDefaultMaxDistance);
}

TEST_CASE("episodes are deterministic and replay logs follow the ticks") {
  const Model k10 = policy_mdn(10);
  PolicyModels models;
  models.mdn_k10 = &k10;
  EpisodeConfig cfg = short_episode(1.0);
  cfg.record_log = true;
  const EpisodeResult a = run_episode(PolicyKind::kUalfd, 4, models, cfg);
  const EpisodeResult b = run_episode(PolicyKind::kUalfd, 4, models, cfg);
  CHECK(a.metrics == b.metrics);
  CHECK(a.log.size() == a.metrics.total_ticks);
  CHECK(a.metrics.elapsed_time <= cfg.timeout_s + 1e-9);

  std::ostringstream out;
  write_replay_csv(out, a.log);
  CHECK(out.str().find('\n') != std::string::npos);
}

TEST_CASE("suite results do not depend on the job count") {
  const Model k10 = policy_mdn(10);
  const Model k1 = policy_mdn(1);
  PolicyModels models{&k10, &k1, nullptr};
  const std::vector<PolicyKind> policies{PolicyKind::kSafeMode, PolicyKind::kUalfd, PolicyKind::kMdnK1};
  const SuiteResult one = evaluate_suite(policies, 3, {1.0, 0.8}, models, short_episode(1.0), {}, 10, 1);
  const SuiteResult many = evaluate_suite(policies, 3, {1.0, 0.8}, models, short_episode(1.0), {}, 10, 3);
  REQUIRE(one.episodes.size() == 18);
  REQUIRE(one.table.size() == 6);
  for (std::size_t i = 0; i < one.episodes.size(); ++i) CHECK(one.episodes[i].metrics == many.episodes[i].metrics);
  CHECK(one.table[0].density == 1.0);
  CHECK(one.table[0].policy == PolicyKind::kSafeMode);
  CHECK(one.table[3].density == 0.8);
}

TEST_CASE("aggregate averages") {
  EpisodeMetrics a, b;
  a.collision = true;
  a.elapsed_time = 10.0;
  a.safe_ticks = 1;
  a.total_ticks = 4;
  b.elapsed_time = 20.0;
  b.num_lane_changes = 2;
  b.safe_ticks = 3;
  b.total_ticks = 4;
  const PolicyAggregate agg = aggregate(PolicyKind::kUalfd, 1.0, {a, b});
  CHECK(agg.episodes == 2);
  CHECK(agg.collision_ratio_pct == 50.0);
  CHECK(agg.elapsed_s == 15.0);
  CHECK(agg.lane_changes == 1.0);
  CHECK(agg.safe_tick_fraction == 0.5);
}

TEST_CASE("metrics CSV columns") {
  std::ostringstream out;
  write_metrics_csv(out, {aggregate(PolicyKind::kSafeMode, 1.0, {EpisodeMetrics{}})});
  const std::string text = out.str();
  CHECK(text.rfind("policy,density,collision_ratio_pct,min_dist_m,lane_dev_mm,lane_dev_deg,elapsed_s,lane_changes,switch_count", 0) == 0);
  CHECK(text.find("\nsafe_mode,") != std::string::npos);
}

TEST_CASE("demonstrations are seeded and shaped for the policy nets") {
  DemoConfig cfg;
  cfg.num_episodes = 2;
  cfg.seed = 5;
  cfg.episode.timeout_s = 5.0;
  DemoStats stats;
  const TrainingSet a = collect_demonstrations(cfg, &stats);
  const TrainingSet b = collect_demonstrations(cfg);
  CHECK(a.inputs.rows() == 7);
  CHECK(a.targets.rows() == 2);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(stats.samples == static_cast<std::size_t>(a.inputs.cols()));
  CHECK(stats.episodes_kept + stats.episodes_discarded == 2);
}
