#pragma once

// Learning from demonstration on the highway simulator: the scripted expert,
// demonstration collection, learned heading policies, the uncertainty-gated
// switch to the safe controller, and episode/suite evaluation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdnu/driving.hpp"
#include "mdnu/mdn.hpp"

namespace mdnu::lfd {

enum class PolicyKind { kUalfd, kUalfd2, kMdnK10, kMdnK1, kRegNet, kSafeMode };

std::string to_string(PolicyKind kind);
/// Names: ualfd, ualfd2, mdn_k10, mdn_k1, regnet, safe_mode. Throws ConfigError otherwise.
PolicyKind policy_from_string(const std::string& name);
const std::vector<PolicyKind>& all_policies();

/// Desired heading encoded as (cos, sin); the pair need not be unit length.
struct HeadingTarget {
  double cos_component = 1.0;
  double sin_component = 0.0;

  double angle_deg() const;
  static HeadingTarget from_degrees(double deg);
};

/// Network inputs: gaps divided by d_max, lane deviation divided by half a lane.
struct FeatureScaling {
  double d_max = sim::kDefaultMaxDistance;
  double lane_width = 3.7;

  Eigen::VectorXd encode(const sim::FeatureVector& f) const;
};

struct ExpertParams {
  double keep_clearance = 35.0;  // stay in lane while d^F_C is at least this
  double gain_margin = 8.0;      // a side lane must offer this much more frontal room
  double min_front = 20.0;
  double min_rear = 6.0;
  double lookahead = 12.0;       // metres ahead at which the target lateral offset is reached
  double max_heading_deg = 25.0;
  double lane_width = 3.7;
  bool prefer_left = true;       // tie-break between equally good side lanes
};

/// Picks the lane with the most frontal clearance among {left, current,
/// right} (side lanes only when their front and rear gaps are safe), then
/// steers toward that lane's centre.
HeadingTarget expert_policy(const sim::FeatureVector& features, const ExpertParams& params = {});

struct EpisodeConfig {
  sim::SceneConfig scene;
  sim::TrafficParams traffic_params;
  sim::SafeControllerGains safe_gains;
  FeatureScaling scaling;
  double timeout_s = 60.0;
  double cruise_speed_kmh = sim::kCruiseSpeedKmh;
  std::size_t lane_change_persist_ticks = 10;  // 1 s at 10 Hz
  bool record_log = false;
};

struct DemoConfig {
  std::size_t num_episodes = 200;
  std::uint64_t seed = 0;
  EpisodeConfig episode;
  ExpertParams expert;
  double density_min = 0.6;
  double density_max = 1.2;
  double max_start_offset = 30.0;    // random longitudinal start jitter, metres
  double max_lateral_offset = 0.6;   // random lateral start jitter, metres
  bool randomize_preference = true;  // per-episode left/right tie-break
  double lookahead_min = 12.0;
  double lookahead_max = 12.0;
  // Gaussian noise added to each recorded (cos, sin) label component, with
  // standard deviation label_noise + label_noise_near * (1 - d^F_C / d_max):
  // demonstrators steer less consistently the closer the car ahead.
  double label_noise = 0.02;
  double label_noise_near = 0.4;
  // Slowly varying perturbation (Ornstein-Uhlenbeck, stationary standard
  // deviation execution_noise_deg, correlation time execution_noise_tau_s)
  // added to the heading the expert actually drives. Labels stay clean, so
  // the data covers recoveries from states the expert alone never visits.
  double execution_noise_deg = 8.0;
  double execution_noise_tau_s = 1.0;
  double immediate_switch_distance = 2.5;
};

struct DemoStats {
  std::size_t episodes_kept = 0;
  std::size_t episodes_discarded = 0;
  std::size_t samples = 0;
};

/// Runs the expert in randomized scenes and records (features -> heading)
/// pairs at every tick. Episodes with a collision are dropped entirely.
/// Inputs are encoded with `cfg.episode.scaling`. Throws
/// ConfigError when no episode survives.
TrainingSet collect_demonstrations(const DemoConfig& cfg, DemoStats* stats = nullptr);

/// MAP mean for MDN heads, raw output for regressors; decoded with atan2.
HeadingTarget learned_policy(const Model& model, const sim::FeatureVector& features,
                             const FeatureScaling& scaling = {});

enum class UncertaintyChannel { kNone, kExplained, kUnexplained };

struct SwitchConfig {
  double log_explained_threshold = -2.0;
  double immediate_switch_distance_ualfd = 1.5;
  double immediate_switch_distance_others = 2.5;
  UncertaintyChannel uncertainty_channel = UncertaintyChannel::kExplained;
  std::size_t exit_hold_ticks = 0;  // optional hysteresis; 0 = leave safe mode immediately

  void validate() const;
};

UncertaintyChannel channel_for(PolicyKind kind);
double immediate_switch_distance(const SwitchConfig& cfg, PolicyKind kind);

/// Log of the `percentile` quantile (nearest rank, percentile in (0, 100])
/// of the chosen uncertainty channel over the columns of `inputs`. Picks a
/// switching threshold from data when the variance scale is unknown.
double calibrate_log_threshold(const Model& model, const Eigen::MatrixXd& inputs, double percentile,
                               UncertaintyChannel channel = UncertaintyChannel::kExplained);

enum class DriveMode { kLearned, kSafe };

struct SwitchDecision {
  DriveMode mode = DriveMode::kLearned;
  HeadingTarget target;
  double uncertainty = 0.0;  // chosen channel summed over outputs; 0 for kNone
  bool distance_trigger = false;
  bool uncertainty_trigger = false;
};

/// Safe mode when log(u) > threshold or d^F_C < switch_distance, learned otherwise.
SwitchDecision switching_policy(const Model& model, const sim::FeatureVector& features,
                                const SwitchConfig& cfg, double switch_distance,
                                const FeatureScaling& scaling = {});

struct EpisodeMetrics {
  bool collision = false;
  bool reached_goal = false;
  double min_dist_to_cars = 0.0;     // metres, bumper to bumper
  double lane_dev_dist_mean = 0.0;   // millimetres
  double lane_dev_deg_mean = 0.0;    // degrees
  double elapsed_time = 0.0;         // seconds
  int num_lane_changes = 0;
  int mode_switch_count = 0;         // learned -> safe transitions after the first tick
  std::size_t safe_ticks = 0;
  std::size_t total_ticks = 0;

  double safe_tick_fraction() const {
    return total_ticks == 0 ? 0.0 : static_cast<double>(safe_ticks) / static_cast<double>(total_ticks);
  }
  bool operator==(const EpisodeMetrics&) const = default;
};

struct ReplayRecord {
  double time = 0.0;
  double x = 0.0, y = 0.0, heading_deg = 0.0, speed_kmh = 0.0;
  DriveMode mode = DriveMode::kLearned;
  double uncertainty = 0.0;
  sim::FeatureVector features;
};

struct EpisodeResult {
  EpisodeMetrics metrics;
  std::vector<ReplayRecord> log;
};

struct PolicyModels {
  const Model* mdn_k10 = nullptr;
  const Model* mdn_k1 = nullptr;
  const Model* regnet = nullptr;

  /// Model backing a learned policy; nullptr for safe_mode. Throws
  /// ConfigError when the needed model is missing.
  const Model* for_policy(PolicyKind kind) const;
};

/// Simulates one episode at 10 Hz from the scene in `cfg` with traffic seed
/// `scene_seed`. Ends on goal, collision or timeout.
EpisodeResult run_episode(PolicyKind kind, std::uint64_t scene_seed, const PolicyModels& models,
                          const EpisodeConfig& cfg, const SwitchConfig& switching = {});

/// The expert driving one evaluation scene (traffic seed `scene_seed`),
/// falling back to the safe controller when d^F_C < switch_distance.
EpisodeResult run_expert_episode(std::uint64_t scene_seed, const EpisodeConfig& cfg,
                                 const ExpertParams& params = {}, double switch_distance = 2.5);

void write_replay_csv(std::ostream& out, const std::vector<ReplayRecord>& log);

struct PolicyAggregate {
  PolicyKind policy = PolicyKind::kSafeMode;
  double density = 1.0;
  std::size_t episodes = 0;
  double collision_ratio_pct = 0.0;
  double min_dist_m = 0.0;
  double lane_dev_mm = 0.0;
  double lane_dev_deg = 0.0;
  double elapsed_s = 0.0;
  double lane_changes = 0.0;
  double switch_count = 0.0;
  double safe_tick_fraction = 0.0;  // pooled over all ticks of all episodes
};

struct EpisodeRow {
  PolicyKind policy;
  double density;
  std::uint64_t seed;
  EpisodeMetrics metrics;
};

struct SuiteResult {
  std::vector<PolicyAggregate> table;  // density-major, then policy order as requested
  std::vector<EpisodeRow> episodes;
};

PolicyAggregate aggregate(PolicyKind kind, double density, const std::vector<EpisodeMetrics>& runs);

/// Runs seeds first_seed .. first_seed + num_seeds - 1 for every policy and
/// density. Results do not depend on `jobs`.
SuiteResult evaluate_suite(const std::vector<PolicyKind>& policies, std::size_t num_seeds,
                           const std::vector<double>& density_levels, const PolicyModels& models,
                           const EpisodeConfig& cfg, const SwitchConfig& switching = {},
                           std::uint64_t first_seed = 0, std::size_t jobs = 1);

/// Columns: policy,density,collision_ratio_pct,min_dist_m,lane_dev_mm,lane_dev_deg,elapsed_s,lane_changes,switch_count
void write_metrics_csv(std::ostream& out, const std::vector<PolicyAggregate>& table);
void write_metrics_table(std::ostream& out, const std::vector<PolicyAggregate>& table);
void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRow>& rows);

struct DrivingTrainConfig {
  std::vector<std::size_t> hidden_dims{256, 256};
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;  // the three networks train independently
};

struct DrivingModels {
  Model mdn_k10;
  Model mdn_k1;
  Model regnet;
  std::vector<TrainResult> training;  // same order as the models above

  PolicyModels view() const { return {&mdn_k10, &mdn_k1, &regnet}; }
};

/// Trains the K=10 MDN, the K=1 MDN and the squared-loss regressor on the
/// same demonstrations with identical topology.
DrivingModels train_driving_models(const TrainingSet& demos, const DrivingTrainConfig& cfg);

}  // namespace mdnu::lfd
