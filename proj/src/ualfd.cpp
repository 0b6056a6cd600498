#include "mdnu/ualfd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <tuple>

#include "mdnu/errors.hpp"
#include "mdnu/parallel.hpp"
#include "mdnu/uncertainty.hpp"
#include "mdnu/text_format.hpp"

namespace mdnu::lfd {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct PolicyName {
  PolicyKind kind;
  const char* name;
};

constexpr PolicyName kPolicyNames[] = {
    {PolicyKind::kUalfd, "ualfd"},   {PolicyKind::kUalfd2, "ualfd2"},
    {PolicyKind::kMdnK10, "mdn_k10"}, {PolicyKind::kMdnK1, "mdn_k1"},
    {PolicyKind::kRegNet, "regnet"}, {PolicyKind::kSafeMode, "safe_mode"},
};

HeadingTarget decode_output(const Eigen::VectorXd& out) {
  return HeadingTarget{out(0), out(1)};
}

// Evaluates the network once and returns the heading plus the requested
// uncertainty channel (summed over outputs).
std::pair<HeadingTarget, double> infer(const Model& model, const sim::FeatureVector& f,
                                       UncertaintyChannel channel, const FeatureScaling& scaling) {
  const Eigen::VectorXd raw = model.network.forward(scaling.encode(f));
  if (!model.is_mdn()) {
    if (channel != UncertaintyChannel::kNone) {
      throw ArgumentError("uncertainty switching needs a mixture density head");
    }
    return {decode_output(raw), 0.0};
  }
  const GmmParams g = head_transform(raw, model.mdn);
  const HeadingTarget target = decode_output(map_of(g).mean);
  if (channel == UncertaintyChannel::kNone) return {target, 0.0};
  const UncertaintyReport r = make_report(g);
  return {target, channel == UncertaintyChannel::kExplained ? r.explained_sum() : r.unexplained_sum()};
}

// Tick-level command shared by policy episodes and expert demonstrations.
struct Command {
  DriveMode mode = DriveMode::kLearned;
  HeadingTarget target;
  double uncertainty = 0.0;
};

template <typename Decide, typename Observe>
EpisodeResult simulate(sim::SimState state, const EpisodeConfig& cfg, Decide&& decide,
                       Observe&& observe) {
  const sim::Track& track = cfg.scene.track;
  EpisodeResult result;
  EpisodeMetrics& m = result.metrics;
  m.min_dist_to_cars = sim::min_gap_to_traffic(state, cfg.scaling.d_max);

  int committed_lane = track.lane_of(state.ego.y);
  int pending_lane = committed_lane;
  std::size_t pending_ticks = 0;
  DriveMode previous_mode = DriveMode::kLearned;
  double dev_mm_sum = 0.0, dev_deg_sum = 0.0;

  const auto max_ticks = static_cast<std::size_t>(std::ceil(cfg.timeout_s / state.dt - 1e-9));
  while (m.total_ticks < max_ticks) {
    const sim::Perception p = sim::perceive(state, track, cfg.scaling.d_max,
                                            cfg.cruise_speed_kmh / sim::kKmhPerMps);
    const double heading_dev = sim::wrap_degrees(state.ego.heading_deg);
    const Command cmd = decide(p);
    observe(p, cmd);

    double speed_kmh = cfg.cruise_speed_kmh;
    double yaw_rate = 0.0;
    if (cmd.mode == DriveMode::kSafe) {
      const sim::SafeCommand safe = sim::safe_controller(p.features, p.center, heading_dev,
                                                         p.features.lane_deviation(), cfg.safe_gains);
      speed_kmh = safe.speed_mps * sim::kKmhPerMps;
      yaw_rate = safe.yaw_rate_degps;
      ++m.safe_ticks;
      if (previous_mode == DriveMode::kLearned && m.total_ticks > 0) ++m.mode_switch_count;
    } else {
      yaw_rate = sim::feedback_heading_controller(state.ego.heading_deg, cmd.target.angle_deg(),
                                                  cfg.safe_gains.w_max);
    }
    previous_mode = cmd.mode;

    if (cfg.record_log) {
      result.log.push_back(ReplayRecord{state.time, state.ego.x, state.ego.y, state.ego.heading_deg,
                                        state.ego.speed_kmh, cmd.mode, cmd.uncertainty, p.features});
    }
    dev_mm_sum += std::abs(p.features.lane_deviation()) * 1000.0;
    dev_deg_sum += std::abs(heading_dev);
    ++m.total_ticks;

    sim::step_world(state, track, speed_kmh, yaw_rate, cfg.traffic_params);
    m.min_dist_to_cars = std::min(m.min_dist_to_cars, sim::min_gap_to_traffic(state, cfg.scaling.d_max));

    if (sim::detect_collision(state, track)) {
      m.collision = true;
      break;
    }
    const int lane = track.lane_of(state.ego.y);
    if (lane == committed_lane) {
      pending_ticks = 0;
    } else {
      if (lane != pending_lane) {
        pending_lane = lane;
        pending_ticks = 0;
      }
      if (++pending_ticks >= cfg.lane_change_persist_ticks) {
        ++m.num_lane_changes;
        committed_lane = lane;
        pending_ticks = 0;
      }
    }
    if (state.ego.x >= track.goal_x) {
      m.reached_goal = true;
      break;
    }
  }
  m.elapsed_time = state.time;
  if (m.total_ticks > 0) {
    m.lane_dev_dist_mean = dev_mm_sum / static_cast<double>(m.total_ticks);
    m.lane_dev_deg_mean = dev_deg_sum / static_cast<double>(m.total_ticks);
  }
  return result;
}

double mean_of(const std::vector<EpisodeMetrics>& runs, double (*get)(const EpisodeMetrics&)) {
  double s = 0.0;
  for (const auto& r : runs) s += get(r);
  return s / static_cast<double>(runs.size());
}

}  // namespace

std::string to_string(PolicyKind kind) {
  for (const auto& p : kPolicyNames) {
    if (p.kind == kind) return p.name;
  }
  throw ArgumentError("unknown policy kind");
}

PolicyKind policy_from_string(const std::string& name) {
  for (const auto& p : kPolicyNames) {
    if (name == p.name) return p.kind;
  }
  throw ConfigError("unknown policy '" + name +
                    "' (expected ualfd, ualfd2, mdn_k10, mdn_k1, regnet or safe_mode)");
}

const std::vector<PolicyKind>& all_policies() {
  static const std::vector<PolicyKind> kinds = [] {
    std::vector<PolicyKind> out;
    for (const auto& p : kPolicyNames) out.push_back(p.kind);
    return out;
  }();
  return kinds;
}

double HeadingTarget::angle_deg() const { return std::atan2(sin_component, cos_component) * kRadToDeg; }

HeadingTarget HeadingTarget::from_degrees(double deg) {
  const double rad = deg / kRadToDeg;
  return HeadingTarget{std::cos(rad), std::sin(rad)};
}

Eigen::VectorXd FeatureScaling::encode(const sim::FeatureVector& f) const {
  Eigen::VectorXd x(sim::kNumFeatures);
  for (std::size_t i = 0; i < sim::kLaneDeviation; ++i) x(static_cast<Eigen::Index>(i)) = f[i] / d_max;
  x(sim::kLaneDeviation) = f.lane_deviation() / (0.5 * lane_width);
  return x;
}

HeadingTarget expert_policy(const sim::FeatureVector& f, const ExpertParams& params) {
  using namespace sim;
  int target = 0;
  if (f.front_center() < params.keep_clearance) {
    auto usable = [&](std::size_t front, std::size_t back) {
      return f[front] >= params.min_front && f[back] >= params.min_rear &&
             f[front] >= f.front_center() + params.gain_margin;
    };
    const bool left = usable(kFrontLeft, kBackLeft);
    const bool right = usable(kFrontRight, kBackRight);
    if (left && right) {
      if (f[kFrontLeft] > f[kFrontRight]) {
        target = -1;
      } else if (f[kFrontRight] > f[kFrontLeft]) {
        target = 1;
      } else {
        target = params.prefer_left ? -1 : 1;
      }
    } else if (left) {
      target = -1;
    } else if (right) {
      target = 1;
    }
  }
  const double dy = f.lane_deviation() + target * params.lane_width;
  const double deg = std::clamp(std::atan2(dy, params.lookahead) * kRadToDeg,
                                -params.max_heading_deg, params.max_heading_deg);
  return HeadingTarget::from_degrees(deg);
}

EpisodeResult run_expert_episode(std::uint64_t scene_seed, const EpisodeConfig& cfg,
                                 const ExpertParams& params, double switch_distance) {
  sim::SceneConfig scene = cfg.scene;
  scene.traffic.seed = scene_seed;
  auto decide = [&](const sim::Perception& p) {
    Command c;
    c.target = expert_policy(p.features, params);
    c.mode = p.features.front_center() < switch_distance ? DriveMode::kSafe : DriveMode::kLearned;
    return c;
  };
  return simulate(sim::make_scene(scene), cfg, decide, [](const sim::Perception&, const Command&) {});
}

TrainingSet collect_demonstrations(const DemoConfig& cfg, DemoStats* stats) {
  if (!(cfg.density_min >= 0.0 && cfg.density_min <= cfg.density_max)) {
    throw ConfigError("demo density range is invalid");
  }
  if (!(cfg.lookahead_min > 0.0 && cfg.lookahead_min <= cfg.lookahead_max)) {
    throw ConfigError("demo lookahead range is invalid");
  }
  if (!(cfg.label_noise >= 0.0 && cfg.label_noise_near >= 0.0)) {
    throw ConfigError("label noise must be nonnegative");
  }
  if (!(cfg.execution_noise_deg >= 0.0) || !(cfg.execution_noise_tau_s > 0.0)) {
    throw ConfigError("execution noise must be nonnegative with a positive correlation time");
  }

  RandomState rng(cfg.seed);
  std::vector<sim::FeatureVector> features;
  std::vector<HeadingTarget> labels;
  DemoStats st;
  const sim::Track& track = cfg.episode.scene.track;

  for (std::size_t e = 0; e < cfg.num_episodes; ++e) {
    sim::SceneConfig scene = cfg.episode.scene;
    scene.ego_lane = std::min(static_cast<int>(uniform01(rng) * track.num_lanes), track.num_lanes - 1);
    scene.ego_x = cfg.episode.scene.ego_x + uniform01(rng) * cfg.max_start_offset;
    scene.ego_lateral_offset = (2.0 * uniform01(rng) - 1.0) * cfg.max_lateral_offset;
    scene.traffic.density = cfg.density_min + uniform01(rng) * (cfg.density_max - cfg.density_min);
    scene.traffic.seed = rng();
    ExpertParams expert = cfg.expert;
    expert.lane_width = track.lane_width;
    expert.lookahead = cfg.lookahead_min + uniform01(rng) * (cfg.lookahead_max - cfg.lookahead_min);
    if (cfg.randomize_preference) expert.prefer_left = uniform01(rng) < 0.5;
    RandomState noise_rng(rng());
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<sim::FeatureVector> ep_features;
    std::vector<HeadingTarget> ep_labels;
    const double dt = scene.dt;
    const double decay = std::exp(-dt / cfg.execution_noise_tau_s);
    const double kick = cfg.execution_noise_deg * std::sqrt(1.0 - decay * decay);
    double drift = cfg.execution_noise_deg * noise(noise_rng);
    HeadingTarget clean;
    auto decide = [&](const sim::Perception& p) {
      Command c;
      clean = expert_policy(p.features, expert);
      c.target = clean;
      if (cfg.execution_noise_deg > 0.0) {
        c.target = HeadingTarget::from_degrees(clean.angle_deg() + drift);
        drift = decay * drift + kick * noise(noise_rng);
      }
      c.mode = p.features.front_center() < cfg.immediate_switch_distance ? DriveMode::kSafe
                                                                          : DriveMode::kLearned;
      return c;
    };
    auto observe = [&](const sim::Perception& p, const Command&) {
      ep_features.push_back(p.features);
      HeadingTarget label = clean;
      const double closeness = 1.0 - std::min(p.features.front_center(), cfg.episode.scaling.d_max) /
                                         cfg.episode.scaling.d_max;
      const double sd = cfg.label_noise + cfg.label_noise_near * closeness;
      if (sd > 0.0) {
        label.cos_component += sd * noise(noise_rng);
        label.sin_component += sd * noise(noise_rng);
      }
      ep_labels.push_back(label);
    };
    const EpisodeResult r = simulate(sim::make_scene(scene), cfg.episode, decide, observe);
    if (r.metrics.collision) {
      ++st.episodes_discarded;
      continue;
    }
    ++st.episodes_kept;
    features.insert(features.end(), ep_features.begin(), ep_features.end());
    labels.insert(labels.end(), ep_labels.begin(), ep_labels.end());
  }
  st.samples = features.size();
  if (stats) *stats = st;
  if (st.episodes_kept == 0) {
    throw ConfigError("no collision-free demonstration episode out of " +
                      std::to_string(cfg.num_episodes));
  }
  TrainingSet data;
  data.inputs.resize(sim::kNumFeatures, static_cast<Eigen::Index>(features.size()));
  data.targets.resize(2, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    data.inputs.col(col) = cfg.episode.scaling.encode(features[i]);
    data.targets(0, col) = labels[i].cos_component;
    data.targets(1, col) = labels[i].sin_component;
  }
  return data;
}

HeadingTarget learned_policy(const Model& model, const sim::FeatureVector& features,
                             const FeatureScaling& scaling) {
  return infer(model, features, UncertaintyChannel::kNone, scaling).first;
}

void SwitchConfig::validate() const {
  if (!(immediate_switch_distance_ualfd > 0.0) || !(immediate_switch_distance_others > 0.0)) {
    throw ConfigError("switch distances must be positive");
  }
  if (std::isnan(log_explained_threshold)) throw ConfigError("log threshold must be a number");
}

UncertaintyChannel channel_for(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kUalfd: return UncertaintyChannel::kExplained;
    case PolicyKind::kUalfd2: return UncertaintyChannel::kUnexplained;
    default: return UncertaintyChannel::kNone;
  }
}

double immediate_switch_distance(const SwitchConfig& cfg, PolicyKind kind) {
  return kind == PolicyKind::kUalfd ? cfg.immediate_switch_distance_ualfd
                                    : cfg.immediate_switch_distance_others;
}

double calibrate_log_threshold(const Model& model, const Eigen::MatrixXd& inputs, double percentile,
                               UncertaintyChannel channel) {
  if (!model.is_mdn()) throw ArgumentError("threshold calibration needs a mixture density head");
  if (channel == UncertaintyChannel::kNone) throw ArgumentError("calibration needs an uncertainty channel");
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  if (inputs.cols() == 0) throw ArgumentError("calibration needs at least one input");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(inputs.cols()));
  for (const GmmParams& g : predict_gmm(model, inputs)) {
    const UncertaintyReport r = make_report(g);
    values.push_back(channel == UncertaintyChannel::kExplained ? r.explained_sum() : r.unexplained_sum());
  }
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(percentile / 100.0 * n))) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank), values.end());
  return std::log(values[rank]);
}

SwitchDecision switching_policy(const Model& model, const sim::FeatureVector& features,
                                const SwitchConfig& cfg, double switch_distance,
                                const FeatureScaling& scaling) {
  SwitchDecision d;
  std::tie(d.target, d.uncertainty) = infer(model, features, cfg.uncertainty_channel, scaling);
  d.uncertainty_trigger = cfg.uncertainty_channel != UncertaintyChannel::kNone &&
                          std::log(d.uncertainty) > cfg.log_explained_threshold;
  d.distance_trigger = features.front_center() < switch_distance;
  d.mode = d.uncertainty_trigger || d.distance_trigger ? DriveMode::kSafe : DriveMode::kLearned;
  return d;
}

const Model* PolicyModels::for_policy(PolicyKind kind) const {
  const Model* m = nullptr;
  switch (kind) {
    case PolicyKind::kSafeMode: return nullptr;
    case PolicyKind::kUalfd:
    case PolicyKind::kUalfd2:
    case PolicyKind::kMdnK10: m = mdn_k10; break;
    case PolicyKind::kMdnK1: m = mdn_k1; break;
    case PolicyKind::kRegNet: m = regnet; break;
  }
  if (!m) throw ConfigError("policy " + to_string(kind) + " needs a trained model that was not provided");
  return m;
}

EpisodeResult run_episode(PolicyKind kind, std::uint64_t scene_seed, const PolicyModels& models,
                          const EpisodeConfig& cfg, const SwitchConfig& switching) {
  switching.validate();
  const Model* model = models.for_policy(kind);
  SwitchConfig sc = switching;
  sc.uncertainty_channel = channel_for(kind);
  const double distance = immediate_switch_distance(switching, kind);

  sim::SceneConfig scene = cfg.scene;
  scene.traffic.seed = scene_seed;
  std::size_t hold = 0;
  auto decide = [&](const sim::Perception& p) {
    Command c;
    if (!model) {
      c.mode = DriveMode::kSafe;
      return c;
    }
    const SwitchDecision d = switching_policy(*model, p.features, sc, distance, cfg.scaling);
    c.target = d.target;
    c.uncertainty = d.uncertainty;
    c.mode = d.mode;
    if (c.mode == DriveMode::kSafe) {
      hold = sc.exit_hold_ticks;
    } else if (hold > 0) {
      --hold;
      c.mode = DriveMode::kSafe;
    }
    return c;
  };
  return simulate(sim::make_scene(scene), cfg, decide, [](const sim::Perception&, const Command&) {});
}

void write_replay_csv(std::ostream& out, const std::vector<ReplayRecord>& log) {
  out << "time,x,y,heading_deg,speed_kmh,mode,uncertainty,d_fl,d_fc,d_fr,d_bl,d_bc,d_br,d_dev\n";
  for (const auto& r : log) {
    out << fmt_real(r.time) << ',' << fmt_real(r.x) << ',' << fmt_real(r.y) << ','
        << fmt_real(r.heading_deg) << ',' << fmt_real(r.speed_kmh) << ','
        << (r.mode == DriveMode::kSafe ? "safe" : "learned") << ',' << fmt_real(r.uncertainty);
    for (double v : r.features.values) out << ',' << fmt_real(v);
    out << '\n';
  }
}

PolicyAggregate aggregate(PolicyKind kind, double density, const std::vector<EpisodeMetrics>& runs) {
  PolicyAggregate a;
  a.policy = kind;
  a.density = density;
  a.episodes = runs.size();
  if (runs.empty()) return a;
  a.collision_ratio_pct = 100.0 * mean_of(runs, [](const EpisodeMetrics& m) { return m.collision ? 1.0 : 0.0; });
  a.min_dist_m = mean_of(runs, [](const EpisodeMetrics& m) { return m.min_dist_to_cars; });
  a.lane_dev_mm = mean_of(runs, [](const EpisodeMetrics& m) { return m.lane_dev_dist_mean; });
  a.lane_dev_deg = mean_of(runs, [](const EpisodeMetrics& m) { return m.lane_dev_deg_mean; });
  a.elapsed_s = mean_of(runs, [](const EpisodeMetrics& m) { return m.elapsed_time; });
  a.lane_changes = mean_of(runs, [](const EpisodeMetrics& m) { return double(m.num_lane_changes); });
  a.switch_count = mean_of(runs, [](const EpisodeMetrics& m) { return double(m.mode_switch_count); });
  std::size_t safe = 0, total = 0;
  for (const auto& r : runs) {
    safe += r.safe_ticks;
    total += r.total_ticks;
  }
  a.safe_tick_fraction = total == 0 ? 0.0 : static_cast<double>(safe) / static_cast<double>(total);
  return a;
}

SuiteResult evaluate_suite(const std::vector<PolicyKind>& policies, std::size_t num_seeds,
                           const std::vector<double>& density_levels, const PolicyModels& models,
                           const EpisodeConfig& cfg, const SwitchConfig& switching,
                           std::uint64_t first_seed, std::size_t jobs) {
  if (num_seeds == 0) throw ConfigError("suite needs at least one seed");
  if (policies.empty() || density_levels.empty()) throw ConfigError("suite needs policies and densities");
  for (PolicyKind k : policies) models.for_policy(k);

  const std::size_t per_group = num_seeds;
  const std::size_t groups = density_levels.size() * policies.size();
  std::vector<EpisodeMetrics> metrics(groups * per_group);
  parallel_for(metrics.size(), jobs, [&](std::size_t i) {
    const std::size_t group = i / per_group;
    const double density = density_levels[group / policies.size()];
    const PolicyKind kind = policies[group % policies.size()];
    EpisodeConfig ec = cfg;
    ec.record_log = false;
    ec.scene.traffic.density = density;
    metrics[i] = run_episode(kind, first_seed + i % per_group, models, ec, switching).metrics;
  });

  SuiteResult out;
  for (std::size_t g = 0; g < groups; ++g) {
    const double density = density_levels[g / policies.size()];
    const PolicyKind kind = policies[g % policies.size()];
    std::vector<EpisodeMetrics> runs(metrics.begin() + static_cast<std::ptrdiff_t>(g * per_group),
                                     metrics.begin() + static_cast<std::ptrdiff_t>((g + 1) * per_group));
    out.table.push_back(aggregate(kind, density, runs));
    for (std::size_t s = 0; s < per_group; ++s) {
      out.episodes.push_back(EpisodeRow{kind, density, first_seed + s, runs[s]});
    }
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<PolicyAggregate>& table) {
  out << "policy,density,collision_ratio_pct,min_dist_m,lane_dev_mm,lane_dev_deg,elapsed_s,"
         "lane_changes,switch_count\n";
  for (const auto& a : table) {
    out << to_string(a.policy) << ',' << fmt_real(a.density) << ',' << fmt_real(a.collision_ratio_pct)
        << ',' << fmt_real(a.min_dist_m) << ',' << fmt_real(a.lane_dev_mm) << ','
        << fmt_real(a.lane_dev_deg) << ',' << fmt_real(a.elapsed_s) << ',' << fmt_real(a.lane_changes)
        << ',' << fmt_real(a.switch_count) << '\n';
  }
}

void write_metrics_table(std::ostream& out, const std::vector<PolicyAggregate>& table) {
  char line[256];
  double group = std::numeric_limits<double>::quiet_NaN();
  for (const auto& a : table) {
    if (a.density != group) {
      group = a.density;
      std::snprintf(line, sizeof line, "\ndensity %.2f (%zu episodes per policy)\n", a.density, a.episodes);
      out << line;
      std::snprintf(line, sizeof line, "%-10s %9s %9s %10s %9s %9s %9s %9s %6s\n", "policy", "coll[%]",
                    "min[m]", "dev[mm]", "dev[deg]", "time[s]", "lanechg", "switches", "safe");
      out << line;
    }
    std::snprintf(line, sizeof line, "%-10s %9.2f %9.2f %10.2f %9.2f %9.2f %9.2f %9.2f %6.3f\n",
                  to_string(a.policy).c_str(), a.collision_ratio_pct, a.min_dist_m, a.lane_dev_mm,
                  a.lane_dev_deg, a.elapsed_s, a.lane_changes, a.switch_count, a.safe_tick_fraction);
    out << line;
  }
}

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRow>& rows) {
  out << "policy,density,seed,collision,reached_goal,min_dist_m,lane_dev_mm,lane_dev_deg,elapsed_s,"
         "lane_changes,switch_count,safe_ticks,total_ticks\n";
  for (const auto& r : rows) {
    const EpisodeMetrics& m = r.metrics;
    out << to_string(r.policy) << ',' << fmt_real(r.density) << ',' << r.seed << ',' << int(m.collision)
        << ',' << int(m.reached_goal) << ',' << fmt_real(m.min_dist_to_cars) << ','
        << fmt_real(m.lane_dev_dist_mean) << ',' << fmt_real(m.lane_dev_deg_mean) << ','
        << fmt_real(m.elapsed_time) << ',' << m.num_lane_changes << ',' << m.mode_switch_count << ','
        << m.safe_ticks << ',' << m.total_ticks << '\n';
  }
}

DrivingModels train_driving_models(const TrainingSet& demos, const DrivingTrainConfig& cfg) {
  demos.validate();
  if (demos.targets.rows() != 2) throw ArgumentError("driving targets must be (cos, sin) pairs");
  MlpConfig base;
  base.input_dim = static_cast<std::size_t>(demos.inputs.rows());
  base.hidden_dims = cfg.hidden_dims;
  base.weight_decay = cfg.weight_decay;
  base.seed = cfg.seed;

  MdnConfig k10;
  k10.num_mixtures = 10;
  k10.output_dim = 2;
  MdnConfig k1 = k10;
  k1.num_mixtures = 1;
  MlpConfig reg = base;
  reg.output_dim = 2;

  DrivingModels out{make_mdn_model(base, k10), make_mdn_model(base, k1), make_regression_model(reg), {}};
  TrainSchedule schedule;
  schedule.batch_size = cfg.batch_size;
  schedule.epochs = cfg.epochs;
  schedule.learning_rate = cfg.learning_rate;
  schedule.seed = cfg.seed;
  Model* models[] = {&out.mdn_k10, &out.mdn_k1, &out.regnet};
  out.training.resize(3);
  parallel_for(3, cfg.jobs, [&](std::size_t i) { out.training[i] = train(*models[i], demos, schedule); });
  return out;
}

}  // namespace mdnu::lfd
