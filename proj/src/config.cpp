#include "mdnu/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdnu/errors.hpp"

namespace mdnu {
namespace {

using VT = ValueType;

std::vector<ConfigKey> build_keys() {
  return {
      {"seed", VT::kSeed, "0", "global seed; model init, shuffling, data and demos derive from it"},
      {"out_dir", VT::kText, "runs", "parent of the run-stamped output directory (env MDNU_OUT_DIR)"},
      {"jobs", VT::kCount, "1", "worker threads for grids, episodes and training (env MDNU_JOBS)"},

      {"scenario.kind", VT::kChoice, "heavy_noise", "synthetic scenario",
       {"absence_of_data", "heavy_noise", "composition"}},
      {"scenario.points", VT::kCount, "4000", "training samples drawn from the scenario"},
      {"scenario.noise_low", VT::kReal, "-2", "lower bound of the heavy-noise perturbation"},
      {"scenario.noise_high", VT::kReal, "2", "upper bound of the heavy-noise perturbation"},
      {"scenario.half_width", VT::kReal, "6", "inputs cover [-half_width, half_width]^2"},

      {"model.head", VT::kChoice, "mdn", "output head", {"mdn", "regression"}},
      {"model.hidden", VT::kCountList, "256,256", "hidden layer widths"},
      {"model.mixtures", VT::kCount, "10", "mixture components (1 gives a density network)"},
      {"model.sigma_max", VT::kReal, "5", "upper bound of each mixture variance"},
      {"model.keep_prob", VT::kReal, "0.8", "dropout keep probability during training (1 disables dropout)"},
      {"model.weight_decay", VT::kReal, "0", "L2 penalty added to weight gradients"},

      {"train.source", VT::kChoice, "scenario", "train on a synthetic scenario or on driving demonstrations",
       {"scenario", "demos"}},
      {"train.epochs", VT::kCount, "2000", "passes over the synthetic training set"},
      {"train.batch_size", VT::kCount, "64", "minibatch size"},
      {"train.learning_rate", VT::kReal, "0.001", "optimizer step size"},
      {"train.optimizer", VT::kChoice, "adam", "optimizer", {"adam", "sgd"}},

      {"grid.resolution", VT::kCount, "40", "grid cells per axis"},

      {"bench.samples", VT::kCount, "50", "stochastic passes per MC-dropout estimate (at least 2)"},
      {"bench.repetitions", VT::kCount, "1000", "timed calls per method"},
      {"bench.keep_prob", VT::kReal, "0.8", "dropout keep probability of the network built when no model is given"},

      {"track.lanes", VT::kCount, "6", "number of lanes"},
      {"track.lane_width", VT::kReal, "3.7", "lane width in metres"},
      {"track.length", VT::kReal, "400", "distance from start to goal in metres"},
      {"traffic.speed_min", VT::kReal, "50", "slowest desired traffic speed, km/h"},
      {"traffic.speed_max", VT::kReal, "75", "fastest desired traffic speed, km/h"},
      {"traffic.cars_per_100m", VT::kReal, "2", "cars per lane per 100 m at density 1"},
      {"episode.timeout", VT::kReal, "60", "episode time limit in seconds"},
      {"episode.ego_lane", VT::kCount, "2", "starting lane of the ego car (0 is leftmost)"},
      {"episode.cruise_speed", VT::kReal, "90", "ego speed under the learned policy, km/h"},

      {"demo.episodes", VT::kCount, "200", "demonstration episodes before collision filtering"},
      {"demo.density_min", VT::kReal, "0.6", "lowest traffic density in demonstrations"},
      {"demo.density_max", VT::kReal, "1.2", "highest traffic density in demonstrations"},
      {"demo.label_noise", VT::kReal, "0.02", "base sd of the recorded heading components"},
      {"demo.label_noise_near", VT::kReal, "0.4", "extra sd as the car ahead gets close"},
      {"demo.execution_noise_deg", VT::kReal, "8", "sd of the heading perturbation while demonstrating"},
      {"demo.execution_noise_tau", VT::kReal, "1", "correlation time of that perturbation, seconds"},

      {"driving.hidden", VT::kCountList, "256,256", "hidden widths of the driving networks"},
      {"driving.epochs", VT::kCount, "40", "passes over the demonstrations"},
      {"driving.batch_size", VT::kCount, "64", "minibatch size for the driving networks"},
      {"driving.learning_rate", VT::kReal, "0.001", "Adam step size for the driving networks"},

      {"switch.log_threshold", VT::kReal, "-2", "fixed log-variance threshold (used when threshold_percentile = 0)"},
      {"switch.threshold_percentile", VT::kReal, "95",
       "calibrate the threshold at this percentile of the demonstrations' explained variance; 0 keeps the fixed one"},
      {"switch.distance_ualfd", VT::kReal, "1.5", "d^F_C below which ualfd switches to the safe controller"},
      {"switch.distance_others", VT::kReal, "2.5", "the same gate for the other learned policies"},
      {"switch.exit_hold_ticks", VT::kCount, "0", "ticks to stay in safe mode after the trigger clears"},

      {"drive.policies", VT::kText, "ualfd", "comma-separated: ualfd, ualfd2, mdn_k10, mdn_k1, regnet, safe_mode"},
      {"drive.seeds", VT::kCount, "50", "episodes per policy and density"},
      {"drive.first_seed", VT::kSeed, "0", "scene seed of the first episode"},
      {"drive.densities", VT::kRealList, "1", "comma-separated traffic densities"},
      {"drive.replays", VT::kBool, "true", "write a per-tick replay CSV for every episode"},
  };
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

bool parse_real(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_unsigned(const std::string& s, std::uint64_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return !s.empty() && ec == std::errc() && ptr == end;
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': cannot read '" + value + "' as " + expected);
}

void check_value(const ConfigKey& k, const std::string& v) {
  double d;
  std::uint64_t u;
  bool b;
  switch (k.type) {
    case VT::kReal:
      if (!parse_real(v, d)) bad_value(k.name, v, "a number");
      break;
    case VT::kCount:
    case VT::kSeed:
      if (!parse_unsigned(v, u)) bad_value(k.name, v, "a non-negative integer");
      break;
    case VT::kBool:
      if (!parse_bool(v, b)) bad_value(k.name, v, "true or false");
      break;
    case VT::kText:
      if (v.empty()) bad_value(k.name, v, "a non-empty value");
      break;
    case VT::kRealList:
      for (const auto& item : split_commas(v)) {
        if (!parse_real(item, d)) bad_value(k.name, v, "a comma-separated list of numbers");
      }
      break;
    case VT::kCountList:
      for (const auto& item : split_commas(v)) {
        if (!parse_unsigned(item, u)) bad_value(k.name, v, "a comma-separated list of integers");
      }
      break;
    case VT::kChoice:
      if (std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string allowed;
        for (const auto& c : k.choices) allowed += (allowed.empty() ? "" : ", ") + c;
        throw ConfigError("config key '" + k.name + "': '" + v + "' is not one of " + allowed);
      }
      break;
  }
}

const ConfigKey& require_key(std::string_view name) {
  const ConfigKey* k = ExperimentConfig::find_key(name);
  if (!k) throw ConfigError("unknown config key '" + std::string(name) + "'");
  return *k;
}

}  // namespace

const std::vector<ConfigKey>& ExperimentConfig::keys() {
  static const std::vector<ConfigKey> table = build_keys();
  return table;
}

const ConfigKey* ExperimentConfig::find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  parse(ss.str(), path);
}

void ExperimentConfig::parse(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey& k = require_key(key);
  check_value(k, value);
  values_[key] = value;
}

void ExperimentConfig::apply_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

std::string ExperimentConfig::text(const std::string& key) const {
  require_key(key);
  return values_.at(key);
}

double ExperimentConfig::real(const std::string& key) const {
  double d = 0.0;
  const std::string v = text(key);
  if (!parse_real(v, d)) bad_value(key, v, "a number");
  return d;
}

std::size_t ExperimentConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(seed(key));
}

std::uint64_t ExperimentConfig::seed(const std::string& key) const {
  std::uint64_t u = 0;
  const std::string v = text(key);
  if (!parse_unsigned(v, u)) bad_value(key, v, "a non-negative integer");
  return u;
}

bool ExperimentConfig::flag(const std::string& key) const {
  bool b = false;
  const std::string v = text(key);
  if (!parse_bool(v, b)) bad_value(key, v, "true or false");
  return b;
}

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
  std::vector<double> out;
  const std::string v = text(key);
  for (const auto& item : split_commas(v)) {
    double d = 0.0;
    if (!parse_real(item, d)) bad_value(key, v, "a comma-separated list of numbers");
    out.push_back(d);
  }
  return out;
}

std::vector<std::size_t> ExperimentConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  const std::string v = text(key);
  for (const auto& item : split_commas(v)) {
    std::uint64_t u = 0;
    if (!parse_unsigned(item, u)) bad_value(key, v, "a comma-separated list of integers");
    out.push_back(static_cast<std::size_t>(u));
  }
  return out;
}

std::vector<std::string> ExperimentConfig::words(const std::string& key) const {
  std::vector<std::string> out;
  for (auto& w : split_commas(text(key))) {
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::fingerprint() const {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string describe_keys() {
  std::size_t width = 0;
  for (const auto& k : ExperimentConfig::keys()) width = std::max(width, k.name.size() + k.default_value.size() + 3);
  std::string out;
  for (const auto& k : ExperimentConfig::keys()) {
    std::string head = k.name + " = " + k.default_value;
    head.resize(width + 2, ' ');
    out += "  " + head + k.help + "\n";
  }
  return out;
}

MlpConfig mlp_config(const ExperimentConfig& cfg, std::size_t input_dim) {
  MlpConfig m;
  m.input_dim = input_dim;
  m.hidden_dims = cfg.counts("model.hidden");
  m.output_dim = 1;
  m.dropout_keep_prob = cfg.real("model.keep_prob");
  m.weight_decay = cfg.real("model.weight_decay");
  m.seed = cfg.seed("seed");
  m.validate();
  return m;
}

MdnConfig mdn_config(const ExperimentConfig& cfg, std::size_t output_dim) {
  MdnConfig m;
  m.num_mixtures = cfg.count("model.mixtures");
  m.output_dim = output_dim;
  m.sigma_max = cfg.real("model.sigma_max");
  m.validate();
  return m;
}

TrainSchedule train_schedule(const ExperimentConfig& cfg) {
  TrainSchedule s;
  s.epochs = cfg.count("train.epochs");
  s.batch_size = cfg.count("train.batch_size");
  s.learning_rate = cfg.real("train.learning_rate");
  s.optimizer = cfg.text("train.optimizer") == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  s.seed = cfg.seed("seed") + 1;
  if (s.batch_size == 0) throw ConfigError("config key 'train.batch_size' must be positive");
  if (!(s.learning_rate > 0.0)) throw ConfigError("config key 'train.learning_rate' must be positive");
  return s;
}

ScenarioSpec scenario_spec(const ExperimentConfig& cfg) {
  ScenarioSpec s;
  s.kind = scenario_from_string(cfg.text("scenario.kind"));
  s.num_points = cfg.count("scenario.points");
  s.noise_low = cfg.real("scenario.noise_low");
  s.noise_high = cfg.real("scenario.noise_high");
  s.half_width = cfg.real("scenario.half_width");
  s.seed = cfg.seed("seed") + 2;
  s.validate();
  return s;
}

lfd::EpisodeConfig episode_config(const ExperimentConfig& cfg) {
  lfd::EpisodeConfig e;
  auto& track = e.scene.track;
  track.num_lanes = static_cast<int>(cfg.count("track.lanes"));
  track.lane_width = cfg.real("track.lane_width");
  track.goal_x = track.start_x + cfg.real("track.length");
  track.validate();
  e.scene.traffic.speed_min_kmh = cfg.real("traffic.speed_min");
  e.scene.traffic.speed_max_kmh = cfg.real("traffic.speed_max");
  e.scene.traffic.cars_per_lane_per_100m = cfg.real("traffic.cars_per_100m");
  e.scene.ego_lane = static_cast<int>(cfg.count("episode.ego_lane"));
  if (!track.has_lane(e.scene.ego_lane)) throw ConfigError("config key 'episode.ego_lane' is outside the track");
  e.cruise_speed_kmh = cfg.real("episode.cruise_speed");
  e.scene.ego_speed_kmh = e.cruise_speed_kmh;
  e.timeout_s = cfg.real("episode.timeout");
  if (!(e.timeout_s > 0.0)) throw ConfigError("config key 'episode.timeout' must be positive");
  e.scaling.lane_width = track.lane_width;
  return e;
}

lfd::DemoConfig demo_config(const ExperimentConfig& cfg) {
  lfd::DemoConfig d;
  d.episode = episode_config(cfg);
  d.num_episodes = cfg.count("demo.episodes");
  d.seed = cfg.seed("seed") + 3;
  d.density_min = cfg.real("demo.density_min");
  d.density_max = cfg.real("demo.density_max");
  d.label_noise = cfg.real("demo.label_noise");
  d.label_noise_near = cfg.real("demo.label_noise_near");
  d.execution_noise_deg = cfg.real("demo.execution_noise_deg");
  d.execution_noise_tau_s = cfg.real("demo.execution_noise_tau");
  d.expert.lane_width = d.episode.scene.track.lane_width;
  d.immediate_switch_distance = cfg.real("switch.distance_others");
  return d;
}

lfd::SwitchConfig switch_config(const ExperimentConfig& cfg) {
  lfd::SwitchConfig s;
  s.log_explained_threshold = cfg.real("switch.log_threshold");
  s.immediate_switch_distance_ualfd = cfg.real("switch.distance_ualfd");
  s.immediate_switch_distance_others = cfg.real("switch.distance_others");
  s.exit_hold_ticks = cfg.count("switch.exit_hold_ticks");
  const double p = cfg.real("switch.threshold_percentile");
  if (p < 0.0 || p > 100.0) throw ConfigError("config key 'switch.threshold_percentile' must lie in [0, 100]");
  s.validate();
  return s;
}

lfd::DrivingTrainConfig driving_train_config(const ExperimentConfig& cfg) {
  lfd::DrivingTrainConfig t;
  t.hidden_dims = cfg.counts("driving.hidden");
  t.epochs = cfg.count("driving.epochs");
  t.batch_size = cfg.count("driving.batch_size");
  t.learning_rate = cfg.real("driving.learning_rate");
  t.weight_decay = cfg.real("model.weight_decay");
  t.seed = cfg.seed("seed");
  t.jobs = std::max<std::size_t>(1, cfg.count("jobs"));
  if (t.batch_size == 0) throw ConfigError("config key 'driving.batch_size' must be positive");
  return t;
}

}  // namespace mdnu
