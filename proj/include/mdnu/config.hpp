#pragma once

// Flat key-value experiment configuration.
//
// File format: one `key = value` per line, `#` starts a comment, keys carry a
// section prefix (`train.epochs`). Every key has a documented default and a
// type; unknown keys and malformed values raise ConfigError naming the key.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mdnu/mdn.hpp"
#include "mdnu/synthetic.hpp"
#include "mdnu/ualfd.hpp"

namespace mdnu {

enum class ValueType { kReal, kCount, kSeed, kBool, kText, kRealList, kCountList, kChoice };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices = {};  // allowed values, kChoice only
};

class ExperimentConfig {
 public:
  ExperimentConfig();

  static const std::vector<ConfigKey>& keys();
  static const ConfigKey* find_key(std::string_view name);

  void load_file(const std::string& path);
  void parse(std::string_view text, const std::string& source = "<text>");
  void set(const std::string& key, const std::string& value);
  /// "key=value" as given to --set.
  void apply_assignment(const std::string& assignment);

  std::string text(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  /// Comma-separated words (used for policy lists).
  std::vector<std::string> words(const std::string& key) const;

  /// Resolved configuration in file format, keys sorted.
  std::string dump() const;
  /// 16 hex digits identifying dump().
  std::string fingerprint() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Formatted key table for --help.
std::string describe_keys();

// Builders from a resolved configuration. Sub-seeds are derived from `seed`.
MlpConfig mlp_config(const ExperimentConfig& cfg, std::size_t input_dim);
MdnConfig mdn_config(const ExperimentConfig& cfg, std::size_t output_dim);
TrainSchedule train_schedule(const ExperimentConfig& cfg);
ScenarioSpec scenario_spec(const ExperimentConfig& cfg);
lfd::EpisodeConfig episode_config(const ExperimentConfig& cfg);
lfd::DemoConfig demo_config(const ExperimentConfig& cfg);
lfd::SwitchConfig switch_config(const ExperimentConfig& cfg);
lfd::DrivingTrainConfig driving_train_config(const ExperimentConfig& cfg);

}  // namespace mdnu
