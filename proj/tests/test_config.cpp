#include <doctest.h>

#include <string>

#include "mdnu/config.hpp"
#include "mdnu/errors.hpp"

using namespace mdnu;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("every key has a default that parses") {
  const ExperimentConfig cfg;
  for (const ConfigKey& k : ExperimentConfig::keys()) {
    CHECK(ExperimentConfig::find_key(k.name) == &k);
    ExperimentConfig copy;
    CHECK_NOTHROW(copy.set(k.name, k.default_value));
    CHECK_FALSE(k.help.empty());
  }
  CHECK(cfg.count("train.epochs") == 2000);
  CHECK(cfg.count("train.batch_size") == 64);
  CHECK(cfg.count("model.mixtures") == 10);
  CHECK(cfg.real("switch.log_threshold") == -2.0);
  CHECK(cfg.counts("model.hidden") == std::vector<std::size_t>{256, 256});
}

TEST_CASE("file syntax with comments and blank lines") {
  ExperimentConfig cfg;
  cfg.parse(
      "# experiment\n"
      "\n"
      "train.epochs = 12   # short run\n"
      "  model.hidden=32,16\n"
      "scenario.kind = composition\n"
      "drive.replays = false\n");
  CHECK(cfg.count("train.epochs") == 12);
  CHECK(cfg.counts("model.hidden") == std::vector<std::size_t>{32, 16});
  CHECK(cfg.text("scenario.kind") == "composition");
  CHECK_FALSE(cfg.flag("drive.replays"));
}

TEST_CASE("unknown keys are named in the error") {
  ExperimentConfig cfg;
  CHECK(error_of([&] { cfg.set("train.epoch", "3"); }).find("'train.epoch'") != std::string::npos);
  const std::string where = error_of([&] { cfg.parse("seed = 1\nbogus.key = 2\n", "exp.cfg"); });
  CHECK(where.find("exp.cfg:2") != std::string::npos);
  CHECK(where.find("bogus.key") != std::string::npos);
}

TEST_CASE("malformed values are rejected with the key") {
  ExperimentConfig cfg;
  CHECK(error_of([&] { cfg.set("train.epochs", "ten"); }).find("train.epochs") != std::string::npos);
  CHECK(error_of([&] { cfg.set("train.epochs", "-3"); }).find("train.epochs") != std::string::npos);
  CHECK(error_of([&] { cfg.set("train.learning_rate", "1e-3x"); }).find("train.learning_rate") != std::string::npos);
  CHECK(error_of([&] { cfg.set("model.head", "svm"); }).find("model.head") != std::string::npos);
  CHECK(error_of([&] { cfg.set("drive.replays", "maybe"); }).find("drive.replays") != std::string::npos);
  CHECK(error_of([&] { cfg.set("model.hidden", "32,,16"); }).find("model.hidden") != std::string::npos);
  CHECK_THROWS_AS(cfg.parse("train.epochs 3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_assignment("train.epochs"), ConfigError);
}

TEST_CASE("later assignments win") {
  ExperimentConfig cfg;
  cfg.parse("train.epochs = 5\n");
  cfg.apply_assignment("train.epochs=7");
  CHECK(cfg.count("train.epochs") == 7);
}

TEST_CASE("dump round-trips and fingerprints track content") {
  ExperimentConfig a;
  a.set("seed", "42");
  a.set("drive.policies", "ualfd,safe_mode");
  ExperimentConfig b;
  b.parse(a.dump());
  CHECK(b.dump() == a.dump());
  CHECK(b.fingerprint() == a.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  b.set("seed", "43");
  CHECK(b.fingerprint() != a.fingerprint());
  CHECK(a.words("drive.policies") == std::vector<std::string>{"ualfd", "safe_mode"});
}

TEST_CASE("sub-seeds derive from the global seed") {
  ExperimentConfig cfg;
  cfg.set("seed", "100");
  CHECK(mlp_config(cfg, 2).seed == 100);
  CHECK(train_schedule(cfg).seed == 101);
  CHECK(scenario_spec(cfg).seed == 102);
  CHECK(demo_config(cfg).seed == 103);
  CHECK(driving_train_config(cfg).seed == 100);
}

TEST_CASE("builders carry the values through") {
  ExperimentConfig cfg;
  cfg.parse(
      "model.hidden = 8\n"
      "model.mixtures = 3\n"
      "train.optimizer = sgd\n"
      "scenario.kind = absence_of_data\n"
      "track.lanes = 4\n"
      "episode.ego_lane = 1\n"
      "traffic.cars_per_100m = 1.5\n"
      "switch.distance_ualfd = 1.0\n");
  CHECK(mlp_config(cfg, 2).hidden_dims == std::vector<std::size_t>{8});
  CHECK(mdn_config(cfg, 1).num_mixtures == 3);
  CHECK(train_schedule(cfg).optimizer == OptimizerKind::kSgd);
  CHECK(scenario_spec(cfg).kind == ScenarioKind::kAbsenceOfData);
  const lfd::EpisodeConfig ep = episode_config(cfg);
  CHECK(ep.scene.track.num_lanes == 4);
  CHECK(ep.scene.ego_lane == 1);
  CHECK(ep.scene.traffic.cars_per_lane_per_100m == 1.5);
  CHECK(switch_config(cfg).immediate_switch_distance_ualfd == 1.0);
}

TEST_CASE("builders validate cross-field constraints") {
  ExperimentConfig cfg;
  SUBCASE("ego lane beyond the track") {
    cfg.parse("track.lanes = 3\nepisode.ego_lane = 3\n");
    CHECK_THROWS_AS(episode_config(cfg), ConfigError);
  }
  SUBCASE("zero batch") {
    cfg.set("train.batch_size", "0");
    CHECK_THROWS_AS(train_schedule(cfg), ConfigError);
  }
  SUBCASE("percentile out of range") {
    cfg.set("switch.threshold_percentile", "120");
    CHECK_THROWS_AS(switch_config(cfg), ConfigError);
  }
  SUBCASE("keep probability out of range") {
    cfg.set("model.keep_prob", "0");
    CHECK_THROWS_AS(mlp_config(cfg, 2), ConfigError);
  }
}

TEST_CASE("missing config file") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.load_file("/nonexistent/dir/exp.cfg"), ConfigError);
}

TEST_CASE("key table lists every key") {
  const std::string table = describe_keys();
  for (const ConfigKey& k : ExperimentConfig::keys()) CHECK(table.find(k.name) != std::string::npos);
}
