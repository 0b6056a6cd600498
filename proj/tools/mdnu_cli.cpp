// mdnu: train models, evaluate uncertainty grids, run driving suites, time
// the single-pass estimate against MC dropout, and run the acceptance battery.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdnu/acceptance.hpp"
#include "mdnu/config.hpp"
#include "mdnu/errors.hpp"
#include "mdnu/mdn.hpp"
#include "mdnu/synthetic.hpp"
#include "mdnu/text_format.hpp"
#include "mdnu/ualfd.hpp"
#include "mdnu/uncertainty.hpp"

namespace fs = std::filesystem;
using namespace mdnu;

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kBadConfig = 2, kDiverged = 3, kRuntime = 4 };

constexpr const char* kThresholdFile = "threshold.txt";

struct Common {
  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
};

// Defaults, then the file, then MDNU_OUT_DIR / MDNU_JOBS, then --set, then
// the dedicated flags.
ExperimentConfig resolve(const Common& common, const std::map<std::string, std::string>& command_keys) {
  ExperimentConfig cfg;
  if (!common.config_file.empty()) cfg.load_file(common.config_file);
  if (const char* env = std::getenv("MDNU_OUT_DIR"); env && *env) cfg.set("out_dir", env);
  if (const char* env = std::getenv("MDNU_JOBS"); env && *env) {
    try {
      cfg.set("jobs", env);
    } catch (const ConfigError&) {
      throw ConfigError(std::string("environment variable MDNU_JOBS: cannot read '") + env + "' as a thread count");
    }
  }
  for (const auto& a : common.assignments) cfg.apply_assignment(a);
  if (common.out_dir) cfg.set("out_dir", *common.out_dir);
  if (common.jobs) cfg.set("jobs", std::to_string(*common.jobs));
  if (common.seed) cfg.set("seed", std::to_string(*common.seed));
  for (const auto& [k, v] : command_keys) cfg.set(k, v);
  return cfg;
}

fs::path make_run_dir(const ExperimentConfig& cfg, const std::string& command) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp + "-" + cfg.fingerprint().substr(0, 8);
  fs::path dir = fs::path(cfg.text("out_dir")) / base;
  for (int n = 2; fs::exists(dir); ++n) dir = fs::path(cfg.text("out_dir")) / (base + "-" + std::to_string(n));
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << "# mdnu " << command << "\n" << cfg.dump();
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_loss_csv(const fs::path& path, const TrainResult& r) {
  auto out = open_output(path);
  out << "epoch,loss\n";
  out << 0 << ',' << fmt_real(r.initial_loss) << '\n';
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) out << e + 1 << ',' << fmt_real(r.epoch_losses[e]) << '\n';
}

Model load_model(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path.string());
  return Model::load_file(path.string());
}

// ---- train --------------------------------------------------------------

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path dir = make_run_dir(cfg, "train");
  if (cfg.text("train.source") == "demos") {
    lfd::DemoStats stats;
    const lfd::DemoConfig demo = demo_config(cfg);
    const TrainingSet demos = lfd::collect_demonstrations(demo, &stats);
    log << "demonstrations: " << stats.episodes_kept << " kept, " << stats.episodes_discarded << " discarded, "
        << stats.samples << " samples\n";
    const lfd::DrivingModels models = lfd::train_driving_models(demos, driving_train_config(cfg));
    models.mdn_k10.save_file((dir / "mdn_k10.model").string());
    models.mdn_k1.save_file((dir / "mdn_k1.model").string());
    models.regnet.save_file((dir / "regnet.model").string());
    write_loss_csv(dir / "loss_mdn_k10.csv", models.training[0]);
    write_loss_csv(dir / "loss_mdn_k1.csv", models.training[1]);
    write_loss_csv(dir / "loss_regnet.csv", models.training[2]);

    const double percentile = cfg.real("switch.threshold_percentile");
    auto thr = open_output(dir / kThresholdFile);
    thr << "percentile = " << fmt_real(percentile) << "\n";
    if (percentile > 0.0) {
      thr << "log_threshold = " << fmt_real(lfd::calibrate_log_threshold(models.mdn_k10, demos.inputs, percentile), 17)
          << "\n";
    }
    nlohmann::json summary = {{"episodes_kept", stats.episodes_kept},
                              {"episodes_discarded", stats.episodes_discarded},
                              {"samples", stats.samples}};
    const char* names[] = {"mdn_k10", "mdn_k1", "regnet"};
    for (std::size_t i = 0; i < 3; ++i) {
      summary[names[i]] = {{"initial_loss", models.training[i].initial_loss},
                           {"final_loss", models.training[i].final_loss}};
      log << names[i] << ": loss " << models.training[i].initial_loss << " -> " << models.training[i].final_loss << "\n";
    }
    open_output(dir / "summary.json") << summary.dump(2) << "\n";
  } else {
    const ScenarioSpec spec = scenario_spec(cfg);
    const TrainingSet data = generate(spec);
    Model model = cfg.text("model.head") == "mdn" ? make_mdn_model(mlp_config(cfg, 2), mdn_config(cfg, 1))
                                                  : make_regression_model(mlp_config(cfg, 2));
    const TrainResult r = train(model, data, train_schedule(cfg));
    model.save_file((dir / "model.bin").string());
    write_loss_csv(dir / "loss.csv", r);
    const nlohmann::json summary = {{"scenario", to_string(spec.kind)},
                                    {"samples", data.size()},
                                    {"epochs", r.epoch_losses.size()},
                                    {"initial_loss", r.initial_loss},
                                    {"final_loss", r.final_loss}};
    open_output(dir / "summary.json") << summary.dump(2) << "\n";
    log << to_string(spec.kind) << ": loss " << r.initial_loss << " -> " << r.final_loss << "\n";
  }
  std::cout << dir.string() << "\n";
  return kOk;
}

// ---- grid ---------------------------------------------------------------

int cmd_grid(const ExperimentConfig& cfg, const std::string& model_path, std::ostream& log) {
  const Model model = load_model(model_path);
  if (!model.is_mdn()) throw ConfigError("grid needs a mixture density model: " + model_path);
  const std::size_t resolution = cfg.count("grid.resolution");
  if (resolution == 0) throw ConfigError("config key 'grid.resolution' must be positive");
  const fs::path dir = make_run_dir(cfg, "grid");
  const GridEval grid = evaluate_grid(model, resolution, cfg.real("scenario.half_width"));
  {
    auto out = open_output(dir / "grid.csv");
    write_grid_csv(out, grid);
  }
  const QuadrantStats q = quadrant_stats(grid);
  auto out = open_output(dir / "quadrants.csv");
  out << "quadrant,cells,total,explained,unexplained\n";
  for (std::size_t i = 0; i < 4; ++i) {
    const ChannelMeans& m = q.quadrant[i];
    out << i + 1 << ',' << m.count << ',' << fmt_real(m.total) << ',' << fmt_real(m.explained) << ','
        << fmt_real(m.unexplained) << '\n';
    log << "Q" << i + 1 << ": total " << m.total << ", explained " << m.explained << ", unexplained "
        << m.unexplained << "\n";
  }
  std::cout << dir.string() << "\n";
  return kOk;
}

// ---- drive --------------------------------------------------------------

double read_threshold(const fs::path& models_dir, double percentile) {
  const fs::path path = models_dir / kThresholdFile;
  std::ifstream in(path);
  if (!in) throw ConfigError("missing " + path.string() + "; train with train.source = demos first");
  double recorded = -1.0;
  std::optional<double> value;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, line.find_first_of(" =")), v = line.substr(eq + 1);
    if (key == "percentile") recorded = std::stod(v);
    if (key == "log_threshold") value = std::stod(v);
  }
  if (!value || recorded != percentile) {
    throw ConfigError("config key 'switch.threshold_percentile' = " + fmt_real(percentile) + " but " + path.string() +
                      " was calibrated at " + fmt_real(recorded) + "; retrain or set it to 0 for the fixed threshold");
  }
  return *value;
}

void write_paired_csv(std::ostream& out, const lfd::SuiteResult& suite, const std::vector<lfd::PolicyKind>& policies) {
  out << "density,seed,baseline,policy,collision_baseline,collision_policy,elapsed_baseline_s,elapsed_policy_s,"
         "min_dist_baseline_m,min_dist_policy_m,lane_changes_baseline,lane_changes_policy,"
         "safe_fraction_baseline,safe_fraction_policy\n";
  std::map<std::pair<double, std::uint64_t>, std::map<lfd::PolicyKind, const lfd::EpisodeMetrics*>> by_scene;
  std::vector<std::pair<double, std::uint64_t>> order;
  for (const auto& row : suite.episodes) {
    auto key = std::make_pair(row.density, row.seed);
    if (!by_scene.count(key)) order.push_back(key);
    by_scene[key][row.policy] = &row.metrics;
  }
  for (const auto& key : order) {
    const auto& runs = by_scene[key];
    const lfd::EpisodeMetrics& a = *runs.at(policies[0]);
    for (std::size_t i = 1; i < policies.size(); ++i) {
      const lfd::EpisodeMetrics& b = *runs.at(policies[i]);
      out << fmt_real(key.first) << ',' << key.second << ',' << lfd::to_string(policies[0]) << ','
          << lfd::to_string(policies[i]) << ',' << int(a.collision) << ',' << int(b.collision) << ','
          << fmt_real(a.elapsed_time) << ',' << fmt_real(b.elapsed_time) << ',' << fmt_real(a.min_dist_to_cars) << ','
          << fmt_real(b.min_dist_to_cars) << ',' << a.num_lane_changes << ',' << b.num_lane_changes << ','
          << fmt_real(a.safe_tick_fraction()) << ',' << fmt_real(b.safe_tick_fraction()) << '\n';
    }
  }
}

int cmd_drive(const ExperimentConfig& cfg, const std::string& models_dir, std::ostream& log) {
  std::vector<lfd::PolicyKind> policies;
  for (const auto& name : cfg.words("drive.policies")) policies.push_back(lfd::policy_from_string(name));
  if (policies.empty()) throw ConfigError("config key 'drive.policies' names no policy");
  const std::vector<double> densities = cfg.reals("drive.densities");
  const std::size_t seeds = cfg.count("drive.seeds");
  if (seeds == 0) throw ConfigError("config key 'drive.seeds' must be positive");

  // Load only what the requested policies need.
  std::optional<Model> k10, k1, reg;
  bool needs_threshold = false;
  for (auto kind : policies) {
    const auto file = [&](const char* name) {
      if (models_dir.empty()) throw ConfigError("policy " + lfd::to_string(kind) + " needs --models");
      return fs::path(models_dir) / name;
    };
    switch (kind) {
      case lfd::PolicyKind::kUalfd:
      case lfd::PolicyKind::kUalfd2:
        needs_threshold = true;
        [[fallthrough]];
      case lfd::PolicyKind::kMdnK10:
        if (!k10) k10 = load_model(file("mdn_k10.model"));
        break;
      case lfd::PolicyKind::kMdnK1:
        if (!k1) k1 = load_model(file("mdn_k1.model"));
        break;
      case lfd::PolicyKind::kRegNet:
        if (!reg) reg = load_model(file("regnet.model"));
        break;
      case lfd::PolicyKind::kSafeMode:
        break;
    }
  }
  lfd::SwitchConfig switching = switch_config(cfg);
  const double percentile = cfg.real("switch.threshold_percentile");
  if (needs_threshold && percentile > 0.0) {
    switching.log_explained_threshold = read_threshold(models_dir, percentile);
  }
  if (needs_threshold) log << "log threshold " << switching.log_explained_threshold << "\n";

  lfd::PolicyModels models{k10 ? &*k10 : nullptr, k1 ? &*k1 : nullptr, reg ? &*reg : nullptr};
  const lfd::EpisodeConfig episode = episode_config(cfg);
  const std::uint64_t first_seed = cfg.seed("drive.first_seed");
  const std::size_t jobs = std::max<std::size_t>(1, cfg.count("jobs"));
  const fs::path dir = make_run_dir(cfg, "drive");

  const lfd::SuiteResult suite =
      lfd::evaluate_suite(policies, seeds, densities, models, episode, switching, first_seed, jobs);
  {
    auto out = open_output(dir / "metrics.csv");
    lfd::write_metrics_csv(out, suite.table);
  }
  {
    auto out = open_output(dir / "episodes.csv");
    lfd::write_episodes_csv(out, suite.episodes);
  }
  {
    auto out = open_output(dir / "table.txt");
    lfd::write_metrics_table(out, suite.table);
  }
  lfd::write_metrics_table(log, suite.table);
  if (policies.size() > 1) {
    auto out = open_output(dir / "paired.csv");
    write_paired_csv(out, suite, policies);
  }
  if (cfg.flag("drive.replays")) {
    // Replays are re-simulated with logging on; episodes are deterministic.
    lfd::EpisodeConfig logged = episode;
    logged.record_log = true;
    fs::create_directories(dir / "replays");
    for (double density : densities) {
      logged.scene.traffic.density = density;
      for (auto kind : policies) {
        for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
          const lfd::EpisodeResult r = lfd::run_episode(kind, s, models, logged, switching);
          char name[96];
          std::snprintf(name, sizeof name, "%s_d%.2f_s%llu.csv", lfd::to_string(kind).c_str(), density,
                        static_cast<unsigned long long>(s));
          auto out = open_output(dir / "replays" / name);
          lfd::write_replay_csv(out, r.log);
        }
      }
    }
  }
  std::cout << dir.string() << "\n";
  return kOk;
}

// ---- bench --------------------------------------------------------------

int cmd_bench(const ExperimentConfig& cfg, const std::string& model_path, std::ostream& log) {
  const std::size_t samples = cfg.count("bench.samples");
  const std::size_t reps = cfg.count("bench.repetitions");
  if (samples < 2) throw ArgumentError("bench.samples must be at least 2, got " + std::to_string(samples));
  if (reps == 0) throw ConfigError("config key 'bench.repetitions' must be positive");

  Model model = [&] {
    if (!model_path.empty()) return load_model(model_path);
    ExperimentConfig topology = cfg;
    topology.set("model.keep_prob", cfg.text("bench.keep_prob"));
    return make_mdn_model(mlp_config(topology, 2), mdn_config(topology, 1));
  }();
  if (!model.is_mdn()) throw ConfigError("bench needs a mixture density model");
  if (model.network.config().dropout_keep_prob >= 1.0) {
    throw ConfigError("bench needs a model trained with dropout (keep probability below 1)");
  }

  RandomState rng(cfg.seed("seed"));
  std::vector<Eigen::VectorXd> xs;
  const auto in = static_cast<Eigen::Index>(model.network.input_dim());
  for (std::size_t i = 0; i < reps; ++i) {
    xs.push_back(Eigen::VectorXd::NullaryExpr(in, [&] { return 12.0 * uniform01(rng) - 6.0; }));
  }
  using Clock = std::chrono::steady_clock;
  double sink = 0.0;
  auto t0 = Clock::now();
  for (const auto& x : xs) sink += report(model, x).total_sum();
  const double single_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / double(reps);
  t0 = Clock::now();
  for (const auto& x : xs) sink += mc_dropout_variance(model, x, samples, rng).variance.sum();
  const double mc_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / double(reps);
  if (!std::isfinite(sink)) throw std::runtime_error("non-finite uncertainty during benchmark");

  const fs::path dir = make_run_dir(cfg, "bench");
  const nlohmann::json report_json = {{"samples", samples},
                                      {"repetitions", reps},
                                      {"single_pass_ms", single_ms},
                                      {"mc_dropout_ms", mc_ms},
                                      {"speedup", mc_ms / single_ms}};
  open_output(dir / "timing.json") << report_json.dump(2) << "\n";
  log << "single pass " << single_ms << " ms, MC dropout (T=" << samples << ") " << mc_ms << " ms, speedup "
      << mc_ms / single_ms << "x\n";
  std::cout << dir.string() << "\n";
  return kOk;
}

// ---- suite --------------------------------------------------------------

int cmd_suite(const ExperimentConfig& cfg, const std::vector<int>& only, std::ostream& log) {
  const fs::path dir = make_run_dir(cfg, "suite");
  acceptance::Options options;
  options.seed = cfg.seed("seed");
  options.jobs = std::max<std::size_t>(1, cfg.count("jobs"));
  options.log = &log;
  options.artifact_dir = (dir / "artifacts").string();
  const auto results = acceptance::run(options, only);
  auto out = open_output(dir / "acceptance.txt");
  bool all = true;
  for (const auto& r : results) {
    out << acceptance::format_line(r) << "\n";
    std::cout << acceptance::format_line(r) << "\n";
    all = all && r.passed;
  }
  std::cout << dir.string() << "\n";
  return all ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture density networks with sampling-free uncertainty, and uncertainty-aware driving policies"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.footer("Configuration keys (set in a --config file or with --set key=value):\n" + describe_keys() +
             "\nEnvironment: MDNU_OUT_DIR overrides out_dir, MDNU_JOBS overrides jobs.\n"
             "Exit codes: 0 success, 1 acceptance failure, 2 bad configuration or argument, 3 training diverged, "
             "4 other runtime error.");

  Common common;
  bool quiet = false;
  app.add_option("-c,--config", common.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", common.assignments, "override one key, e.g. --set train.epochs=100 (repeatable)");
  app.add_option("-o,--out", common.out_dir, "parent directory for run outputs");
  app.add_option("-j,--jobs", common.jobs, "worker threads");
  app.add_option("--seed", common.seed, "global seed");
  app.add_flag("-q,--quiet", quiet, "no progress output on stderr");

  std::map<std::string, std::string> keys;
  auto bind = [&keys](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&keys, key](const std::string& v) { keys[key] = v; }, help);
  };

  auto* train = app.add_subcommand("train", "train a model on a synthetic scenario or the three driving networks on demonstrations");
  bind(train, "--scenario", "scenario.kind", "absence_of_data, heavy_noise or composition");
  bind(train, "--epochs", "train.epochs", "training epochs (synthetic)");
  bind(train, "--mixtures", "model.mixtures", "mixture components");
  train->add_flag_callback("--demos", [&keys] { keys["train.source"] = "demos"; },
                           "collect expert demonstrations and train mdn_k10, mdn_k1 and regnet");

  std::string model_path;
  auto* grid = app.add_subcommand("grid", "evaluate the uncertainty channels on a grid over the input square");
  grid->add_option("-m,--model", model_path, "model file written by train")->required();
  bind(grid, "--resolution", "grid.resolution", "cells per axis");

  std::string models_dir;
  std::vector<std::string> policy_names;
  std::vector<std::string> density_values;
  auto* drive = app.add_subcommand("drive", "run driving episodes and write metrics, paired comparisons and replays");
  drive->add_option("-m,--models", models_dir, "directory written by train --demos");
  drive->add_option("-p,--policy", policy_names, "ualfd, ualfd2, mdn_k10, mdn_k1, regnet or safe_mode (repeatable)");
  drive->add_option("-d,--density", density_values, "traffic density (repeatable)");
  bind(drive, "--seeds", "drive.seeds", "episodes per policy and density");
  drive->add_flag_callback("--no-replays", [&keys] { keys["drive.replays"] = "false"; }, "skip per-tick replay files");

  auto* bench = app.add_subcommand("bench", "time the single-pass uncertainty against MC dropout");
  bench->add_option("-m,--model", model_path, "MDN trained with dropout; default: untrained two-layer 256-unit net");
  bind(bench, "-T,--samples", "bench.samples", "stochastic passes per MC-dropout call (at least 2)");
  bind(bench, "-r,--repetitions", "bench.repetitions", "timed calls per method");

  std::vector<int> only;
  auto* suite = app.add_subcommand("suite", "run the acceptance battery");
  suite->add_option("--only", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, acceptance::kNumCriteria));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cerr;
  try {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
      return s;
    };
    if (!policy_names.empty()) keys["drive.policies"] = join(policy_names);
    if (!density_values.empty()) keys["drive.densities"] = join(density_values);
    const ExperimentConfig cfg = resolve(common, keys);

    if (*train) return cmd_train(cfg, log);
    if (*grid) return cmd_grid(cfg, model_path, log);
    if (*drive) return cmd_drive(cfg, models_dir, log);
    if (*bench) return cmd_bench(cfg, model_path, log);
    if (*suite) return cmd_suite(cfg, only, log);
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kFailed;
}
