#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = MDNU_CLI_PATH;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("mdnu_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " -q " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// The single run directory created under `parent`.
fs::path only_run(const fs::path& parent) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(parent)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  REQUIRE(dirs.size() == 1);
  return dirs.front();
}

std::size_t data_lines(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

const std::string kTiny =
    " --set model.hidden=8 --set scenario.points=100 --set train.batch_size=32";

}  // namespace

TEST_CASE("malformed configuration exits nonzero and names the key") {
  Scratch s;
  const fs::path log = s.dir / "log.txt";
  CHECK(run("-o " + s.dir.string() + " --set train.epochz=3 train", log) == 2);
  CHECK(slurp(log).find("train.epochz") != std::string::npos);

  CHECK(run("-o " + s.dir.string() + " --set train.epochs=abc train", log) == 2);
  CHECK(slurp(log).find("train.epochs") != std::string::npos);

  const fs::path cfg = s.dir / "bad.cfg";
  std::ofstream(cfg) << "model.mixtures = 3\nnot a line\n";
  CHECK(run("-c " + cfg.string() + " -o " + s.dir.string() + " train", log) == 2);
  CHECK(slurp(log).find("bad.cfg:2") != std::string::npos);
}

TEST_CASE("train with zero epochs writes the initial model and one loss row") {
  Scratch s;
  const fs::path out = s.dir / "runs";
  REQUIRE(run("-o " + out.string() + kTiny + " train --epochs 0", s.dir / "log.txt") == 0);
  const fs::path dir = only_run(out);
  CHECK(fs::exists(dir / "model.bin"));
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(data_lines(dir / "loss.csv") == 1);
}

TEST_CASE("grid writes resolution squared rows") {
  Scratch s;
  const fs::path out = s.dir / "runs";
  REQUIRE(run("-o " + out.string() + kTiny + " train --epochs 1", s.dir / "log.txt") == 0);
  const fs::path model = only_run(out) / "model.bin";
  const fs::path grids = s.dir / "grids";
  REQUIRE(run("-o " + grids.string() + " grid -m " + model.string(), s.dir / "log.txt") == 0);
  const fs::path dir = only_run(grids);
  CHECK(data_lines(dir / "grid.csv") == 1600);
  CHECK(data_lines(dir / "quadrants.csv") == 4);

  fs::remove_all(grids);
  REQUIRE(run("-o " + grids.string() + " grid --resolution 7 -m " + model.string(), s.dir / "log.txt") == 0);
  CHECK(data_lines(only_run(grids) / "grid.csv") == 49);
}

TEST_CASE("safe mode drives ten seeds without a collision") {
  Scratch s;
  const fs::path out = s.dir / "runs";
  REQUIRE(run("-o " + out.string() + " drive -p safe_mode --seeds 10 --no-replays", s.dir / "log.txt") == 0);
  const fs::path dir = only_run(out);
  std::istringstream in(slurp(dir / "episodes.csv"));
  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("policy,density,seed,collision,", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows += 1;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    REQUIRE(cols.size() > 3);
    CHECK(cols[3] == "0");
  }
  CHECK(rows == 10);
  CHECK_FALSE(fs::exists(dir / "replays"));
}

TEST_CASE("argument errors") {
  Scratch s;
  const fs::path log = s.dir / "log.txt";
  CHECK(run("-o " + s.dir.string() + " drive -p autopilot --seeds 1", log) == 2);
  CHECK(slurp(log).find("autopilot") != std::string::npos);
  CHECK(run("-o " + s.dir.string() + " drive -p ualfd --seeds 1", log) == 2);
  CHECK(run("-o " + s.dir.string() + " bench -T 1 -r 1", log) == 2);
  CHECK(run("-o " + s.dir.string() + " grid -m " + (s.dir / "missing.bin").string(), log) != 0);
  CHECK(run("frobnicate", log) != 0);
}

TEST_CASE("same configuration, same bytes") {
  Scratch s;
  const fs::path out = s.dir / "runs";
  const std::string args = "-o " + out.string() + kTiny + " --seed 9 train --epochs 3 --scenario composition";
  REQUIRE(run(args, s.dir / "log.txt") == 0);
  REQUIRE(run(args, s.dir / "log.txt") == 0);
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(out)) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 2);
  for (const char* name : {"model.bin", "loss.csv", "config.txt"}) {
    CHECK_MESSAGE(slurp(dirs[0] / name) == slurp(dirs[1] / name), std::string(name));
  }
  // Same fingerprint in the directory name; the later run gets a suffix.
  const std::string first = dirs[0].filename().string(), second = dirs[1].filename().string();
  CHECK(first.substr(first.rfind('-', first.size() - 3) + 1, 8) == second.substr(second.rfind('-', second.size() - 3) + 1, 8));
}

TEST_CASE("bench reports a speedup") {
  Scratch s;
  const fs::path out = s.dir / "runs";
  REQUIRE(run("-o " + out.string() + " bench -T 5 -r 3", s.dir / "log.txt") == 0);
  const std::string json = slurp(only_run(out) / "timing.json");
  CHECK(json.find("speedup") != std::string::npos);
}
