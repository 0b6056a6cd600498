#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mdnu/errors.hpp"
#include "mdnu/synthetic.hpp"

using namespace mdnu;

namespace {

Model k_mixture_model(std::size_t k) {
  MlpConfig base;
  base.input_dim = 2;
  base.hidden_dims = {16, 16};
  base.seed = 5;
  MdnConfig mdn;
  mdn.num_mixtures = k;
  return make_mdn_model(base, mdn);
}

}  // namespace

TEST_CASE("target function reference values") {
  CHECK(target_fn(0.0, 0.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(std::abs(target_fn(2.0, 0.0)) < 1e-14);  // cos(pi/2)
  CHECK(target_fn(0.0, -2.0) == doctest::Approx(target_fn(2.0, 0.0)));
  CHECK(target_fn(6.0, 6.0) == doctest::Approx(1.223982280186814432).epsilon(1e-13));
  CHECK(target_fn(3.0, 4.0) == doctest::Approx(target_fn(-5.0, 0.0)).epsilon(1e-15));
}

TEST_CASE("scenario names round-trip") {
  for (auto kind : {ScenarioKind::kAbsenceOfData, ScenarioKind::kHeavyNoise, ScenarioKind::kComposition}) {
    CHECK(scenario_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(scenario_from_string("fog"), ConfigError);
}

TEST_CASE("invalid scenario specs are rejected") {
  ScenarioSpec spec;
  SUBCASE("no points") { spec.num_points = 0; }
  SUBCASE("empty domain") { spec.half_width = 0.0; }
  SUBCASE("inverted noise band") {
    spec.noise_low = 1.0;
    spec.noise_high = -1.0;
  }
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

TEST_CASE("absence of data leaves the first quadrant empty") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kAbsenceOfData;
  spec.seed = 3;
  const TrainingSet data = generate(spec);
  REQUIRE(data.inputs.cols() == 4000);
  for (Eigen::Index i = 0; i < data.inputs.cols(); ++i) {
    const double x1 = data.inputs(0, i), x2 = data.inputs(1, i);
    CHECK_FALSE((x1 > 0.0 && x2 > 0.0));
    CHECK((std::abs(x1) <= 6.0 && std::abs(x2) <= 6.0));
    CHECK(data.targets(0, i) == target_fn(x1, x2));
  }
}

TEST_CASE("heavy noise only touches the first quadrant and stays in band") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kHeavyNoise;
  spec.seed = 4;
  const TrainingSet data = generate(spec);
  std::size_t noisy = 0;
  for (Eigen::Index i = 0; i < data.inputs.cols(); ++i) {
    const double x1 = data.inputs(0, i), x2 = data.inputs(1, i);
    const double residual = data.targets(0, i) - target_fn(x1, x2);
    if (x1 > 0.0 && x2 > 0.0) {
      CHECK((residual >= -2.0 && residual <= 2.0));
      noisy += 1;
    } else {
      CHECK(residual == 0.0);
    }
  }
  CHECK(noisy > 800);
  CHECK(noisy < 1200);
}

TEST_CASE("composition targets are f or -f with a fair split") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::kComposition;
  spec.seed = 5;
  const TrainingSet data = generate(spec);
  std::size_t flipped = 0;
  for (Eigen::Index i = 0; i < data.inputs.cols(); ++i) {
    const double f = target_fn(data.inputs(0, i), data.inputs(1, i));
    const double y = data.targets(0, i);
    CHECK((y == f || y == -f));
    flipped += (y == -f && f != 0.0);
  }
  CHECK(static_cast<double>(flipped) / 4000.0 == doctest::Approx(0.5).epsilon(0.08));
}

TEST_CASE("generation is a function of the seed") {
  ScenarioSpec spec;
  spec.seed = 9;
  const TrainingSet a = generate(spec), b = generate(spec);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  spec.seed = 10;
  CHECK_FALSE(generate(spec).inputs == a.inputs);
}

TEST_CASE("grid centres") {
  CHECK(grid_center(0, 2, 6.0) == -3.0);
  CHECK(grid_center(1, 2, 6.0) == 3.0);
  CHECK(grid_center(0, 40, 6.0) == doctest::Approx(-5.85));
  CHECK(grid_center(39, 40, 6.0) == doctest::Approx(5.85));
}

TEST_CASE("quadrant membership") {
  CHECK(quadrant_of(1, 1) == 0u);
  CHECK(quadrant_of(-1, 1) == 1u);
  CHECK(quadrant_of(-1, -1) == 2u);
  CHECK(quadrant_of(1, -1) == 3u);
  CHECK_FALSE(quadrant_of(0, 1).has_value());
  CHECK_FALSE(quadrant_of(1, 0).has_value());
}

TEST_CASE("grid evaluation layout and K=1 degeneracy") {
  const GridEval grid = evaluate_grid(k_mixture_model(1), 10);
  REQUIRE(grid.cells.size() == 100);
  CHECK(grid.cells[1].x1 == grid_center(1, 10, 6.0));
  CHECK(grid.cells[1].x2 == grid_center(0, 10, 6.0));
  CHECK(grid.cells[10].x2 == grid_center(1, 10, 6.0));
  for (const GridCell& c : grid.cells) CHECK(c.report.explained_sum() == 0.0);
}

TEST_CASE("quadrant stats of a uniform grid") {
  GridEval grid = evaluate_grid(k_mixture_model(3), 4);
  for (GridCell& c : grid.cells) {
    c.report.total_variance = Eigen::VectorXd::Constant(1, 3.0);
    c.report.explained = Eigen::VectorXd::Constant(1, 1.0);
    c.report.unexplained = Eigen::VectorXd::Constant(1, 2.0);
  }
  const QuadrantStats q = quadrant_stats(grid);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(q.quadrant[i].count == 4);
    CHECK(q.quadrant[i].total == doctest::Approx(3.0));
    CHECK(q.quadrant[i].explained == doctest::Approx(1.0));
    CHECK(q.quadrant[i].unexplained == doctest::Approx(2.0));
  }
  const ChannelMeans rest = q.others(0);
  CHECK(rest.count == 12);
  CHECK(rest.unexplained == doctest::Approx(2.0));
}

TEST_CASE("grid CSV has one row per cell") {
  const GridEval grid = evaluate_grid(k_mixture_model(2), 5);
  std::ostringstream out;
  write_grid_csv(out, grid);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x1,x2,map_mean,total,explained,unexplained");
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 25);
}

TEST_CASE("grid evaluation rejects zero resolution") {
  CHECK_THROWS(evaluate_grid(k_mixture_model(2), 0));
}
