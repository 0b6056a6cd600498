#pragma once

// Two-input synthetic regression scenarios on the square [-6, 6]^2 and the
// grid evaluation used to read off their uncertainty signatures.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdnu/mdn.hpp"
#include "mdnu/uncertainty.hpp"

namespace mdnu {

enum class ScenarioKind { kAbsenceOfData, kHeavyNoise, kComposition };

std::string to_string(ScenarioKind kind);
/// Accepts "absence_of_data", "heavy_noise", "composition".
ScenarioKind scenario_from_string(const std::string& name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kHeavyNoise;
  std::size_t num_points = 4000;
  double noise_low = -2.0;
  double noise_high = 2.0;
  double half_width = 6.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// f(x) = 5 cos((pi/2) |x/2|) exp(-pi |x| / 20).
double target_fn(double x1, double x2);

/// Absence of data: no samples with x1 > 0 and x2 > 0.
/// Heavy noise: Uniform(noise_low, noise_high) added to targets in that quadrant only.
/// Composition: each target is f(x) or -f(x) by a fair coin.
TrainingSet generate(const ScenarioSpec& spec);

struct GridCell {
  double x1 = 0.0;
  double x2 = 0.0;
  double map_mean = 0.0;  // first output dimension of the MAP mixture
  UncertaintyReport report;
};

struct GridEval {
  std::size_t resolution = 0;
  double half_width = 6.0;
  std::vector<GridCell> cells;  // row-major: x2 outer, x1 inner
};

/// Centre of grid cell i along one axis.
double grid_center(std::size_t i, std::size_t resolution, double half_width);

GridEval evaluate_grid(const Model& model, std::size_t resolution, double half_width = 6.0);

struct ChannelMeans {
  double total = 0.0;
  double explained = 0.0;
  double unexplained = 0.0;
  std::size_t count = 0;
};

/// Quadrants indexed 0..3 = I (x1>0,x2>0), II (x1<0,x2>0), III (x1<0,x2<0),
/// IV (x1>0,x2<0). Cells centred on an axis belong to no quadrant.
struct QuadrantStats {
  std::array<ChannelMeans, 4> quadrant;

  /// Mean over the three quadrants other than `q`, weighted by cell count.
  ChannelMeans others(std::size_t q) const;
};

std::optional<std::size_t> quadrant_of(double x1, double x2);
QuadrantStats quadrant_stats(const GridEval& grid);

/// Columns: x1,x2,map_mean,total,explained,unexplained (variances summed over dimensions).
void write_grid_csv(std::ostream& out, const GridEval& grid);

}  // namespace mdnu
