#include "mdnu/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "mdnu/errors.hpp"
#include "mdnu/text_format.hpp"

namespace mdnu {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kAbsenceOfData: return "absence_of_data";
    case ScenarioKind::kHeavyNoise: return "heavy_noise";
    case ScenarioKind::kComposition: return "composition";
  }
  return "unknown";
}

ScenarioKind scenario_from_string(const std::string& name) {
  if (name == "absence_of_data" || name == "absence") return ScenarioKind::kAbsenceOfData;
  if (name == "heavy_noise" || name == "noise") return ScenarioKind::kHeavyNoise;
  if (name == "composition") return ScenarioKind::kComposition;
  throw ConfigError("unknown scenario '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (num_points == 0) throw ConfigError("num_points must be positive");
  if (!(half_width > 0.0)) throw ConfigError("half_width must be positive");
  if (kind == ScenarioKind::kHeavyNoise && !(noise_low < noise_high)) {
    throw ConfigError("noise_low must be below noise_high");
  }
}

double target_fn(double x1, double x2) {
  const double r = std::hypot(x1, x2);
  return 5.0 * std::cos(std::numbers::pi / 2.0 * (r / 2.0)) * std::exp(-std::numbers::pi * r / 20.0);
}

TrainingSet generate(const ScenarioSpec& spec) {
  spec.validate();
  RandomState rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.num_points);
  TrainingSet data;
  data.inputs.resize(2, n);
  data.targets.resize(1, n);
  auto coord = [&] { return (2.0 * uniform01(rng) - 1.0) * spec.half_width; };

  for (Eigen::Index i = 0; i < n; ++i) {
    double x1 = coord(), x2 = coord();
    if (spec.kind == ScenarioKind::kAbsenceOfData) {
      while (x1 > 0.0 && x2 > 0.0) {
        x1 = coord();
        x2 = coord();
      }
    }
    double y = target_fn(x1, x2);
    if (spec.kind == ScenarioKind::kHeavyNoise && x1 > 0.0 && x2 > 0.0) {
      y += spec.noise_low + (spec.noise_high - spec.noise_low) * uniform01(rng);
    } else if (spec.kind == ScenarioKind::kComposition && uniform01(rng) < 0.5) {
      y = -y;
    }
    data.inputs(0, i) = x1;
    data.inputs(1, i) = x2;
    data.targets(0, i) = y;
  }
  return data;
}

double grid_center(std::size_t i, std::size_t resolution, double half_width) {
  const double cell = 2.0 * half_width / static_cast<double>(resolution);
  return -half_width + (static_cast<double>(i) + 0.5) * cell;
}

GridEval evaluate_grid(const Model& model, std::size_t resolution, double half_width) {
  if (resolution == 0) throw ArgumentError("grid resolution must be positive");
  if (model.network.input_dim() != 2) throw ArgumentError("grid evaluation needs a 2-input model");
  const auto cells = static_cast<Eigen::Index>(resolution * resolution);
  Eigen::MatrixXd inputs(2, cells);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const auto k = static_cast<Eigen::Index>(r * resolution + c);
      inputs(0, k) = grid_center(c, resolution, half_width);
      inputs(1, k) = grid_center(r, resolution, half_width);
    }
  }
  const std::vector<GmmParams> gmms = predict_gmm(model, inputs);
  GridEval grid;
  grid.resolution = resolution;
  grid.half_width = half_width;
  grid.cells.reserve(gmms.size());
  for (std::size_t k = 0; k < gmms.size(); ++k) {
    GridCell cell;
    cell.x1 = inputs(0, static_cast<Eigen::Index>(k));
    cell.x2 = inputs(1, static_cast<Eigen::Index>(k));
    cell.report = make_report(gmms[k]);
    cell.map_mean = map_of(gmms[k]).mean(0);
    grid.cells.push_back(std::move(cell));
  }
  return grid;
}

std::optional<std::size_t> quadrant_of(double x1, double x2) {
  if (x1 > 0.0 && x2 > 0.0) return 0;
  if (x1 < 0.0 && x2 > 0.0) return 1;
  if (x1 < 0.0 && x2 < 0.0) return 2;
  if (x1 > 0.0 && x2 < 0.0) return 3;
  return std::nullopt;
}

ChannelMeans QuadrantStats::others(std::size_t q) const {
  ChannelMeans out;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == q) continue;
    const auto& m = quadrant[i];
    const auto w = static_cast<double>(m.count);
    out.total += m.total * w;
    out.explained += m.explained * w;
    out.unexplained += m.unexplained * w;
    out.count += m.count;
  }
  if (out.count > 0) {
    const auto w = static_cast<double>(out.count);
    out.total /= w;
    out.explained /= w;
    out.unexplained /= w;
  }
  return out;
}

QuadrantStats quadrant_stats(const GridEval& grid) {
  QuadrantStats stats;
  for (const GridCell& cell : grid.cells) {
    const auto q = quadrant_of(cell.x1, cell.x2);
    if (!q) continue;
    ChannelMeans& m = stats.quadrant[*q];
    m.total += cell.report.total_sum();
    m.explained += cell.report.explained_sum();
    m.unexplained += cell.report.unexplained_sum();
    ++m.count;
  }
  for (ChannelMeans& m : stats.quadrant) {
    if (m.count == 0) continue;
    const auto w = static_cast<double>(m.count);
    m.total /= w;
    m.explained /= w;
    m.unexplained /= w;
  }
  return stats;
}

void write_grid_csv(std::ostream& out, const GridEval& grid) {
  out << "x1,x2,map_mean,total,explained,unexplained\n";
  for (const GridCell& c : grid.cells) {
    out << fmt_real(c.x1) << ',' << fmt_real(c.x2) << ',' << fmt_real(c.map_mean) << ','
        << fmt_real(c.report.total_sum()) << ',' << fmt_real(c.report.explained_sum()) << ','
        << fmt_real(c.report.unexplained_sum()) << '\n';
  }
}

}  // namespace mdnu
