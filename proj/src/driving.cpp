#include "mdnu/driving.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mdnu/errors.hpp"
#include "mdnu/mlp.hpp"

namespace mdnu::sim {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Corners {
  std::array<double, 4> x;
  std::array<double, 4> y;
};

Corners corners_of(const CarState& c) {
  const double th = c.heading_deg * kDegToRad;
  const double ux = std::cos(th), uy = std::sin(th);  // along the car
  const double vx = -uy, vy = ux;                     // across the car
  const double hl = 0.5 * c.length, hw = 0.5 * c.width;
  Corners out;
  const double sl[4] = {1, 1, -1, -1};
  const double sw[4] = {1, -1, -1, 1};
  for (int i = 0; i < 4; ++i) {
    out.x[i] = c.x + sl[i] * hl * ux + sw[i] * hw * vx;
    out.y[i] = c.y + sl[i] * hl * uy + sw[i] * hw * vy;
  }
  return out;
}

bool separated_on_axis(const Corners& a, const Corners& b, double ax, double ay) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (int i = 0; i < 4; ++i) {
    const double pa = a.x[i] * ax + a.y[i] * ay;
    const double pb = b.x[i] * ax + b.y[i] * ay;
    amin = std::min(amin, pa);
    amax = std::max(amax, pa);
    bmin = std::min(bmin, pb);
    bmax = std::max(bmax, pb);
  }
  return amax < bmin || bmax < amin;
}

double longitudinal_gap(const CarState& a, const CarState& b) {
  return std::abs(a.x - b.x) - 0.5 * (a.length + b.length);
}

}  // namespace

void Track::validate() const {
  if (num_lanes <= 0) throw ConfigError("track needs at least one lane");
  if (!(lane_width > 0.0)) throw ConfigError("lane_width must be positive");
  if (!(goal_x > start_x)) throw ConfigError("goal must lie beyond the start");
}

int Track::lane_of(double y) const {
  const int lane = static_cast<int>(std::floor(y / lane_width));
  return std::clamp(lane, 0, num_lanes - 1);
}

Perception perceive(const SimState& state, const Track& track, double d_max,
                    double default_speed_mps) {
  const CarState& ego = state.ego;
  if (!track.on_track(ego.y)) throw FeatureError("ego car is off the track");

  Perception p;
  p.ego_lane = track.lane_of(ego.y);
  p.center = NeighborSpeeds{default_speed_mps, default_speed_mps};
  std::array<double, 3> front{d_max, d_max, d_max};
  std::array<double, 3> back{d_max, d_max, d_max};

  for (const TrafficCar& car : state.traffic) {
    const int rel = track.lane_of(car.state.y) - p.ego_lane;
    if (rel < -1 || rel > 1) continue;
    const auto slot = static_cast<std::size_t>(rel + 1);
    const double raw_gap = longitudinal_gap(ego, car.state);
    const double gap = std::clamp(raw_gap, 0.0, d_max);
    // A car overlapping the ego lengthwise blocks both directions.
    const bool ahead = raw_gap <= 0.0 || car.state.x >= ego.x;
    const bool behind = raw_gap <= 0.0 || car.state.x < ego.x;
    if (ahead && gap < front[slot]) {
      front[slot] = gap;
      if (rel == 0) p.center.front_mps = car.state.speed_mps();
    }
    if (behind && gap < back[slot]) {
      back[slot] = gap;
      if (rel == 0) p.center.rear_mps = car.state.speed_mps();
    }
  }
  for (int rel = -1; rel <= 1; rel += 2) {
    if (!track.has_lane(p.ego_lane + rel)) {
      front[static_cast<std::size_t>(rel + 1)] = 0.0;
      back[static_cast<std::size_t>(rel + 1)] = 0.0;
    }
  }
  auto& f = p.features.values;
  f[kFrontLeft] = front[0];
  f[kFrontCenter] = front[1];
  f[kFrontRight] = front[2];
  f[kBackLeft] = back[0];
  f[kBackCenter] = back[1];
  f[kBackRight] = back[2];
  f[kLaneDeviation] = track.lane_center(p.ego_lane) - ego.y;
  return p;
}

FeatureVector extract_features(const SimState& state, const Track& track, double d_max) {
  return perceive(state, track, d_max).features;
}

CarState step_unicycle(const CarState& car, double speed_kmh, double yaw_rate_degps, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("dt must be positive");
  CarState next = car;
  next.heading_deg = car.heading_deg + yaw_rate_degps * dt;
  const double v = speed_kmh / kKmhPerMps;
  const double th = next.heading_deg * kDegToRad;
  next.x = car.x + v * dt * std::cos(th);
  next.y = car.y + v * dt * std::sin(th);
  next.speed_kmh = speed_kmh;
  return next;
}

double wrap_degrees(double angle) {
  double a = std::fmod(angle, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

double feedback_heading_controller(double current_deg, double desired_deg, double w_max) {
  const double diff = wrap_degrees(desired_deg - current_deg);
  const double w = 2.0 * diff * std::abs(diff);
  return std::clamp(w, -w_max, w_max);
}

SafeCommand safe_controller(const FeatureVector& features, const NeighborSpeeds& speeds,
                            double heading_dev_deg, double lane_dev_m,
                            const SafeControllerGains& gains) {
  SafeCommand cmd;
  if (features.front_center() < 3.0) {
    cmd.speed_mps = speeds.front_mps - 5.0;
  } else if (features.back_center() < 3.0) {
    cmd.speed_mps = speeds.rear_mps + 3.0;
  } else {
    cmd.speed_mps = 0.5 * (speeds.front_mps + speeds.rear_mps);
  }
  cmd.speed_mps = std::max(cmd.speed_mps, 0.0);
  const double w = gains.heading_gain * heading_dev_deg + gains.offset_gain * lane_dev_m;
  cmd.yaw_rate_degps = std::clamp(w, -gains.w_max, gains.w_max);
  return cmd;
}

double footprint_gap(const CarState& a, const CarState& b) {
  const double dx = std::max(0.0, longitudinal_gap(a, b));
  const double dy = std::max(0.0, std::abs(a.y - b.y) - 0.5 * (a.width + b.width));
  return std::hypot(dx, dy);
}

bool boxes_overlap(const CarState& a, const CarState& b) {
  // Cheap reject before the exact test.
  const double ra = 0.5 * std::hypot(a.length, a.width);
  const double rb = 0.5 * std::hypot(b.length, b.width);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return false;

  const Corners ca = corners_of(a), cb = corners_of(b);
  for (const CarState* c : {&a, &b}) {
    const double th = c->heading_deg * kDegToRad;
    if (separated_on_axis(ca, cb, std::cos(th), std::sin(th))) return false;
    if (separated_on_axis(ca, cb, -std::sin(th), std::cos(th))) return false;
  }
  return true;
}

bool detect_collision(const SimState& state, const Track& track) {
  if (!track.on_track(state.ego.y)) return true;
  for (const TrafficCar& car : state.traffic) {
    if (boxes_overlap(state.ego, car.state)) return true;
  }
  return false;
}

std::size_t TrafficSpec::reference_count(const Track& track) const {
  const double per_lane = (region_end - region_begin) / 100.0 * cars_per_lane_per_100m;
  return static_cast<std::size_t>(std::lround(per_lane * track.num_lanes));
}

std::vector<TrafficCar> spawn_traffic(const TrafficSpec& spec, const Track& track,
                                      const CarState& ego) {
  track.validate();
  if (!(spec.density >= 0.0)) throw ConfigError("traffic density must be nonnegative");
  if (!(spec.speed_min_kmh > 0.0 && spec.speed_min_kmh <= spec.speed_max_kmh)) {
    throw ConfigError("traffic speed range is invalid");
  }
  const auto count =
      static_cast<std::size_t>(std::lround(spec.density * static_cast<double>(spec.reference_count(track))));
  RandomState rng(spec.seed);
  std::vector<TrafficCar> cars;
  cars.reserve(count);
  const int ego_lane = track.lane_of(ego.y);
  constexpr int kMaxAttempts = 2000;

  for (std::size_t n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      TrafficCar car;
      car.script.lane = std::min(static_cast<int>(uniform01(rng) * track.num_lanes), track.num_lanes - 1);
      const double x = track.start_x + spec.region_begin +
                       uniform01(rng) * (spec.region_end - spec.region_begin);
      car.script.desired_speed_kmh =
          spec.speed_min_kmh + uniform01(rng) * (spec.speed_max_kmh - spec.speed_min_kmh);
      car.state.x = x;
      car.state.y = track.lane_center(car.script.lane);
      car.state.speed_kmh = car.script.desired_speed_kmh;

      const int lane_offset = std::abs(car.script.lane - ego_lane);
      const double ego_room = lane_offset == 0 ? spec.ego_clearance
                              : lane_offset == 1 ? 0.5 * spec.ego_clearance
                                                 : 0.0;
      if (lane_offset <= 1 && longitudinal_gap(car.state, ego) < ego_room) continue;
      bool clear = true;
      for (const TrafficCar& other : cars) {
        if (other.script.lane == car.script.lane &&
            longitudinal_gap(car.state, other.state) < spec.min_gap) {
          clear = false;
          break;
        }
      }
      if (clear) {
        cars.push_back(car);
        placed = true;
      }
    }
    if (!placed) {
      throw SpawnError("cannot place traffic car " + std::to_string(n + 1) + " of " +
                       std::to_string(count) + " without overlap");
    }
  }
  std::sort(cars.begin(), cars.end(), [](const TrafficCar& a, const TrafficCar& b) {
    return a.state.x < b.state.x || (a.state.x == b.state.x && a.script.lane < b.script.lane);
  });
  return cars;
}

void step_traffic(SimState& state, const Track& track, const TrafficParams& params) {
  const std::vector<TrafficCar> before = state.traffic;
  const CarState& ego = state.ego;
  for (std::size_t i = 0; i < state.traffic.size(); ++i) {
    const CarState& me = before[i].state;
    const double lane_y = track.lane_center(before[i].script.lane);
    double leader_gap = std::numeric_limits<double>::infinity();
    double leader_speed = 0.0;

    auto consider = [&](const CarState& other) {
      if (other.x <= me.x) return;
      const double gap = longitudinal_gap(me, other);
      if (gap < leader_gap) {
        leader_gap = gap;
        leader_speed = other.speed_mps();
      }
    };
    for (std::size_t j = 0; j < before.size(); ++j) {
      if (j != i && before[j].script.lane == before[i].script.lane) consider(before[j].state);
    }
    if (std::abs(ego.y - lane_y) < 0.5 * (ego.width + me.width) + params.lateral_margin) {
      consider(ego);
    }

    double v = before[i].script.desired_speed_kmh / kKmhPerMps;
    if (std::isfinite(leader_gap)) {
      v = std::min(v, leader_speed + (leader_gap - params.min_gap) / params.time_gap);
    }
    v = std::max(v, 0.0);
    CarState& next = state.traffic[i].state;
    next.speed_kmh = v * kKmhPerMps;
    next.x = me.x + v * state.dt;
    next.y = lane_y;
    next.heading_deg = 0.0;
  }
}

SimState make_scene(const SceneConfig& cfg) {
  cfg.track.validate();
  if (!cfg.track.has_lane(cfg.ego_lane)) throw ConfigError("ego lane is not on the track");
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  SimState s;
  s.dt = cfg.dt;
  s.ego.x = cfg.track.start_x + cfg.ego_x;
  s.ego.y = cfg.track.lane_center(cfg.ego_lane) + cfg.ego_lateral_offset;
  s.ego.heading_deg = cfg.ego_heading_deg;
  s.ego.speed_kmh = cfg.ego_speed_kmh;
  s.traffic = spawn_traffic(cfg.traffic, cfg.track, s.ego);
  return s;
}

void step_world(SimState& state, const Track& track, double ego_speed_kmh,
                double ego_yaw_rate_degps, const TrafficParams& params) {
  step_traffic(state, track, params);
  state.ego = step_unicycle(state.ego, ego_speed_kmh, ego_yaw_rate_degps, state.dt);
  state.time += state.dt;
}

double min_gap_to_traffic(const SimState& state, double none) {
  double best = none;
  for (const TrafficCar& car : state.traffic) best = std::min(best, footprint_gap(state.ego, car.state));
  return best;
}

}  // namespace mdnu::sim
