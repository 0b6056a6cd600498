#pragma once

// Straight multi-lane highway with scripted traffic and a unicycle ego car.
//
// Frame: x is longitudinal (metres, increasing toward the goal), y is lateral
// (metres, 0 at the left track edge, increasing to the right). Lane 0 is the
// leftmost lane. Headings are in degrees; a positive heading points toward +y
// (right), so a positive yaw rate turns right.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mdnu::sim {

inline constexpr double kKmhPerMps = 3.6;
inline constexpr double kDefaultMaxDistance = 50.0;
inline constexpr double kDefaultMaxYawRate = 45.0;  // deg/s
inline constexpr double kCruiseSpeedKmh = 90.0;

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpawnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Track {
  int num_lanes = 6;
  double lane_width = 3.7;
  double start_x = 0.0;
  double goal_x = 400.0;

  void validate() const;
  double width() const { return num_lanes * lane_width; }
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  /// Nearest lane index, clamped to the track.
  int lane_of(double y) const;
  bool has_lane(int lane) const { return lane >= 0 && lane < num_lanes; }
  bool on_track(double y) const { return y >= 0.0 && y <= width(); }
};

struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading_deg = 0.0;
  double speed_kmh = 0.0;
  double length = 4.5;
  double width = 1.8;

  double speed_mps() const { return speed_kmh / kKmhPerMps; }
  bool operator==(const CarState&) const = default;
};

/// Traffic cars hold their lane at a desired speed and slow down behind
/// whatever is ahead of them.
struct LaneKeepingScript {
  int lane = 0;
  double desired_speed_kmh = 60.0;
  bool operator==(const LaneKeepingScript&) const = default;
};

struct TrafficCar {
  CarState state;
  LaneKeepingScript script;
  bool operator==(const TrafficCar&) const = default;
};

struct SimState {
  CarState ego;
  std::vector<TrafficCar> traffic;
  double time = 0.0;
  double dt = 0.1;  // 10 Hz control
};

enum FeatureIndex : std::size_t {
  kFrontLeft = 0,
  kFrontCenter,
  kFrontRight,
  kBackLeft,
  kBackCenter,
  kBackRight,
  kLaneDeviation,
  kNumFeatures
};

/// Bumper-to-bumper gaps to the closest car ahead (front) and behind (back) in
/// the left, current and right lane, clipped to [0, d_max], plus the signed
/// offset of the lane centre from the ego (positive when the ego sits left of
/// centre). A car overlapping the ego lengthwise counts as gap 0 both ahead
/// and behind. A lane that does not exist reads as gap 0 on both sides.
struct FeatureVector {
  std::array<double, kNumFeatures> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  double front_center() const { return values[kFrontCenter]; }
  double back_center() const { return values[kBackCenter]; }
  double lane_deviation() const { return values[kLaneDeviation]; }
  bool operator==(const FeatureVector&) const = default;
};

/// Speeds (m/s) of the cars that define d^F_C and d^B_C.
struct NeighborSpeeds {
  double front_mps = 0.0;
  double rear_mps = 0.0;
};

struct Perception {
  FeatureVector features;
  NeighborSpeeds center;  // cruise speed substituted when no car is within d_max
  int ego_lane = 0;
};

/// Throws FeatureError when the ego centre has left the track.
Perception perceive(const SimState& state, const Track& track,
                    double d_max = kDefaultMaxDistance,
                    double default_speed_mps = kCruiseSpeedKmh / kKmhPerMps);
FeatureVector extract_features(const SimState& state, const Track& track,
                               double d_max = kDefaultMaxDistance);

/// theta' = theta + w dt; x' = x + v dt cos(theta'); y' = y + v dt sin(theta').
/// v in km/h, w in deg/s. The returned car carries speed v.
CarState step_unicycle(const CarState& car, double speed_kmh, double yaw_rate_degps, double dt);

/// Wrap to (-180, 180].
double wrap_degrees(double angle);

/// w = 2 sign(d) d^2 clamped to [-w_max, w_max], d = wrap(desired - current).
double feedback_heading_controller(double current_deg, double desired_deg,
                                   double w_max = kDefaultMaxYawRate);

struct SafeCommand {
  double speed_mps = 0.0;
  double yaw_rate_degps = 0.0;
};

struct SafeControllerGains {
  double heading_gain = -5.0;  // per degree of heading deviation
  double offset_gain = 50.0;   // per metre of lane deviation
  double w_max = kDefaultMaxYawRate;
};

/// Lane-keeping fallback. Speed: v^F - 5 if d^F_C < 3, else v^R + 3 if
/// d^B_C < 3, else the mean of both. Yaw rate: -5 heading_dev + 50 d_dev.
SafeCommand safe_controller(const FeatureVector& features, const NeighborSpeeds& speeds,
                            double heading_dev_deg, double lane_dev_m,
                            const SafeControllerGains& gains = {});

/// Axis-aligned gap between two car footprints (0 when they touch or overlap).
double footprint_gap(const CarState& a, const CarState& b);

/// Separating-axis overlap test of the two oriented rectangles.
bool boxes_overlap(const CarState& a, const CarState& b);

/// Ego overlaps a traffic car or its centre left the track.
bool detect_collision(const SimState& state, const Track& track);

struct TrafficSpec {
  double density = 1.0;  // multiplier on the reference car count
  double speed_min_kmh = 50.0;
  double speed_max_kmh = 75.0;
  double cars_per_lane_per_100m = 2.0;  // at density 1.0
  double region_begin = -40.0;          // relative to track.start_x
  double region_end = 220.0;
  double min_gap = 8.0;        // bumper gap between spawned cars in a lane
  double ego_clearance = 15.0; // free space around the ego start in its lane
  std::uint64_t seed = 0;

  std::size_t reference_count(const Track& track) const;
};

/// Deterministic per seed. Throws SpawnError when the cars do not fit.
std::vector<TrafficCar> spawn_traffic(const TrafficSpec& spec, const Track& track,
                                      const CarState& ego);

struct TrafficParams {
  double min_gap = 2.0;     // metres kept to the leader
  double time_gap = 1.0;    // seconds to close a gap surplus
  double lateral_margin = 0.3;
};

/// One tick of the traffic scripts. Leaders are read from the state before
/// the tick, so update order does not matter.
void step_traffic(SimState& state, const Track& track, const TrafficParams& params = {});

struct SceneConfig {
  Track track;
  TrafficSpec traffic;
  int ego_lane = 2;
  double ego_x = 0.0;
  double ego_lateral_offset = 0.0;
  double ego_heading_deg = 0.0;
  double ego_speed_kmh = kCruiseSpeedKmh;
  double dt = 0.1;
};

SimState make_scene(const SceneConfig& cfg);

/// Traffic tick, then the ego command; advances time by dt.
void step_world(SimState& state, const Track& track, double ego_speed_kmh,
                double ego_yaw_rate_degps, const TrafficParams& params = {});

/// Smallest footprint gap between the ego and any traffic car (d_max when there is none).
double min_gap_to_traffic(const SimState& state, double none = kDefaultMaxDistance);

}  // namespace mdnu::sim
