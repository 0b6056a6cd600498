#include <doctest.h>

#include <cmath>

#include "mdnu/driving.hpp"
#include "mdnu/errors.hpp"
#include "mdnu/mlp.hpp"

using namespace mdnu;
using namespace mdnu::sim;

namespace {

TrafficCar car_at(double x, double y, double speed = 60.0) {
  TrafficCar c;
  c.state.x = x;
  c.state.y = y;
  c.state.speed_kmh = speed;
  return c;
}

SimState lone_ego(const Track& track, int lane, double x = 100.0) {
  SimState s;
  s.ego.x = x;
  s.ego.y = track.lane_center(lane);
  s.ego.speed_kmh = kCruiseSpeedKmh;
  return s;
}

}  // namespace

TEST_CASE("feedback heading controller") {
  CHECK(feedback_heading_controller(0.0, 3.0) == 18.0);
  CHECK(feedback_heading_controller(0.0, -3.0) == -18.0);
  CHECK(feedback_heading_controller(10.0, 10.0) == 0.0);
  CHECK(feedback_heading_controller(0.0, 30.0) == kDefaultMaxYawRate);
  CHECK(feedback_heading_controller(0.0, -30.0) == -kDefaultMaxYawRate);
  // Error is taken the short way round.
  CHECK(feedback_heading_controller(179.0, -179.0) == 8.0);
}

TEST_CASE("wrap to (-180, 180]") {
  CHECK(wrap_degrees(180.0) == 180.0);
  CHECK(wrap_degrees(-180.0) == 180.0);
  CHECK(wrap_degrees(190.0) == doctest::Approx(-170.0));
  CHECK(wrap_degrees(-370.0) == doctest::Approx(-10.0));
  CHECK(wrap_degrees(45.0) == 45.0);
}

TEST_CASE("safe controller speed rules") {
  FeatureVector f;
  f[kFrontCenter] = 50.0;
  f[kBackCenter] = 50.0;
  NeighborSpeeds v{20.0, 24.0};

  SUBCASE("close car ahead") {
    f[kFrontCenter] = 2.0;
    CHECK(safe_controller(f, v, 0.0, 0.0).speed_mps == 15.0);
  }
  SUBCASE("close car behind") {
    f[kBackCenter] = 2.0;
    CHECK(safe_controller(f, v, 0.0, 0.0).speed_mps == 27.0);
  }
  SUBCASE("both far") { CHECK(safe_controller(f, v, 0.0, 0.0).speed_mps == 22.0); }
  SUBCASE("empty road cruises") {
    const double cruise = kCruiseSpeedKmh / kKmhPerMps;
    CHECK(safe_controller(f, {cruise, cruise}, 0.0, 0.0).speed_mps == doctest::Approx(cruise));
  }
  SUBCASE("never reverses") {
    f[kFrontCenter] = 1.0;
    CHECK(safe_controller(f, {2.0, 2.0}, 0.0, 0.0).speed_mps == 0.0);
  }
}

TEST_CASE("safe controller yaw rate") {
  const FeatureVector f;
  const NeighborSpeeds v{20.0, 20.0};
  CHECK(safe_controller(f, v, 0.0, 0.0).yaw_rate_degps == 0.0);
  CHECK(safe_controller(f, v, 2.0, 0.0).yaw_rate_degps == -10.0);
  CHECK(safe_controller(f, v, 0.0, 0.1).yaw_rate_degps == doctest::Approx(5.0));
  CHECK(safe_controller(f, v, 0.0, 2.0).yaw_rate_degps == kDefaultMaxYawRate);
}

TEST_CASE("safe controller settles on a lane centre from any offset within half a lane") {
  const Track track;
  for (int i = -20; i <= 20; ++i) {
    const double offset = 0.5 * track.lane_width * i / 20.0;
    SimState s = lone_ego(track, 2, 0.0);
    s.ego.y += offset;
    for (int tick = 0; tick < 50; ++tick) {
      const Perception p = perceive(s, track);
      const SafeCommand cmd = safe_controller(p.features, p.center, wrap_degrees(s.ego.heading_deg),
                                              p.features.lane_deviation());
      step_world(s, track, cmd.speed_mps * kKmhPerMps, cmd.yaw_rate_degps);
    }
    // Exactly half a lane off is a tie between two lanes; either centre will do.
    CHECK(std::abs(extract_features(s, track).lane_deviation()) < 0.05);
    if (std::abs(i) < 20) CHECK(track.lane_of(s.ego.y) == 2);
  }
}

TEST_CASE("unicycle step") {
  CarState c;
  const CarState straight = step_unicycle(c, 36.0, 0.0, 0.1);
  CHECK(straight.x == doctest::Approx(1.0));
  CHECK(straight.y == 0.0);
  CHECK(straight.speed_kmh == 36.0);

  const CarState turned = step_unicycle(c, 36.0, 900.0, 0.1);  // 90 degrees in one tick
  CHECK(turned.heading_deg == doctest::Approx(90.0));
  CHECK(turned.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(turned.y == doctest::Approx(1.0));
}

TEST_CASE("collision examples") {
  const Track track;
  SimState s = lone_ego(track, 2);
  CHECK_FALSE(detect_collision(s, track));

  s.traffic = {car_at(s.ego.x + 3.0, s.ego.y)};
  CHECK(detect_collision(s, track));

  s.traffic = {car_at(s.ego.x + 4.6, s.ego.y)};
  CHECK_FALSE(detect_collision(s, track));

  s.traffic = {car_at(s.ego.x, s.ego.y + track.lane_width)};
  CHECK_FALSE(detect_collision(s, track));

  s.traffic.clear();
  s.ego.y = -0.1;
  CHECK(detect_collision(s, track));
  s.ego.y = track.width() + 0.1;
  CHECK(detect_collision(s, track));
}

TEST_CASE("overlap test is symmetric and sees rotated boxes") {
  RandomState rng(8);
  for (int i = 0; i < 2000; ++i) {
    CarState a, b;
    a.x = 10.0 * uniform01(rng);
    a.y = 4.0 * uniform01(rng);
    a.heading_deg = 90.0 * uniform01(rng) - 45.0;
    b.x = 10.0 * uniform01(rng);
    b.y = 4.0 * uniform01(rng);
    b.heading_deg = 90.0 * uniform01(rng) - 45.0;
    CHECK(boxes_overlap(a, b) == boxes_overlap(b, a));
  }
  CarState a, b;
  b.x = 4.0;
  b.y = 2.0;
  CHECK_FALSE(boxes_overlap(a, b));
  a.heading_deg = 30.0;  // the rotated front corner now reaches into b
  CHECK(boxes_overlap(a, b));
}

TEST_CASE("footprint gap") {
  CarState a, b;
  b.x = 10.0;
  CHECK(footprint_gap(a, b) == doctest::Approx(5.5));
  b.x = 2.0;
  CHECK(footprint_gap(a, b) == 0.0);
  b.x = 0.0;
  b.y = 3.8;
  CHECK(footprint_gap(a, b) == doctest::Approx(2.0));
}

TEST_CASE("features on an empty road") {
  const Track track;
  const FeatureVector f = extract_features(lone_ego(track, 2), track);
  for (std::size_t i = 0; i < 6; ++i) CHECK(f[i] == kDefaultMaxDistance);
  CHECK(std::abs(f.lane_deviation()) < 1e-12);
}

TEST_CASE("edge lanes report the missing side as blocked") {
  const Track track;
  const FeatureVector left = extract_features(lone_ego(track, 0), track);
  CHECK(left[kFrontLeft] == 0.0);
  CHECK(left[kBackLeft] == 0.0);
  CHECK(left[kFrontRight] == kDefaultMaxDistance);
  const FeatureVector right = extract_features(lone_ego(track, track.num_lanes - 1), track);
  CHECK(right[kFrontRight] == 0.0);
  CHECK(right[kBackRight] == 0.0);
}

TEST_CASE("gaps are bumper to bumper and clipped") {
  const Track track;
  SimState s = lone_ego(track, 2);
  s.traffic = {car_at(s.ego.x + 20.0, s.ego.y), car_at(s.ego.x - 10.0, track.lane_center(1)),
               car_at(s.ego.x + 80.0, track.lane_center(3))};
  const Perception p = perceive(s, track);
  CHECK(p.features[kFrontCenter] == doctest::Approx(15.5));
  CHECK(p.features[kBackLeft] == doctest::Approx(5.5));
  CHECK(p.features[kFrontRight] == kDefaultMaxDistance);
  CHECK(p.center.front_mps == doctest::Approx(60.0 / kKmhPerMps));
  CHECK(p.ego_lane == 2);
}

TEST_CASE("a car alongside blocks both slots of its lane") {
  const Track track;
  SimState s = lone_ego(track, 2);
  s.traffic = {car_at(s.ego.x + 1.0, track.lane_center(3))};
  const FeatureVector f = extract_features(s, track);
  CHECK(f[kFrontRight] == 0.0);
  CHECK(f[kBackRight] == 0.0);
}

TEST_CASE("lane deviation sign") {
  const Track track;
  SimState s = lone_ego(track, 2);
  s.ego.y -= 0.4;  // left of centre
  CHECK(extract_features(s, track).lane_deviation() == doctest::Approx(0.4));
}

TEST_CASE("leaving the track is a feature error") {
  const Track track;
  SimState s = lone_ego(track, 0);
  s.ego.y = -1.0;
  CHECK_THROWS_AS(perceive(s, track), FeatureError);
}

TEST_CASE("traffic spawning") {
  const Track track;
  CarState ego;
  ego.y = track.lane_center(2);
  TrafficSpec spec;
  spec.seed = 17;

  SUBCASE("density zero is an empty road") {
    spec.density = 0.0;
    CHECK(spawn_traffic(spec, track, ego).empty());
  }
  SUBCASE("same seed, same traffic") { CHECK(spawn_traffic(spec, track, ego) == spawn_traffic(spec, track, ego)); }
  SUBCASE("count scales with density") {
    const std::size_t full = spawn_traffic(spec, track, ego).size();
    CHECK(full == spec.reference_count(track));
    spec.density = 0.8;
    const std::size_t reduced = spawn_traffic(spec, track, ego).size();
    CHECK(static_cast<double>(reduced) / static_cast<double>(full) == doctest::Approx(0.8).epsilon(0.02));
  }
  SUBCASE("cars sit in lanes, keep the speed band and avoid the ego") {
    for (const TrafficCar& c : spawn_traffic(spec, track, ego)) {
      CHECK(c.state.y == track.lane_center(c.script.lane));
      CHECK((c.script.desired_speed_kmh >= 50.0 && c.script.desired_speed_kmh <= 75.0));
      CHECK_FALSE(boxes_overlap(c.state, ego));
    }
  }
  SUBCASE("impossible density fails loudly") {
    spec.density = 50.0;
    CHECK_THROWS_AS(spawn_traffic(spec, track, ego), SpawnError);
  }
}

TEST_CASE("traffic never drives into its leader") {
  const Track track;
  SceneConfig cfg;
  cfg.traffic.seed = 4;
  SimState s = make_scene(cfg);
  for (int tick = 0; tick < 300; ++tick) {
    step_traffic(s, track);
    for (std::size_t i = 0; i < s.traffic.size(); ++i) {
      for (std::size_t j = i + 1; j < s.traffic.size(); ++j) {
        CHECK_FALSE(boxes_overlap(s.traffic[i].state, s.traffic[j].state));
      }
    }
  }
}

TEST_CASE("simulation is deterministic") {
  SceneConfig cfg;
  cfg.traffic.seed = 12;
  SimState a = make_scene(cfg), b = make_scene(cfg);
  for (int tick = 0; tick < 100; ++tick) {
    step_world(a, cfg.track, 80.0, 1.0);
    step_world(b, cfg.track, 80.0, 1.0);
  }
  CHECK(a.ego == b.ego);
  CHECK(a.traffic == b.traffic);
  CHECK(a.time == doctest::Approx(10.0));
}

TEST_CASE("invalid scenes are rejected") {
  SceneConfig cfg;
  SUBCASE("ego lane off the track") { cfg.ego_lane = 6; }
  SUBCASE("no lanes") { cfg.track.num_lanes = 0; }
  SUBCASE("zero time step") { cfg.dt = 0.0; }
  CHECK_THROWS_AS(make_scene(cfg), ConfigError);
}
