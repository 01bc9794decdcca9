#include <cmath>
#include <map>

#include "doctest.h"
#include "stp/harness.hpp"
#include "stp/mobility.hpp"
#include "stp/netmodel.hpp"

using namespace stp;
using namespace stp::mobility;
using netmodel::SegmentId;

namespace {

World make_world(const netmodel::NetworkGraph& net, double horizon, uint64_t seed) {
  WorldParams wp;
  wp.horizon = horizon;
  return World(net, wp, seed);
}

}  // namespace

TEST_CASE("event kinds follow the one-hot order") {
  CHECK(event_index(EventKind::accident) == 0);
  CHECK(event_index(EventKind::workzone) == 1);
  CHECK(event_index(EventKind::weather) == 2);
  CHECK(event_index(EventKind::recurrent) == 3);
  CHECK(event_index(EventKind::special_event) == 4);
  CHECK(event_index(EventKind::none) == 5);
  CHECK(event_from_name("workzone") == EventKind::workzone);
}

TEST_CASE("poisson demand matches the configured rate") {
  auto net = netmodel::build_grid_network(4, 4, 150.0, 1, 1);
  double rate = 0.3, horizon = 3600.0;
  auto d = generate_base_demand(net, rate, horizon, 42);
  double n = static_cast<double>(d.trips.size());
  double expect = rate * horizon;
  CHECK(std::abs(n - expect) < 4.0 * std::sqrt(expect));  // four-sigma band
  for (size_t i = 1; i < d.trips.size(); ++i)
    CHECK(d.trips[i].depart >= d.trips[i - 1].depart);
  // deterministic per seed
  auto d2 = generate_base_demand(net, rate, horizon, 42);
  REQUIRE(d.trips.size() == d2.trips.size());
  CHECK(d.trips.back().depart == d2.trips.back().depart);
}

TEST_CASE("vehicles obey limits, gaps and conservation") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 3);
  World world = make_world(net, 1200.0, 11);
  world.add_demand(generate_base_demand(net, 0.3, 1200.0, 5));
  long completed_routes = 0;
  while (world.time() < 1200.0) {
    world.step();
    for (const auto& v : world.vehicles()) {
      if (v.obstacle) continue;
      CHECK(v.speed <= net.seg(v.seg).speed_limit + 1e-9);
      CHECK(v.pos >= -1e-9);
      CHECK(v.pos <= net.seg(v.seg).length + 1e-9);
    }
    // front-to-front spacing within each lane
    std::map<std::pair<SegmentId, int>, std::vector<double>> lanes;
    for (const auto& v : world.vehicles()) lanes[{v.seg, v.lane}].push_back(v.pos);
    for (auto& [key, positions] : lanes) {
      std::sort(positions.begin(), positions.end());
      for (size_t i = 1; i < positions.size(); ++i)
        CHECK(positions[i] - positions[i - 1] >= world.params().min_gap - 1e-6);
    }
    for (const auto& c : world.last_changes())
      if (c.to_seg < 0) ++completed_routes;
  }
  CHECK(world.injected_count() ==
        world.finished_count() + static_cast<long>(world.vehicles().size()));
  CHECK(completed_routes == world.finished_count());
  CHECK(world.finished_count() > 0);
}

TEST_CASE("a lone vehicle's travel time matches hand-stepped kinematics") {
  auto net = netmodel::build_grid_network(3, 3, 150.0, 1, 1);
  // pick a segment and a departure so every signal on the way is green
  SegmentId seg = 0;
  World world = make_world(net, 600.0, 2);
  TripDemand demand;
  demand.trips.push_back({10.0, seg, seg});  // single-segment route
  world.add_demand(demand);

  double exit_time = -1.0, entry_time = -1.0;
  while (world.time() < 600.0 && exit_time < 0.0) {
    world.step();
    for (const auto& c : world.last_changes())
      if (c.from_seg == seg) {
        entry_time = c.entry_time;
        exit_time = c.exit_time;
      }
  }
  REQUIRE(exit_time > 0.0);

  // independent discrete integration of the same rule, ignoring signals but
  // holding at the stop line when red
  const auto& s = net.seg(seg);
  double pos = 0.0, speed = 0.0, t = entry_time;
  while (true) {
    double want = std::min(speed + 2.5, s.speed_limit);
    double new_pos = pos + want;
    if (new_pos >= s.length && net.green(seg, t)) {
      t += 1.0;
      break;
    }
    if (new_pos > s.length - 1.0 && !net.green(seg, t)) {
      new_pos = std::max(pos, s.length - 1.0);
      want = new_pos - pos;
    }
    speed = want;
    pos = new_pos;
    t += 1.0;
    REQUIRE(t < entry_time + 400.0);
  }
  CHECK(exit_time == doctest::Approx(t));
}

TEST_CASE("accidents place obstacles and clear them afterwards") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 3);
  SegmentId target = harness::central_segment(net);
  World world = make_world(net, 400.0, 1);
  ScenarioEvent e;
  e.kind = EventKind::accident;
  e.segment = target;
  e.blocked_lanes = {0};
  e.start = 50.0;
  e.duration = 100.0;
  world.inject_event(e);

  world.run_to(60.0);
  int obstacles = 0;
  for (const auto& v : world.vehicles())
    if (v.obstacle) ++obstacles;
  CHECK(obstacles == 2);  // one blocked lane -> two wrecked vehicles
  CHECK(world.active_event(target, 60.0) == EventKind::accident);

  world.run_to(200.0);
  obstacles = 0;
  for (const auto& v : world.vehicles())
    if (v.obstacle) ++obstacles;
  CHECK(obstacles == 0);
  CHECK(world.active_event(target, world.time()) == EventKind::none);
}

TEST_CASE("event validation rejects malformed scenarios") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 3);
  SegmentId target = harness::central_segment(net);
  World world = make_world(net, 7200.0, 1);

  ScenarioEvent e;
  e.kind = EventKind::accident;
  e.segment = target;
  e.blocked_lanes = {0};
  e.start = 100.0;
  e.duration = 3600.0;  // accidents must clear within the hour
  CHECK_THROWS(world.inject_event(e));

  e.duration = 600.0;
  e.blocked_lanes = {0, 1};  // both lanes of a two-lane road
  CHECK_THROWS(world.inject_event(e));

  e.kind = EventKind::workzone;
  e.blocked_lanes = {0};
  e.duration = 1800.0;  // workzones last at least an hour
  CHECK_THROWS(world.inject_event(e));

  ScenarioEvent w;
  w.kind = EventKind::weather;
  w.start = 0.0;
  w.duration = 100.0;
  w.weather_speed_factor = 1.5;
  CHECK_THROWS(world.inject_event(w));
}

TEST_CASE("weather slows every vehicle") {
  auto net = netmodel::build_grid_network(4, 4, 150.0, 1, 2);
  World world = make_world(net, 900.0, 4);
  world.add_demand(generate_base_demand(net, 0.2, 900.0, 6));
  ScenarioEvent e;
  e.kind = EventKind::weather;
  e.start = 0.0;
  e.duration = 900.0;
  e.weather_speed_factor = 0.5;
  world.inject_event(e);
  while (world.time() < 900.0) {
    world.step();
    for (const auto& v : world.vehicles())
      if (!v.obstacle)
        CHECK(v.speed <= 0.5 * net.seg(v.seg).speed_limit + 1e-9);
  }
  CHECK(world.weather_factor(10.0) == doctest::Approx(0.5));
}

TEST_CASE("ground truth log attributes completions to five minute intervals") {
  GroundTruthLog log;
  log.ensure_segments(2, 24);
  log.record_completion({1, 0, 10.0, 299.0}, 7200.0);
  log.record_completion({2, 0, 20.0, 300.0}, 7200.0);
  CHECK(log.flow(0, 0) == 1);
  CHECK(log.flow(0, 1) == 1);
  CHECK(log.mean_tt(0, 0) == doctest::Approx(289.0));
  CHECK(log.mean_tt(0, 1) == doctest::Approx(280.0));
  CHECK(log.flow(1, 0) == 0);
  CHECK(log.mean_tt(1, 3) == 0.0);
}
