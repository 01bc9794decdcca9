#include <cmath>

#include "doctest.h"
#include "stp/harness.hpp"
#include "stp/rng.hpp"

using namespace stp;
using namespace stp::harness;

TEST_CASE("rmse oracles and properties") {
  CHECK(rmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(rmse({0.2, 0.4}, {0.1, 0.7}) == doctest::Approx(std::sqrt(0.05)));
  CHECK(rmse({0.0}, {3.0}) == doctest::Approx(3.0));
  // symmetric and scale-covariant
  Rng rng(3);
  std::vector<double> a, b, a2, b2;
  for (int i = 0; i < 50; ++i) {
    a.push_back(rng.uniform());
    b.push_back(rng.uniform());
    a2.push_back(2.0 * a.back());
    b2.push_back(2.0 * b.back());
  }
  CHECK(rmse(a, b) == doctest::Approx(rmse(b, a)));
  CHECK(rmse(a2, b2) == doctest::Approx(2.0 * rmse(a, b)));
  CHECK_THROWS(rmse({1.0}, {1.0, 2.0}));
  CHECK_THROWS(rmse({}, {}));
}

TEST_CASE("class midpoints land on the normalized bin centers") {
  dataset::ClassBinning bins;
  bins.thresholds = {10.0, 20.0, 30.0};
  bins.lo = 0.0;
  bins.hi = 40.0;
  dataset::Normalizer norm;
  norm.flow_divisor = 40.0;
  CHECK(class_midpoint_normalized(0, bins, norm) == doctest::Approx(0.125));
  CHECK(class_midpoint_normalized(1, bins, norm) == doctest::Approx(0.375));
  CHECK(class_midpoint_normalized(2, bins, norm) == doctest::Approx(0.625));
  CHECK(class_midpoint_normalized(3, bins, norm) == doctest::Approx(0.875));
}

TEST_CASE("congestion factor calibration picks the smallest covering c") {
  // identical observed and historical times: c = 1.0 covers everything
  std::vector<std::pair<double, double>> same;
  for (int i = 0; i < 500; ++i) same.emplace_back(100.0, 100.0);
  CHECK(calibrate_congestion_factor(same) == doctest::Approx(1.0));

  // observed uniform in [TTh, 1.5 TTh]: first covering grid point is 1.5
  Rng rng(6);
  std::vector<std::pair<double, double>> spread;
  for (int i = 0; i < 5000; ++i)
    spread.emplace_back(100.0 * (1.0 + 0.5 * rng.uniform()), 100.0);
  CHECK(calibrate_congestion_factor(spread) == doctest::Approx(1.5));

  // a 0.5% outlier tail still fits under the 99% rule
  std::vector<std::pair<double, double>> tail = same;
  for (int i = 0; i < 2; ++i) tail.emplace_back(1000.0, 100.0);
  CHECK(calibrate_congestion_factor(tail) == doctest::Approx(1.0));
}

TEST_CASE("detection accuracy decays with density") {
  vanet::ChannelModel ch;
  ch.base_loss = 0.05;
  ch.collision_coefficient = 18.0;
  std::vector<double> densities;
  for (int i = 0; i < 12; ++i) densities.push_back(0.0001 + i * (0.036 - 0.0001) / 11.0);
  auto curve = density_accuracy_curve(ch, densities, 60, 17);
  REQUIRE(curve.size() == 12);
  CHECK(curve.front().accuracy > 0.85);
  for (size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i].accuracy <= curve[i - 1].accuracy + 0.03);
  CHECK(curve.back().accuracy < curve.front().accuracy);
}

TEST_CASE("scenario configs round trip through json") {
  ScenarioConfig cfg;
  cfg.name = "incident";
  cfg.demand_rate = 0.25;
  cfg.channel.base_loss = 0.1;
  cfg.seed = 99;
  mobility::ScenarioEvent e;
  e.kind = mobility::EventKind::accident;
  e.segment = 12;
  e.blocked_lanes = {0};
  e.start = 4400.0;
  e.duration = 2800.0;
  cfg.events.push_back(e);
  auto back = scenario_from_json(scenario_to_json(cfg));
  CHECK(back.name == cfg.name);
  CHECK(back.demand_rate == doctest::Approx(cfg.demand_rate));
  CHECK(back.channel.base_loss == doctest::Approx(0.1));
  CHECK(back.seed == 99);
  REQUIRE(back.events.size() == 1);
  CHECK(back.events[0].kind == mobility::EventKind::accident);
  CHECK(back.events[0].start == doctest::Approx(4400.0));
}

TEST_CASE("the scenario suite covers the five disruptions") {
  ScenarioConfig base;
  auto suite = make_suite(base);
  REQUIRE(suite.size() == 6);
  CHECK(suite[0].name == "base");
  bool incident = false, workzone = false, weather = false, special = false,
       recurrent = false;
  for (const auto& s : suite) {
    if (s.name == "incident") incident = !s.events.empty();
    if (s.name == "workzone") workzone = !s.events.empty();
    if (s.name == "weather") weather = !s.events.empty();
    if (s.name == "special_event") special = s.special_rate > 0.0;
    if (s.name == "recurrent") recurrent = !s.events.empty();
  }
  CHECK(incident);
  CHECK(workzone);
  CHECK(weather);
  CHECK(special);
  CHECK(recurrent);
}

TEST_CASE("the central segment is interior") {
  auto net = build_network(NetworkSpec{});
  auto target = central_segment(net);
  // interior segments have three continuations (plus the u-turn)
  CHECK(net.seg(target).downstream.size() == 4);
}
