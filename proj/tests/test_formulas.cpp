#include <cmath>
#include <vector>

#include "doctest.h"
#include "stp/agent.hpp"
#include "stp/rng.hpp"

using stp::Rng;
using stp::agent::blend_indices;
using stp::agent::compute_tt_index;
using stp::agent::detect_excessive;

TEST_CASE("travel time index is zero without deviation") {
  std::vector<std::pair<double, double>> traj(10, {120.0, 120.0});
  CHECK(compute_tt_index(traj) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("single newest deviation evaluates the closed form") {
  std::vector<std::pair<double, double>> traj(10, {100.0, 100.0});
  traj.back() = {200.0, 100.0};  // newest pair carries weight 10
  double expected = (1.0 - std::exp(-1.0)) / 10.0;
  CHECK(std::abs(compute_tt_index(traj) - expected) < 1e-12);
}

TEST_CASE("index depends on ratios only") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, double>> traj;
    int n = rng.uniform_int(1, 10);
    for (int i = 0; i < n; ++i) {
      double tth = 10.0 + 200.0 * rng.uniform();
      double tt = tth * (0.2 + 3.0 * rng.uniform());
      traj.push_back({tt, tth});
    }
    double base = compute_tt_index(traj);
    double s = 0.1 + 10.0 * rng.uniform();
    for (auto& p : traj) {
      p.first *= s;
      p.second *= s;
    }
    CHECK(compute_tt_index(traj) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("index bounds hold over random inputs") {
  double lower = 10.0;
  for (int i = 1; i <= 10; ++i) lower -= std::exp(static_cast<double>(i) / 10.0);
  lower /= 10.0;  // about -0.8056
  Rng rng(7);
  for (int trial = 0; trial < 100000; ++trial) {
    std::vector<std::pair<double, double>> traj(10);
    for (auto& p : traj) {
      double tth = 1.0 + 500.0 * rng.uniform();
      double tt = tth * std::exp(6.0 * (rng.uniform() - 0.5));
      p = {tt, tth};
    }
    double v = compute_tt_index(traj);
    CHECK(v > lower);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("index approaches one for huge deviations") {
  std::vector<std::pair<double, double>> traj(10);
  double prev = -1.0;
  for (double factor : {10.0, 100.0, 1000.0}) {
    for (auto& p : traj) p = {factor * 100.0, 100.0};
    double v = compute_tt_index(traj);
    CHECK(v <= 1.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev > 0.99);
}

TEST_CASE("more recent segments contribute more") {
  for (int i = 0; i + 1 < 10; ++i) {
    std::vector<std::pair<double, double>> a(10, {100.0, 100.0});
    std::vector<std::pair<double, double>> b = a;
    a[i] = {150.0, 100.0};
    b[i + 1] = {150.0, 100.0};
    CHECK(compute_tt_index(b) > compute_tt_index(a));
  }
}

TEST_CASE("index rejects bad trajectories") {
  CHECK_THROWS(compute_tt_index({}));
  CHECK_THROWS(compute_tt_index({{100.0, 0.0}}));
  CHECK_THROWS(compute_tt_index(std::vector<std::pair<double, double>>(11, {1.0, 1.0})));
}

TEST_CASE("blend endpoints and hand case") {
  CHECK(blend_indices(0.2, 0.9, 0.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(blend_indices(0.2, 0.9, 1.0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(std::abs(blend_indices(0.2, 0.4, 0.65) - 0.33) < 1e-12);
  // result stays between the inputs
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double own = rng.uniform() * 2.0 - 1.0;
    double mean = rng.uniform() * 2.0 - 1.0;
    double a = rng.uniform();
    double v = blend_indices(own, mean, a);
    CHECK(v >= std::min(own, mean) - 1e-12);
    CHECK(v <= std::max(own, mean) + 1e-12);
  }
}

TEST_CASE("excessive travel time uses a strict threshold") {
  CHECK_FALSE(detect_excessive(180.0, 100.0));
  CHECK(detect_excessive(180.1, 100.0));
  CHECK(detect_excessive(150.0, 100.0, 1.4));
}
