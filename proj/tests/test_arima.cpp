#include <cmath>
#include <numeric>

#include "doctest.h"
#include "stp/arima.hpp"
#include "stp/rng.hpp"

using namespace stp;
using namespace stp::arima;

TEST_CASE("ar(1) forecasts follow the closed form") {
  ArimaModel m;
  m.p = 1;
  m.d = 0;
  m.q = 0;
  m.ar = {0.5};
  m.intercept = 0.0;
  m.diff_tail = {8.0};
  m.last_level = 8.0;
  m.ok = true;
  auto fc = forecast(m, 5);
  REQUIRE(fc.size() == 5);
  std::vector<double> expect{4.0, 2.0, 1.0, 0.5, 0.25};
  for (int i = 0; i < 5; ++i) CHECK(std::abs(fc[i] - expect[i]) < 1e-9);
  CHECK(forecast(m, 0).empty());

  // conditioning on a different history shifts the whole trajectory
  auto from = forecast_from(m, {16.0}, 3);
  CHECK(std::abs(from[0] - 8.0) < 1e-9);
  CHECK(std::abs(from[2] - 2.0) < 1e-9);
}

TEST_CASE("fitting recovers ar(2) coefficients") {
  Rng rng(31);
  std::vector<double> series{1.0, 0.5};
  for (int i = 2; i < 500; ++i)
    series.push_back(0.5 * series[i - 1] + 0.3 * series[i - 2] + 0.2 * rng.normal());
  auto m = fit_arima(series, 2, 0, 0);
  REQUIRE(m.ok);
  CHECK(std::abs(m.ar[0] - 0.5) < 0.1);
  CHECK(std::abs(m.ar[1] - 0.3) < 0.1);
}

TEST_CASE("white noise forecasts revert to the mean") {
  Rng rng(7);
  std::vector<double> series;
  for (int i = 0; i < 400; ++i) series.push_back(10.0 + 1.0 * rng.normal());
  double mean = std::accumulate(series.begin(), series.end(), 0.0) / series.size();
  auto m = fit_arima(series, 1, 0, 1);
  REQUIRE(m.ok);
  auto fc = forecast(m, 10);
  for (double v : fc) CHECK(std::abs(v - mean) < 1.0);
}

TEST_CASE("differencing handles a linear trend") {
  std::vector<double> series;
  for (int i = 0; i < 60; ++i) series.push_back(3.0 + 2.0 * i);
  auto m = fit_arima(series, 1, 1, 0);
  REQUIRE(m.ok);
  auto fc = forecast(m, 3);
  // the d=1 model extends the trend
  CHECK(std::abs(fc[0] - 123.0) < 0.5);
  CHECK(std::abs(fc[2] - 127.0) < 1.5);
}

TEST_CASE("short series are rejected, the best-fit fallback is not") {
  std::vector<double> tiny{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK_FALSE(fit_arima(tiny, 5, 0, 5).ok);

  Rng rng(12);
  std::vector<double> series{5.0};
  for (int i = 1; i < 40; ++i)
    series.push_back(2.0 + 0.6 * series[i - 1] + 0.5 * rng.normal());
  auto best = fit_best_arima(series, 4);
  REQUIRE(best.ok);
  CHECK(best.p >= 1);
  auto fc = forecast(best, 3);
  REQUIRE(fc.size() == 3);
  for (double v : fc) CHECK(std::isfinite(v));
}
