#include <cmath>

#include "doctest.h"
#include "stp/rng.hpp"
#include "stp/vanet.hpp"

using namespace stp;
using namespace stp::vanet;

TEST_CASE("reception probability composes gate, loss and collisions") {
  ChannelModel ch;
  ch.range_m = 300.0;
  SUBCASE("perfect channel in range") {
    CHECK(reception_probability(150.0, 0.0, ch) == doctest::Approx(1.0));
  }
  SUBCASE("out of range") {
    CHECK(reception_probability(300.1, 0.0, ch) == 0.0);
  }
  SUBCASE("collision term") {
    ch.collision_coefficient = 20.0;
    CHECK(reception_probability(10.0, 0.036, ch) == doctest::Approx(1.0 - 0.72));
  }
  SUBCASE("density saturation clamps to zero") {
    ch.collision_coefficient = 100.0;
    CHECK(reception_probability(10.0, 0.5, ch) == 0.0);
  }
  SUBCASE("non-increasing in density") {
    ch.base_loss = 0.1;
    ch.collision_coefficient = 15.0;
    double prev = 2.0;
    for (double d = 0.0; d <= 0.04; d += 0.004) {
      double p = reception_probability(100.0, d, ch);
      CHECK(p <= prev + 1e-12);
      prev = p;
    }
  }
}

TEST_CASE("monte carlo delivery rate matches the configured probability") {
  ChannelModel ch;
  ch.base_loss = 0.1;
  Rng rng(123);
  Endpoint sender{0, 0.0, 0.0, 0, 0.0};
  std::vector<Endpoint> receivers{{1, 100.0, 0.0, 0, 0.0}};
  int delivered = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i)
    delivered += static_cast<int>(broadcast(sender, receivers, ch, rng).size());
  double rate = static_cast<double>(delivered) / trials;
  CHECK(std::abs(rate - 0.9) < 0.01);
}

TEST_CASE("broadcast respects range per receiver") {
  ChannelModel ch;
  Rng rng(1);
  Endpoint sender{0, 0.0, 0.0, 0, 0.0};
  std::vector<Endpoint> receivers{
      {1, 100.0, 0.0, 0, 0.0}, {2, 299.0, 0.0, 0, 0.0}, {3, 301.0, 0.0, 0, 0.0}};
  auto got = broadcast(sender, receivers, ch, rng);
  CHECK(got == std::vector<int>{1, 2});
}

TEST_CASE("scf buffer deduplicates, expires and evicts oldest") {
  ScfBuffer buf;
  agent::UploadMessage m;
  m.vehicle_id = 7;
  m.time = 100.0;
  buf.add(m, 100.0);
  buf.add(m, 100.0);  // same (vehicle, time) snapshot
  CHECK(buf.size() == 1);

  for (int i = 0; i < 150; ++i) {
    agent::UploadMessage x;
    x.vehicle_id = 8;
    x.time = 101.0 + i;
    buf.add(x, 101.0 + i);
  }
  CHECK(buf.size() == kScfCapacity);
  // the oldest entries were evicted
  for (const auto& item : buf.items()) CHECK(item.time > 100.0 + 150 - kScfCapacity);

  buf.expire(101.0 + 150 + kScfExpiry + 1.0);
  CHECK(buf.empty());
}

TEST_CASE("spatial index finds every endpoint within the radius") {
  Rng rng(77);
  std::vector<Endpoint> pts;
  for (int i = 0; i < 400; ++i)
    pts.push_back({i, rng.uniform() * 1000.0, rng.uniform() * 1000.0, 0, 0.0});
  SpatialIndex index(300.0);
  index.rebuild(pts);
  for (int q = 0; q < 50; ++q) {
    double x = rng.uniform() * 1000.0, y = rng.uniform() * 1000.0, r = 250.0;
    auto got = index.within(x, y, r);
    std::vector<int> expect;
    for (int i = 0; i < 400; ++i) {
      double dx = pts[i].x - x, dy = pts[i].y - y;
      if (std::sqrt(dx * dx + dy * dy) <= r) expect.push_back(i);
    }
    std::sort(got.begin(), got.end());
    CHECK(got == expect);
  }
}
