#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "stp/harness.hpp"
#include "stp/netmodel.hpp"

using namespace stp::netmodel;

TEST_CASE("grid has a directed segment each way on every lattice edge") {
  auto net = build_grid_network(4, 6, 150.0, 2, 3);
  int expected = 2 * ((4 - 1) * 6 + (6 - 1) * 4);  // vertical + horizontal, both ways
  CHECK(static_cast<int>(net.size()) == expected);
  for (const auto& s : net.segments) {
    CHECK(s.length == doctest::Approx(150.0));
    CHECK(s.lanes == 2);
    CHECK(net.reverse_of(s.id) >= 0);
    CHECK(net.reverse_of(net.reverse_of(s.id)) == s.id);
  }
}

TEST_CASE("topology is independent of the seed, signal offsets are not") {
  auto a = build_grid_network(5, 5, 120.0, 1, 1);
  auto b = build_grid_network(5, 5, 120.0, 1, 2);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.segments[i].from_node == b.segments[i].from_node);
    CHECK(a.segments[i].to_node == b.segments[i].to_node);
  }
  bool any_offset_differs = false;
  for (size_t i = 0; i < a.plans.size(); ++i)
    if (a.plans[i].offset_s != b.plans[i].offset_s) any_offset_differs = true;
  CHECK(any_offset_differs);
}

TEST_CASE("two-phase signals alternate and complement") {
  auto net = build_grid_network(4, 4, 100.0, 1, 9);
  for (const auto& s : net.segments) {
    if (!s.signalized) continue;
    SegmentId rev = net.reverse_of(s.id);
    (void)rev;
    int greens = 0;
    for (int t = 0; t < 90; ++t)
      if (net.green(s.id, t + 0.5)) ++greens;
    CHECK(greens == 45);  // half the cycle
  }
}

TEST_CASE("nearest segments ranks by hop and excludes the u-turn twin") {
  auto net = build_grid_network(5, 5, 150.0, 2, 7);
  SegmentId target = stp::harness::central_segment(net);
  auto near8 = nearest_segments(net, target, 8);
  CHECK(near8.size() == 8);
  std::set<SegmentId> uniq(near8.begin(), near8.end());
  CHECK(uniq.size() == 8);
  CHECK_FALSE(uniq.count(target));
  CHECK_FALSE(uniq.count(net.reverse_of(target)));

  // an interior segment has 3 continuations + 3 feeders at one hop
  const auto& seg = net.seg(target);
  std::set<SegmentId> one_hop;
  for (SegmentId d : seg.downstream)
    if (d != net.reverse_of(target)) one_hop.insert(d);
  for (SegmentId u : net.upstream_of(target)) one_hop.insert(u);
  CHECK(one_hop.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(one_hop.count(near8[i]));

  // first six are one hop, the rest two hops: ranked output is sorted by id
  // within a hop class
  CHECK(near8[0] < near8[1]);
  CHECK(near8[6] < near8[7]);

  auto near10 = nearest_segments(net, target, 10);
  CHECK(near10.size() == 10);
  for (int i = 0; i < 8; ++i) CHECK(near10[i] == near8[i]);
}

TEST_CASE("nearest segments throws when the network is too small") {
  // two nodes joined by one segment each way: nothing near the target
  NetworkGraph net;
  net.rows = 1;
  net.cols = 2;
  net.spacing = 100.0;
  RoadSegment f;
  f.id = 0;
  f.from_node = 0;
  f.to_node = 1;
  f.length = 100.0;
  f.lanes = 1;
  f.speed_limit = 13.9;
  f.downstream = {1};
  RoadSegment r = f;
  r.id = 1;
  r.from_node = 1;
  r.to_node = 0;
  r.downstream = {0};
  net.segments = {f, r};
  net.plans.resize(2);
  CHECK_THROWS(nearest_segments(net, 0, 8));
}

TEST_CASE("free flow profile applies the signal allowance") {
  auto net = build_grid_network(3, 3, 139.0, 1, 1);
  auto prof = free_flow_profile(net, 7200.0);
  CHECK(prof.bins() == 24);
  for (const auto& s : net.segments)
    CHECK(prof.travel_time(s.id, 0.0) ==
          doctest::Approx(s.length / s.speed_limit + 20.0));
}

TEST_CASE("network serialization round trips") {
  auto net = build_grid_network(4, 5, 150.0, 2, 42);
  auto prof = free_flow_profile(net, 7200.0);
  auto path = std::filesystem::temp_directory_path() / "net_roundtrip.json";
  save_network(net, prof, path.string());
  NetworkGraph loaded;
  HistoricalProfile lprof;
  load_network(path.string(), loaded, lprof);
  CHECK(loaded.serialize() == net.serialize());
  REQUIRE(lprof.bins() == prof.bins());
  CHECK(lprof.travel_time(3, 600.0) == doctest::Approx(prof.travel_time(3, 600.0)));
  std::filesystem::remove(path);
}
