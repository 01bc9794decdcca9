#include <vector>

#include "doctest.h"
#include "stp/agent.hpp"
#include "stp/harness.hpp"
#include "stp/netmodel.hpp"
#include "stp/rng.hpp"
#include "stp/rsu.hpp"

using namespace stp;
using netmodel::SegmentId;

TEST_CASE("neighbor table drops, upserts and prunes") {
  agent::NeighborTable table;
  agent::BeaconMessage b;
  b.segment_id = 3;
  b.sender_id = 1;
  b.time = 10.0;
  b.tt_index = 0.5;
  table.on_beacon(b, 10.0, 4);  // other segment
  CHECK(table.empty());
  table.on_beacon(b, 10.0, 3);
  CHECK(table.size() == 1);
  b.time = 20.0;
  b.tt_index = 0.7;
  table.on_beacon(b, 20.0, 3);
  CHECK(table.size() == 1);
  CHECK(table.entries().at(1).tt_index == doctest::Approx(0.7));
  table.prune(921.0, 3);  // entry aged 901 s
  CHECK(table.empty());
}

TEST_CASE("neighbor table invariants over random sequences") {
  Rng rng(99);
  agent::NeighborTable table;
  SegmentId my_seg = 0;
  double now = 0.0;
  for (int i = 0; i < 10000; ++i) {
    now += rng.uniform() * 30.0;
    if (rng.uniform() < 0.02) my_seg = rng.uniform_int(0, 5);
    agent::BeaconMessage b;
    b.segment_id = rng.uniform_int(0, 5);
    b.sender_id = rng.uniform_int(0, 40);
    b.time = now - rng.uniform() * 100.0;
    table.on_beacon(b, now, my_seg);
    if (rng.uniform() < 0.2) table.prune(now, my_seg);
    for (const auto& [id, e] : table.entries()) {
      CHECK(e.segment_id == my_seg);
      CHECK(now - e.time <= agent::kStaleSeconds);
    }
  }
}

TEST_CASE("trajectory log caps at ten entries") {
  Rng rng(5);
  agent::TrajectoryLog log;
  double t = 0.0;
  for (int i = 0; i < 10000; ++i) {
    t += 1.0 + rng.uniform() * 50.0;
    log.push({rng.uniform_int(0, 30), t, rng.uniform() * 400.0,
              mobility::EventKind::none, 1.0});
    CHECK(log.size() <= 10);
    // strictly decreasing times, newest first
    for (size_t j = 0; j + 1 < log.entries().size(); ++j)
      CHECK(log.entries()[j].time > log.entries()[j + 1].time);
  }
  auto fresh = log.reportable(t + agent::kStaleSeconds + 1.0);
  CHECK(fresh.empty());
}

TEST_CASE("rsu table and flow history invariants over random sequences") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 1);
  auto profile = netmodel::free_flow_profile(net, 7200.0);
  SegmentId target = harness::central_segment(net);
  rsu::Rsu rsu(target, net, profile);
  CHECK(rsu.adjacent().size() == 8);

  Rng rng(11);
  double now = 0.0;
  for (int i = 0; i < 10000; ++i) {
    now += rng.uniform() * 5.0;
    agent::BeaconMessage b;
    b.segment_id = rng.uniform() < 0.7 ? target : rng.uniform_int(0, 39);
    b.sender_id = rng.uniform_int(0, 60);
    b.time = now;
    rsu.ingest_beacon(b, now);
    if (rng.uniform() < 0.01) rsu.close_interval(now);
    CHECK(rsu.flow_history().size() <= 4);
  }
  for (int k = 0; k < 8; ++k) rsu.close_interval(now + 300.0 * (k + 1));
  CHECK(rsu.flow_history().size() <= 4);
}

TEST_CASE("rsu averages beacon indices and defers when empty") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 1);
  auto profile = netmodel::free_flow_profile(net, 7200.0);
  SegmentId target = harness::central_segment(net);
  rsu::Rsu rsu(target, net, profile);
  CHECK_FALSE(rsu.average_tt_index().has_value());
  agent::BeaconMessage b;
  b.segment_id = target;
  b.sender_id = 1;
  b.time = 1.0;
  b.tt_index = 0.1;
  rsu.ingest_beacon(b, 1.0);
  b.sender_id = 2;
  b.tt_index = 0.3;
  rsu.ingest_beacon(b, 1.0);
  CHECK(*rsu.average_tt_index() == doctest::Approx(0.2));
}

TEST_CASE("adjacent state keeps the freshest report") {
  auto net = netmodel::build_grid_network(5, 5, 150.0, 2, 1);
  auto profile = netmodel::free_flow_profile(net, 7200.0);
  SegmentId target = harness::central_segment(net);
  rsu::Rsu rsu(target, net, profile);
  SegmentId adj = rsu.adjacent()[0];

  agent::UploadMessage up;
  up.vehicle_id = 9;
  up.records.push_back({adj, 1400.0, 5.0, mobility::EventKind::none, 30.0});
  rsu.ingest_upload(up, 1410.0);
  up.records[0] = {adj, 1300.0, 9.0, mobility::EventKind::accident, 30.0};
  rsu.ingest_upload(up, 1410.0);  // older report must not win

  // stale record (16 min old) for another adjacent is dropped
  SegmentId adj2 = rsu.adjacent()[1];
  up.records[0] = {adj2, 440.0, 7.0, mobility::EventKind::workzone, 30.0};
  rsu.ingest_upload(up, 1400.0);

  // non-adjacent record is dropped
  up.records[0] = {target, 1400.0, 7.0, mobility::EventKind::workzone, 30.0};
  rsu.ingest_upload(up, 1410.0);

  // drive an emission at t=1500 to observe the slots
  for (int k = 1; k <= 5; ++k) {
    agent::BeaconMessage b;
    b.segment_id = target;
    b.sender_id = 100 + k;
    b.time = 300.0 * k - 200.0;
    rsu.ingest_beacon(b, 300.0 * k - 200.0);
    rsu.close_interval(300.0 * k);
  }
  REQUIRE(!rsu.features().empty());
  const auto& row = rsu.features().back();
  CHECK(row.adj_flows[0] == doctest::Approx(5.0));
  CHECK(row.adj_events[0] == mobility::EventKind::none);
  CHECK(row.adj_events[1] == mobility::EventKind::none);  // stale fell back
  CHECK(row.adj_flows[1] == doctest::Approx(profile.flow(adj2, 1499.0)));
}
