#include <filesystem>

#include "doctest.h"
#include "stp/harness.hpp"
#include "stp/rng.hpp"
#include "stp/rsu.hpp"

using namespace stp;
using netmodel::SegmentId;
using mobility::EventKind;

namespace {

struct Fixture {
  netmodel::NetworkGraph net = netmodel::build_grid_network(5, 5, 150.0, 2, 1);
  netmodel::HistoricalProfile profile = netmodel::free_flow_profile(net, 7200.0);
  SegmentId target = harness::central_segment(net);
};

}  // namespace

TEST_CASE("feature vector layout and one-hot blocks") {
  rsu::FeatureRow row;
  row.t = 3600.0;
  row.avg_tt_index = 0.25;
  row.past_flows = {8.0, 6.0, 4.0, 2.0};
  for (int j = 0; j < 8; ++j) {
    row.adj_flows[j] = 10.0 + j;
    row.adj_events[j] = EventKind::none;
  }
  row.adj_events[3] = EventKind::accident;
  row.adj_events[5] = EventKind::workzone;

  auto x = rsu::to_feature_vector(row, 7200.0, 20.0);
  CHECK(x.size() == 62);
  CHECK(x[0] == doctest::Approx(0.5));
  CHECK(x[1] == doctest::Approx(0.25));
  CHECK(x[2] == doctest::Approx(0.4));
  CHECK(x[5] == doctest::Approx(0.1));
  CHECK(x[6] == doctest::Approx(0.5));

  for (int j = 0; j < 8; ++j) {
    double sum = 0.0;
    for (int c = 0; c < 6; ++c) sum += x[14 + j * 6 + c];
    CHECK(sum == doctest::Approx(1.0));
  }
  CHECK(x[14 + 3 * 6 + 0] == 1.0);  // accident -> <100000>
  CHECK(x[14 + 5 * 6 + 1] == 1.0);  // workzone -> <010000>
  CHECK(x[14 + 0 * 6 + 5] == 1.0);  // none -> <000001>

  // flows clamp into [0,1]
  row.adj_flows[0] = 500.0;
  auto y = rsu::to_feature_vector(row, 7200.0, 20.0);
  CHECK(y[6] == doctest::Approx(1.0));
}

TEST_CASE("interval flow counts beacon-silenced exits") {
  Fixture f;
  rsu::Rsu rsu(f.target, f.net, f.profile);
  // three vehicles beacon on the target; two fall silent inside the first
  // interval, one keeps beaconing across the boundary
  for (int k = 0; k < 3; ++k) {
    agent::BeaconMessage b;
    b.segment_id = f.target;
    b.sender_id = k;
    for (double t = 10.0 + k; t < (k == 2 ? 310.0 : 100.0 + 40.0 * k); t += 0.1) {
      b.time = t;
      rsu.ingest_beacon(b, t);
    }
  }
  rsu.close_interval(300.0);
  CHECK(rsu.last_interval_flow() == 2);
  rsu.close_interval(600.0);
  CHECK(rsu.last_interval_flow() == 1);
}

TEST_CASE("emission defers until history fills and traffic is heard") {
  Fixture f;
  rsu::Rsu rsu(f.target, f.net, f.profile);
  for (int k = 1; k <= 3; ++k) CHECK_FALSE(rsu.close_interval(300.0 * k).has_value());
  // fourth close fills the flow history but the table is still empty
  CHECK_FALSE(rsu.close_interval(1200.0).has_value());
  agent::BeaconMessage b;
  b.segment_id = f.target;
  b.sender_id = 42;
  b.time = 1450.0;
  b.tt_index = 0.4;
  rsu.ingest_beacon(b, 1450.0);
  auto row = rsu.close_interval(1500.0);
  REQUIRE(row.has_value());
  CHECK(row->avg_tt_index == doctest::Approx(0.4));
  CHECK(row->t == doctest::Approx(1500.0));
  // unreported adjacents fall back to the historical expectation
  for (int j = 0; j < 8; ++j) {
    CHECK(row->adj_events[j] == EventKind::none);
    CHECK(row->adj_flows[j] ==
          doctest::Approx(f.profile.flow(rsu.adjacent()[j], 1499.0)));
  }
}

TEST_CASE("replaying the input log reproduces features bit for bit") {
  Fixture f;
  rsu::Rsu rsu(f.target, f.net, f.profile);
  rsu.enable_logging();
  Rng rng(9);
  double now = 0.0;
  int next_interval = 1;
  while (now < 7200.0) {
    now += 0.1;
    if (rng.uniform() < 0.3) {
      agent::BeaconMessage b;
      b.segment_id = rng.uniform() < 0.8 ? f.target : 0;
      b.sender_id = rng.uniform_int(0, 30);
      b.time = now;
      b.position = rng.uniform() * 150.0;
      b.speed = rng.uniform() * 14.0;
      b.tt_index = rng.uniform() - 0.3;
      rsu.ingest_beacon(b, now);
    }
    if (rng.uniform() < 0.005) {
      agent::UploadMessage up;
      up.vehicle_id = rng.uniform_int(0, 30);
      up.time = now;
      up.records.push_back({rsu.adjacent()[rng.uniform_int(0, 7)], now - rng.uniform() * 60.0,
                            rng.uniform() * 20.0,
                            static_cast<EventKind>(rng.uniform_int(0, 5)), 40.0});
      rsu.ingest_upload(up, now);
    }
    if (now >= 300.0 * next_interval) {
      rsu.close_interval(300.0 * next_interval);
      ++next_interval;
    }
  }
  REQUIRE(!rsu.features().empty());

  auto path = std::filesystem::temp_directory_path() / "rsu_log.jsonl";
  rsu.input_log().save(path.string());
  auto loaded = rsu::RsuInputLog::load(path.string());
  auto replayed = rsu::Rsu::replay(loaded, f.target, f.net, f.profile);

  REQUIRE(replayed.size() == rsu.features().size());
  for (size_t i = 0; i < replayed.size(); ++i) {
    const auto& a = rsu.features()[i];
    const auto& b = replayed[i];
    CHECK(a.t == b.t);
    CHECK(a.avg_tt_index == b.avg_tt_index);
    for (int j = 0; j < 4; ++j) CHECK(a.past_flows[j] == b.past_flows[j]);
    for (int j = 0; j < 8; ++j) {
      CHECK(a.adj_flows[j] == b.adj_flows[j]);
      CHECK(a.adj_events[j] == b.adj_events[j]);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("feature csv round trips") {
  Fixture f;
  std::vector<rsu::FeatureRow> rows;
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    rsu::FeatureRow r;
    r.t = 1500.0 + 300.0 * i;
    r.avg_tt_index = rng.uniform() - 0.2;
    for (auto& v : r.past_flows) v = std::floor(rng.uniform() * 30.0);
    for (auto& v : r.adj_flows) v = std::floor(rng.uniform() * 30.0);
    for (auto& e : r.adj_events) e = static_cast<EventKind>(rng.uniform_int(0, 5));
    rows.push_back(r);
  }
  auto path = std::filesystem::temp_directory_path() / "features.csv";
  rsu::Rsu::export_features_csv(rows, path.string());
  auto loaded = rsu::Rsu::load_features_csv(path.string());
  REQUIRE(loaded.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(loaded[i].t == doctest::Approx(rows[i].t));
    CHECK(loaded[i].avg_tt_index == doctest::Approx(rows[i].avg_tt_index));
    for (int j = 0; j < 8; ++j) CHECK(loaded[i].adj_events[j] == rows[i].adj_events[j]);
  }
  std::filesystem::remove(path);
}
