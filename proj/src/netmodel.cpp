#include "stp/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "stp/rng.hpp"

namespace stp::netmodel {

const RoadSegment& NetworkGraph::seg(SegmentId id) const {
  if (id < 0 || id >= static_cast<int>(segments.size()))
    throw std::out_of_range("unknown segment id " + std::to_string(id));
  return segments[id];
}

std::array<double, 2> NetworkGraph::node_xy(int node) const {
  int r = node / cols;
  int c = node % cols;
  return {c * spacing, r * spacing};
}

std::array<double, 2> NetworkGraph::position_xy(SegmentId id, double pos) const {
  const RoadSegment& s = seg(id);
  auto a = node_xy(s.from_node);
  auto b = node_xy(s.to_node);
  double f = s.length > 0 ? std::clamp(pos / s.length, 0.0, 1.0) : 0.0;
  return {a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f};
}

bool NetworkGraph::north_south(SegmentId id) const {
  const RoadSegment& s = seg(id);
  return (s.from_node % cols) == (s.to_node % cols);
}

bool NetworkGraph::green(SegmentId id, double t) const {
  const RoadSegment& s = seg(id);
  if (!s.signalized) return true;
  const SignalPlan& p = plans[s.to_node];
  double phase = std::fmod(t + p.offset_s, p.cycle_s);
  if (phase < 0) phase += p.cycle_s;
  bool ns_green = phase < p.green_ns_s;
  return north_south(id) ? ns_green : !ns_green;
}

SegmentId NetworkGraph::reverse_of(SegmentId id) const {
  const RoadSegment& s = seg(id);
  for (SegmentId d : s.downstream) {
    const RoadSegment& t = segments[d];
    if (t.from_node == s.to_node && t.to_node == s.from_node) return d;
  }
  return -1;
}

std::vector<SegmentId> NetworkGraph::upstream_of(SegmentId id) const {
  const RoadSegment& s = seg(id);
  std::vector<SegmentId> up;
  for (const RoadSegment& o : segments) {
    if (o.to_node == s.from_node && o.from_node != s.to_node) up.push_back(o.id);
  }
  return up;
}

NetworkGraph build_grid_network(int rows, int cols, double segment_length,
                                int lanes, uint64_t seed) {
  if (rows < 3 || cols < 3)
    throw std::invalid_argument("grid needs rows, cols >= 3");
  if (segment_length < 50.0)
    throw std::invalid_argument("segment length below 50 m");
  if (lanes < 1 || lanes > 3)
    throw std::invalid_argument("lanes must be 1..3");

  NetworkGraph net;
  net.rows = rows;
  net.cols = cols;
  net.spacing = segment_length;
  net.seed = seed;

  auto node = [cols](int r, int c) { return r * cols + c; };
  std::vector<std::pair<int, int>> edges;  // directed node pairs
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) {
        edges.emplace_back(node(r, c), node(r, c + 1));
        edges.emplace_back(node(r, c + 1), node(r, c));
      }
      if (r + 1 < rows) {
        edges.emplace_back(node(r, c), node(r + 1, c));
        edges.emplace_back(node(r + 1, c), node(r, c));
      }
    }
  }
  std::sort(edges.begin(), edges.end());

  constexpr double kUrbanLimit = 13.9;  // 50 km/h
  for (size_t i = 0; i < edges.size(); ++i) {
    RoadSegment s;
    s.id = static_cast<SegmentId>(i);
    s.from_node = edges[i].first;
    s.to_node = edges[i].second;
    s.length = segment_length;
    s.lanes = lanes;
    s.speed_limit = kUrbanLimit;
    s.signalized = true;
    net.segments.push_back(s);
  }
  for (RoadSegment& s : net.segments) {
    for (const RoadSegment& o : net.segments) {
      if (o.from_node == s.to_node) s.downstream.push_back(o.id);
    }
  }

  Rng rng(seed);
  net.plans.resize(rows * cols);
  for (int n = 0; n < rows * cols; ++n) {
    SignalPlan p;
    p.node = n;
    p.offset_s = rng.uniform_int(0, 17) * 5.0;  // multiples of 5 s within the cycle
    net.plans[n] = p;
  }
  return net;
}

std::vector<SegmentId> nearest_segments(const NetworkGraph& net, SegmentId target,
                                        int k, int max_hops) {
  net.seg(target);  // existence check
  SegmentId rev = net.reverse_of(target);

  auto neighbors = [&net](SegmentId s) {
    std::vector<SegmentId> out;
    const RoadSegment& seg = net.seg(s);
    SegmentId srev = net.reverse_of(s);
    for (SegmentId d : seg.downstream)
      if (d != srev) out.push_back(d);
    for (SegmentId u : net.upstream_of(s)) out.push_back(u);
    return out;
  };

  std::map<SegmentId, int> hop;
  hop[target] = 0;
  std::deque<SegmentId> queue{target};
  while (!queue.empty()) {
    SegmentId s = queue.front();
    queue.pop_front();
    int h = hop[s];
    if (h >= max_hops) continue;
    for (SegmentId n : neighbors(s)) {
      if (!hop.count(n)) {
        hop[n] = h + 1;
        queue.push_back(n);
      }
    }
  }

  std::vector<std::pair<int, SegmentId>> ranked;
  for (auto& [s, h] : hop) {
    if (s == target || s == rev) continue;
    ranked.emplace_back(h, s);
  }
  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) < k)
    throw std::runtime_error("network too small: fewer than " + std::to_string(k) +
                             " segments within " + std::to_string(max_hops) + " hops");
  std::vector<SegmentId> out;
  for (int i = 0; i < k; ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<SegmentId> adjacent_segments(const NetworkGraph& net, SegmentId target) {
  return nearest_segments(net, target, 8);
}

static int bin_index(const HistoricalProfile& p, double t) {
  int b = static_cast<int>(std::floor(t / p.bin_seconds));
  if (b < 0 || b >= p.bins()) throw std::out_of_range("time outside profile horizon");
  return b;
}

double HistoricalProfile::travel_time(SegmentId seg, double t) const {
  if (seg < 0 || seg >= static_cast<int>(tth_seconds.size()))
    throw std::out_of_range("unknown segment in profile");
  return tth_seconds[seg][bin_index(*this, t)];
}

double HistoricalProfile::flow(SegmentId seg, double t) const {
  if (seg < 0 || seg >= static_cast<int>(expected_flow.size()))
    throw std::out_of_range("unknown segment in profile");
  return expected_flow[seg][bin_index(*this, t)];
}

HistoricalProfile free_flow_profile(const NetworkGraph& net, double horizon_s,
                                    double signal_allowance_s) {
  HistoricalProfile p;
  int nbins = static_cast<int>(std::ceil(horizon_s / p.bin_seconds));
  p.tth_seconds.resize(net.size());
  p.expected_flow.resize(net.size());
  for (const RoadSegment& s : net.segments) {
    double ff = s.length / s.speed_limit + (s.signalized ? signal_allowance_s : 0.0);
    p.tth_seconds[s.id].assign(nbins, ff);
    p.expected_flow[s.id].assign(nbins, 0.0);
  }
  return p;
}

using nlohmann::json;

std::string NetworkGraph::serialize() const {
  json j;
  j["rows"] = rows;
  j["cols"] = cols;
  j["spacing"] = spacing;
  j["seed"] = seed;
  json segs = json::array();
  for (const RoadSegment& s : segments) {
    segs.push_back({{"id", s.id},
                    {"from", s.from_node},
                    {"to", s.to_node},
                    {"length", s.length},
                    {"lanes", s.lanes},
                    {"speed_limit", s.speed_limit},
                    {"downstream", s.downstream},
                    {"signalized", s.signalized}});
  }
  j["segments"] = segs;
  json plans_j = json::array();
  for (const SignalPlan& p : plans) {
    plans_j.push_back({{"node", p.node},
                       {"cycle_s", p.cycle_s},
                       {"green_ns_s", p.green_ns_s},
                       {"offset_s", p.offset_s}});
  }
  j["signal_plans"] = plans_j;
  return j.dump(2);
}

void save_network(const NetworkGraph& net, const HistoricalProfile& profile,
                  const std::string& path) {
  json j = json::parse(net.serialize());
  j["profile"] = {{"bin_seconds", profile.bin_seconds},
                  {"tth_seconds", profile.tth_seconds},
                  {"expected_flow", profile.expected_flow}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void load_network(const std::string& path, NetworkGraph& net, HistoricalProfile& profile) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j = json::parse(in);
  net = NetworkGraph{};
  net.rows = j["rows"];
  net.cols = j["cols"];
  net.spacing = j["spacing"];
  net.seed = j["seed"];
  for (const json& sj : j["segments"]) {
    RoadSegment s;
    s.id = sj["id"];
    s.from_node = sj["from"];
    s.to_node = sj["to"];
    s.length = sj["length"];
    s.lanes = sj["lanes"];
    s.speed_limit = sj["speed_limit"];
    s.downstream = sj["downstream"].get<std::vector<SegmentId>>();
    s.signalized = sj["signalized"];
    net.segments.push_back(s);
  }
  for (const json& pj : j["signal_plans"]) {
    SignalPlan p;
    p.node = pj["node"];
    p.cycle_s = pj["cycle_s"];
    p.green_ns_s = pj["green_ns_s"];
    p.offset_s = pj["offset_s"];
    net.plans.push_back(p);
  }
  profile = HistoricalProfile{};
  if (j.contains("profile")) {
    profile.bin_seconds = j["profile"]["bin_seconds"];
    profile.tth_seconds = j["profile"]["tth_seconds"].get<std::vector<std::vector<double>>>();
    profile.expected_flow = j["profile"]["expected_flow"].get<std::vector<std::vector<double>>>();
  }
}

}  // namespace stp::netmodel
