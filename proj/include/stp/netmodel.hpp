#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace stp::netmodel {

using SegmentId = int;

struct RoadSegment {
  SegmentId id = -1;
  int from_node = -1;
  int to_node = -1;
  double length = 0.0;      // meters
  int lanes = 1;
  double speed_limit = 0.0; // m/s
  std::vector<SegmentId> downstream;
  bool signalized = false;
};

// Two-phase fixed-cycle plan per intersection. Phase A serves north-south
// approaches, phase B east-west; offsets are seeded per node.
struct SignalPlan {
  int node = -1;
  double cycle_s = 90.0;
  double green_ns_s = 45.0;
  double offset_s = 0.0;
};

class NetworkGraph {
 public:
  int rows = 0;
  int cols = 0;
  double spacing = 0.0;
  uint64_t seed = 0;
  std::vector<RoadSegment> segments;
  std::vector<SignalPlan> plans;  // indexed by node

  const RoadSegment& seg(SegmentId id) const;
  size_t size() const { return segments.size(); }

  std::array<double, 2> node_xy(int node) const;
  // World position of a point `pos` meters along the segment.
  std::array<double, 2> position_xy(SegmentId id, double pos) const;

  // Whether the signal at the segment's downstream node shows green for
  // this approach at time t.
  bool green(SegmentId id, double t) const;

  // Segments feeding into this segment's tail node (reverse link excluded).
  std::vector<SegmentId> upstream_of(SegmentId id) const;
  // Reverse-direction twin of a segment, or -1.
  SegmentId reverse_of(SegmentId id) const;

  std::string serialize() const;  // canonical JSON text

 private:
  bool north_south(SegmentId id) const;
};

// Synthetic grid: rows x cols nodes, a directed segment each way on every
// lattice edge. The seed drives signal offsets only; topology is fixed by
// the dimensions.
NetworkGraph build_grid_network(int rows, int cols, double segment_length,
                                int lanes, uint64_t seed);

// The k segments nearest the target by hop distance in the route graph
// (continuations downstream of the head and feeders upstream of the tail;
// u-turn twins excluded). Ties break by ascending id. Throws if fewer than
// k segments lie within max_hops.
std::vector<SegmentId> nearest_segments(const NetworkGraph& net, SegmentId target,
                                        int k, int max_hops = 3);

// The paper's fixed list of eight segments that influence the target.
std::vector<SegmentId> adjacent_segments(const NetworkGraph& net, SegmentId target);

// Per segment, per 5-minute time-of-day bin: expected travel time and flow.
class HistoricalProfile {
 public:
  double bin_seconds = 300.0;
  // indexed [segment][bin]
  std::vector<std::vector<double>> tth_seconds;
  std::vector<std::vector<double>> expected_flow;

  double travel_time(SegmentId seg, double t) const;
  double flow(SegmentId seg, double t) const;
  int bins() const { return tth_seconds.empty() ? 0 : static_cast<int>(tth_seconds[0].size()); }
  double horizon() const { return bins() * bin_seconds; }
};

// Free-flow profile (length/limit plus a fixed signal allowance per bin).
HistoricalProfile free_flow_profile(const NetworkGraph& net, double horizon_s,
                                    double signal_allowance_s = 20.0);

void save_network(const NetworkGraph& net, const HistoricalProfile& profile,
                  const std::string& path);
// Loads both; profile may be empty in the file (zero bins).
void load_network(const std::string& path, NetworkGraph& net, HistoricalProfile& profile);

}  // namespace stp::netmodel
