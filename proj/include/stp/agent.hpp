#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "stp/mobility.hpp"
#include "stp/netmodel.hpp"

namespace stp::agent {

using mobility::EventKind;
using netmodel::SegmentId;

constexpr double kStaleSeconds = 900.0;  // 15-minute freshness threshold
constexpr int kTrajectoryCap = 10;
constexpr double kDefaultAlpha = 0.65;
constexpr double kDefaultCongestionFactor = 1.8;

struct BeaconMessage {
  SegmentId segment_id = -1;
  double time = 0.0;
  int sender_id = -1;
  double position = 0.0;
  double speed = 0.0;
  double tt_index = 0.0;
  int direction = 0;  // heading quadrant
};

struct UploadRecord {
  SegmentId segment_id = -1;
  double time = 0.0;
  double flow = 0.0;
  EventKind event = EventKind::none;
  double current_tt = 0.0;
};

struct UploadMessage {
  int vehicle_id = -1;
  double time = 0.0;
  double tt_index = 0.0;
  std::vector<UploadRecord> records;  // most recent first, at most 10
};

// Recency-weighted deviation of observed vs historical travel time over the
// last (up to 10) trajectory segments. Pairs are ordered oldest to newest;
// the oldest pair takes weight index 1. Short trajectories keep the
// constant divisor of 10.
double compute_tt_index(const std::vector<std::pair<double, double>>& tt_tth_pairs);

// v = (1-alpha)*own + alpha*neighbor_mean
double blend_indices(double own, double neighbor_mean, double alpha = kDefaultAlpha);

bool detect_excessive(double observed_tt, double tth, double c = kDefaultCongestionFactor);

// EdgesOfRouteofV: one entry per sender, current segment only, 15-min fresh.
class NeighborTable {
 public:
  struct Entry {
    SegmentId segment_id = -1;
    double time = 0.0;
    double position = 0.0;
    double speed = 0.0;
    double tt_index = 0.0;
  };

  void on_beacon(const BeaconMessage& beacon, double now, SegmentId my_segment);
  void prune(double now, SegmentId my_segment);
  void clear() { entries_.clear(); }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::optional<double> mean_tt_index() const;
  // distinct senders heard within the window
  int count_within(double now, double window) const;
  const std::map<int, Entry>& entries() const { return entries_; }

 private:
  std::map<int, Entry> entries_;
};

// ListEdges: capped log of the last 10 traversed segments, newest first.
struct TrajectoryEntry {
  SegmentId segment_id = -1;
  double time = 0.0;        // segment exit time
  double current_tt = 0.0;  // seconds
  EventKind event = EventKind::none;
  double flow = 0.0;  // local estimate, vehicles per window
};

class TrajectoryLog {
 public:
  void push(const TrajectoryEntry& entry);
  // Entries still fresh at `now`, newest first.
  std::vector<TrajectoryEntry> reportable(double now) const;
  size_t size() const { return entries_.size(); }
  const std::deque<TrajectoryEntry>& entries() const { return entries_; }

 private:
  std::deque<TrajectoryEntry> entries_;
};

class CauseClassifier {
 public:
  virtual ~CauseClassifier() = default;
  virtual EventKind classify(const mobility::World& world, SegmentId seg, double t) = 0;
};

// Default: reads the scenario ground truth; recurrent when congestion is
// excessive with no active event.
class GroundTruthClassifier : public CauseClassifier {
 public:
  EventKind classify(const mobility::World& world, SegmentId seg, double t) override;
};

// Per-vehicle state of the Fig.-style on-board algorithm.
class VehicleAgent {
 public:
  VehicleAgent() = default;
  VehicleAgent(int id, double alpha, double c_factor)
      : id_(id), alpha_(alpha), c_factor_(c_factor) {}

  void on_beacon(const BeaconMessage& beacon, double now, SegmentId my_segment);

  // Called when the vehicle finishes a segment; computes CurrentTT, the
  // local flow estimate, tags the cause when travel time is excessive, and
  // refreshes the blended index.
  void on_segment_change(SegmentId finished_seg, double entry_time, double exit_time,
                         const netmodel::HistoricalProfile& profile,
                         const mobility::World& world, CauseClassifier& classifier);

  // Per-step refresh while staying on a segment.
  void refresh_index(double now, SegmentId my_segment,
                     const netmodel::HistoricalProfile& profile);

  double tt_index() const { return blended_index_; }
  double own_index() const { return own_index_; }
  const TrajectoryLog& trajectory() const { return trajectory_; }
  const NeighborTable& table() const { return table_; }
  int local_flow_estimate(double now, double window = 300.0) const;
  UploadMessage make_upload(double now) const;
  int id() const { return id_; }

 private:
  void recompute_own_index(const netmodel::HistoricalProfile& profile, double now);

  int id_ = -1;
  double alpha_ = kDefaultAlpha;
  double c_factor_ = kDefaultCongestionFactor;
  NeighborTable table_;
  TrajectoryLog trajectory_;
  double own_index_ = 0.0;
  double blended_index_ = 0.0;
};

}  // namespace stp::agent
