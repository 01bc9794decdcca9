#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stp/agent.hpp"
#include "stp/netmodel.hpp"

namespace stp::rsu {

using agent::BeaconMessage;
using agent::UploadMessage;
using mobility::EventKind;
using netmodel::SegmentId;

constexpr int kFeatureDim = 62;
constexpr int kFlowHistory = 4;
constexpr int kAdjacentCount = 8;
constexpr int kEventClasses = 6;

// Raw per-interval feature emission; normalization happens in the dataset
// stage so constants can be fit on the training split only.
struct FeatureRow {
  double t = 0.0;        // emission time, seconds since 6:00
  double avg_tt_index = 0.0;
  std::array<double, kFlowHistory> past_flows{};   // newest first
  std::array<double, kAdjacentCount> adj_flows{};
  std::array<EventKind, kAdjacentCount> adj_events{};
};

// Layout: [time, tt_index, 4 past target flows, 8 adjacent flows,
// 8 x 6 one-hot event blocks] = 62.
std::array<double, kFeatureDim> to_feature_vector(const FeatureRow& row,
                                                  double time_span_s,
                                                  double flow_divisor);

enum class FlowCountMode {
  observed_exit,  // count a sender when its beacons stop (segment exit)
  first_heard,
};

// Everything the RSU consumed, in arrival order; replayable into a fresh
// RSU to reproduce the feature stream bit for bit.
struct RsuInputLog {
  struct Item {
    enum class Type { beacon, upload, interval } type;
    double time = 0.0;
    BeaconMessage beacon;
    UploadMessage upload;
  };
  std::vector<Item> items;

  void save(const std::string& path) const;
  static RsuInputLog load(const std::string& path);
};

class Rsu {
 public:
  Rsu(SegmentId target, const netmodel::NetworkGraph& net,
      const netmodel::HistoricalProfile& profile,
      FlowCountMode mode = FlowCountMode::observed_exit);

  void ingest_beacon(const BeaconMessage& beacon, double now);
  void ingest_upload(const UploadMessage& upload, double now);
  // Closes the 5-minute interval ending at `now`; emits a feature row when
  // enough history has accumulated.
  std::optional<FeatureRow> close_interval(double now);

  std::optional<double> average_tt_index() const;
  int last_interval_flow() const { return last_interval_flow_; }
  const std::vector<double>& flow_history() const { return flow_history_; }
  const std::vector<FeatureRow>& features() const { return features_; }
  const std::vector<SegmentId>& adjacent() const { return adjacent_; }
  SegmentId target() const { return target_; }
  size_t table_size() const { return table_.size(); }

  void enable_logging() { logging_ = true; }
  const RsuInputLog& input_log() const { return log_; }

  static std::vector<FeatureRow> replay(const RsuInputLog& log, SegmentId target,
                                        const netmodel::NetworkGraph& net,
                                        const netmodel::HistoricalProfile& profile,
                                        FlowCountMode mode = FlowCountMode::observed_exit);

  static void export_features_csv(const std::vector<FeatureRow>& rows,
                                  const std::string& path);
  static std::vector<FeatureRow> load_features_csv(const std::string& path);

 private:
  struct TableEntry {
    double time = 0.0;
    double position = 0.0;
    double speed = 0.0;
    double tt_index = 0.0;
    int direction = 0;
  };
  struct Presence {
    double first_heard = 0.0;
    double last_heard = 0.0;
  };
  struct AdjacentSlot {
    bool reported = false;
    double report_time = 0.0;
    double flow = 0.0;
    EventKind event = EventKind::none;
  };

  void prune_table(double now);

  SegmentId target_;
  const netmodel::NetworkGraph* net_;
  const netmodel::HistoricalProfile* profile_;
  FlowCountMode mode_;
  std::vector<SegmentId> adjacent_;
  std::map<int, TableEntry> table_;     // sender -> newest beacon fields
  std::map<int, Presence> presence_;    // sender -> hearing span (flow counting)
  std::vector<int> flow_by_interval_;
  std::vector<double> flow_history_;    // newest first, capped at 4
  int last_interval_flow_ = 0;
  std::array<AdjacentSlot, kAdjacentCount> adj_state_{};
  std::vector<FeatureRow> features_;
  bool logging_ = false;
  RsuInputLog log_;
};

}  // namespace stp::rsu
