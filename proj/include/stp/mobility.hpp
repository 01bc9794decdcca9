#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stp/netmodel.hpp"
#include "stp/rng.hpp"

namespace stp::mobility {

using netmodel::NetworkGraph;
using netmodel::SegmentId;

enum class EventKind { accident, workzone, weather, recurrent, special_event, none };

const char* event_name(EventKind k);
EventKind event_from_name(const std::string& name);
// Position in the paper's one-hot ordering (accident=0 ... none=5).
int event_index(EventKind k);

enum class LanePosition { beginning, middle, end };

struct ScenarioEvent {
  EventKind kind = EventKind::none;
  SegmentId segment = -1;
  std::vector<int> blocked_lanes;
  LanePosition lane_position = LanePosition::middle;
  double start = 0.0;
  double duration = 0.0;
  double weather_speed_factor = 1.0;  // weather only
  SegmentId event_destination = -1;   // special_event only
  double demand_multiplier = 1.5;     // recurrent only
};

struct Trip {
  double depart = 0.0;
  SegmentId origin = -1;
  SegmentId destination = -1;
};

struct TripDemand {
  std::vector<Trip> trips;  // sorted by departure time
};

struct VehicleState {
  int id = -1;
  SegmentId seg = -1;
  int lane = 0;
  double pos = 0.0;    // front position along segment, meters
  double speed = 0.0;  // m/s
  std::vector<SegmentId> route;
  size_t route_idx = 0;
  double segment_entry_time = 0.0;
  bool obstacle = false;  // stationary blocking vehicle from an event
};

struct CompletionRecord {
  int vehicle = -1;
  SegmentId seg = -1;
  double entry_time = 0.0;
  double exit_time = 0.0;
};

// Crossing detected while stepping from t to t+1; exposed so per-vehicle
// agents can react without scanning the whole world.
struct SegmentChange {
  int vehicle = -1;
  SegmentId from_seg = -1;
  SegmentId to_seg = -1;  // -1 when the route finished
  double entry_time = 0.0;
  double exit_time = 0.0;
};

class GroundTruthLog {
 public:
  double interval_s = 300.0;

  void record_completion(const CompletionRecord& r, double horizon);
  void record_entry(SegmentId seg, double t, double horizon);
  void mark_event(SegmentId seg, int interval, EventKind kind);
  void ensure_segments(size_t n, int intervals);

  int flow(SegmentId seg, int interval) const;     // completions in the interval
  int entries(SegmentId seg, int interval) const;  // vehicles entering in the interval
  double mean_tt(SegmentId seg, int interval) const;  // 0 when no completions
  EventKind event(SegmentId seg, int interval) const;
  int intervals() const { return intervals_; }
  const std::vector<CompletionRecord>& completions() const { return completions_; }

  void export_csv(const std::string& path) const;

 private:
  int intervals_ = 0;
  std::vector<std::vector<int>> flow_;
  std::vector<std::vector<int>> entries_;
  std::vector<std::vector<double>> tt_sum_;
  std::vector<std::vector<EventKind>> event_;
  std::vector<CompletionRecord> completions_;
};

// speed while approaching or alongside a blocking obstacle; low enough that
// the crawl zone's throughput (speed / min_gap) caps flow below peak demand,
// so blocking events queue traffic instead of only adding a delay
constexpr double kCrawlSpeed = 0.3;

struct WorldParams {
  double dt = 1.0;
  double accel = 2.5;        // m/s^2
  double min_gap = 7.0;      // front-to-front spacing floor, meters
  double stop_margin = 1.0;  // stop line offset from segment end
  double horizon = 7200.0;
};

class World {
 public:
  World(const NetworkGraph& net, WorldParams params, uint64_t seed);

  void add_demand(const TripDemand& demand);
  void inject_event(const ScenarioEvent& event);

  void step();  // advances time by dt
  void run_to(double t_end);

  double time() const { return time_; }
  const NetworkGraph& net() const { return *net_; }
  const WorldParams& params() const { return params_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const GroundTruthLog& log() const { return log_; }
  const std::vector<SegmentChange>& last_changes() const { return last_changes_; }
  const std::vector<int>& last_spawned() const { return last_spawned_; }

  // Positions at the start of the step that produced the current state;
  // the vanet layer interpolates between these and the current ones.
  const std::vector<VehicleState>& prev_vehicles() const { return prev_vehicles_; }

  EventKind active_event(SegmentId seg, double t) const;
  double weather_factor(double t) const;
  int vehicles_on_segment(SegmentId seg) const;

  // total injected == completed routes + currently present (conservation)
  long injected_count() const { return injected_; }
  long finished_count() const { return finished_; }

  static std::vector<SegmentId> shortest_route(const NetworkGraph& net, SegmentId origin,
                                               SegmentId destination);

 private:
  void activate_pending_events(double t);
  void spawn_departures(double t);
  void move_vehicles(double t);
  int choose_entry_lane(SegmentId seg, double min_front_space) const;
  const VehicleState* leader_on(SegmentId seg, int lane, double pos, int self_id) const;

  const NetworkGraph* net_;
  WorldParams params_;
  Rng rng_;
  double time_ = 0.0;
  std::vector<VehicleState> vehicles_;
  std::vector<VehicleState> prev_vehicles_;
  std::vector<Trip> pending_;  // sorted by depart, consumed front to back
  size_t next_trip_ = 0;
  std::vector<Trip> retry_;       // entry-jammed trips, retried next step
  std::vector<Trip> retry_next_;
  std::vector<ScenarioEvent> events_;
  std::vector<char> event_active_;
  std::vector<std::vector<int>> obstacle_ids_;  // per event
  GroundTruthLog log_;
  std::vector<SegmentChange> last_changes_;
  std::vector<int> last_spawned_;
  int next_vehicle_id_ = 0;
  long injected_ = 0;
  long finished_ = 0;
  // per (segment, lane): vehicle indices sorted by descending position
  std::vector<std::vector<std::vector<int>>> lane_index_;
  void rebuild_lane_index();
  // per (segment, lane): occupancy summary used for entry admission; rebuilt
  // each step and updated incrementally as vehicles enter (kept conservative:
  // departures within a step don't refresh min_pos)
  struct LaneEntryInfo {
    int count = 0;
    double min_pos = std::numeric_limits<double>::infinity();
  };
  std::vector<std::vector<LaneEntryInfo>> entry_info_;
  void rebuild_entry_info();
  void note_entry(SegmentId seg, int lane, double pos);
};

TripDemand generate_base_demand(const NetworkGraph& net, double rate_veh_per_s,
                                double horizon_s, uint64_t seed);

TripDemand generate_special_event_demand(const NetworkGraph& net, SegmentId destination,
                                         double rate_veh_per_s, double window_start,
                                         double window_end, uint64_t seed);

}  // namespace stp::mobility
