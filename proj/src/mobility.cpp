#include "stp/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "stp/csv.hpp"

namespace stp::mobility {

const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::accident: return "accident";
    case EventKind::workzone: return "workzone";
    case EventKind::weather: return "weather";
    case EventKind::recurrent: return "recurrent";
    case EventKind::special_event: return "special_event";
    case EventKind::none: return "none";
  }
  return "none";
}

EventKind event_from_name(const std::string& name) {
  for (EventKind k : {EventKind::accident, EventKind::workzone, EventKind::weather,
                      EventKind::recurrent, EventKind::special_event, EventKind::none}) {
    if (name == event_name(k)) return k;
  }
  throw std::invalid_argument("unknown event kind: " + name);
}

int event_index(EventKind k) { return static_cast<int>(k); }

void GroundTruthLog::ensure_segments(size_t n, int intervals) {
  intervals_ = intervals;
  flow_.assign(n, std::vector<int>(intervals, 0));
  entries_.assign(n, std::vector<int>(intervals, 0));
  tt_sum_.assign(n, std::vector<double>(intervals, 0.0));
  event_.assign(n, std::vector<EventKind>(intervals, EventKind::none));
}

void GroundTruthLog::record_completion(const CompletionRecord& r, double horizon) {
  completions_.push_back(r);
  int idx = static_cast<int>(std::floor(r.exit_time / interval_s));
  if (idx >= 0 && idx < intervals_ && r.exit_time < horizon + 0.5) {
    if (idx < static_cast<int>(flow_[r.seg].size())) {
      flow_[r.seg][idx] += 1;
      tt_sum_[r.seg][idx] += r.exit_time - r.entry_time;
    }
  }
}

void GroundTruthLog::record_entry(SegmentId seg, double t, double horizon) {
  (void)horizon;
  int idx = static_cast<int>(std::floor(t / interval_s));
  if (idx >= 0 && idx < intervals_) entries_[seg][idx] += 1;
}

void GroundTruthLog::mark_event(SegmentId seg, int interval, EventKind kind) {
  if (interval < 0 || interval >= intervals_) return;
  if (event_[seg][interval] == EventKind::none) event_[seg][interval] = kind;
}

int GroundTruthLog::flow(SegmentId seg, int interval) const { return flow_[seg][interval]; }
int GroundTruthLog::entries(SegmentId seg, int interval) const { return entries_[seg][interval]; }

double GroundTruthLog::mean_tt(SegmentId seg, int interval) const {
  int n = flow_[seg][interval];
  return n > 0 ? tt_sum_[seg][interval] / n : 0.0;
}

EventKind GroundTruthLog::event(SegmentId seg, int interval) const {
  return event_[seg][interval];
}

void GroundTruthLog::export_csv(const std::string& path) const {
  CsvWriter w(path);
  w.row({"segment", "interval_start", "flow", "mean_tt", "event"});
  for (size_t s = 0; s < flow_.size(); ++s) {
    for (int i = 0; i < intervals_; ++i) {
      w.row({std::to_string(s), fmt_double(i * interval_s),
             std::to_string(flow_[s][i]), fmt_double(mean_tt(static_cast<SegmentId>(s), i)),
             event_name(event_[s][i])});
    }
  }
}

World::World(const NetworkGraph& net, WorldParams params, uint64_t seed)
    : net_(&net), params_(params), rng_(seed) {
  int intervals = static_cast<int>(std::ceil(params_.horizon / log_.interval_s));
  log_.ensure_segments(net.size(), intervals);
  lane_index_.resize(net.size());
  entry_info_.resize(net.size());
  for (const auto& s : net.segments) {
    lane_index_[s.id].resize(s.lanes);
    entry_info_[s.id].resize(s.lanes);
  }
}

void World::add_demand(const TripDemand& demand) {
  pending_.insert(pending_.end(), demand.trips.begin(), demand.trips.end());
  std::stable_sort(pending_.begin() + next_trip_, pending_.end(),
                   [](const Trip& a, const Trip& b) { return a.depart < b.depart; });
}

void World::inject_event(const ScenarioEvent& event) {
  if (event.start < 0 || event.start >= params_.horizon)
    throw std::invalid_argument("event start outside horizon");
  const bool blocking = event.kind == EventKind::accident || event.kind == EventKind::workzone;
  if (blocking) {
    const auto& seg = net_->seg(event.segment);
    if (event.kind == EventKind::accident && event.duration >= 3600.0)
      throw std::invalid_argument("accident duration must be under one hour");
    if (event.kind == EventKind::workzone && event.duration < 3600.0)
      throw std::invalid_argument("workzone duration must be at least one hour");
    if (event.blocked_lanes.empty())
      throw std::invalid_argument("blocking event needs at least one lane");
    for (int l : event.blocked_lanes)
      if (l < 0 || l >= seg.lanes) throw std::invalid_argument("blocked lane out of range");
    if (seg.lanes > 1 && static_cast<int>(event.blocked_lanes.size()) >= seg.lanes)
      throw std::invalid_argument("cannot block all lanes of a multi-lane segment");
    if (seg.lanes == 1 && event.kind != EventKind::accident)
      throw std::invalid_argument("only an accident may block a one-lane road");
    for (const ScenarioEvent& other : events_) {
      if (other.segment != event.segment) continue;
      if (other.kind != EventKind::accident && other.kind != EventKind::workzone) continue;
      bool time_overlap = event.start < other.start + other.duration &&
                          other.start < event.start + event.duration;
      if (!time_overlap) continue;
      for (int l : event.blocked_lanes)
        for (int m : other.blocked_lanes)
          if (l == m) throw std::invalid_argument("overlapping blocking events on a lane");
    }
  }
  if (event.kind == EventKind::weather &&
      (event.weather_speed_factor <= 0.0 || event.weather_speed_factor > 1.0))
    throw std::invalid_argument("weather speed factor must be in (0,1]");
  if (event.kind == EventKind::special_event) net_->seg(event.event_destination);
  events_.push_back(event);
  event_active_.push_back(0);
  obstacle_ids_.emplace_back();
}

EventKind World::active_event(SegmentId seg, double t) const {
  for (size_t i = 0; i < events_.size(); ++i) {
    const ScenarioEvent& e = events_[i];
    if (t < e.start || t >= e.start + e.duration) continue;
    switch (e.kind) {
      case EventKind::accident:
      case EventKind::workzone:
      case EventKind::recurrent:
        if (e.segment == seg) return e.kind;
        break;
      case EventKind::weather:
        return EventKind::weather;
      case EventKind::special_event: {
        if (e.event_destination == seg) return e.kind;
        for (SegmentId a : netmodel::adjacent_segments(*net_, e.event_destination))
          if (a == seg) return e.kind;
        break;
      }
      case EventKind::none:
        break;
    }
  }
  return EventKind::none;
}

double World::weather_factor(double t) const {
  double f = 1.0;
  for (const ScenarioEvent& e : events_) {
    if (e.kind == EventKind::weather && t >= e.start && t < e.start + e.duration)
      f = std::min(f, e.weather_speed_factor);
  }
  return f;
}

int World::vehicles_on_segment(SegmentId seg) const {
  int n = 0;
  for (const VehicleState& v : vehicles_)
    if (!v.obstacle && v.seg == seg) ++n;
  return n;
}

void World::activate_pending_events(double t) {
  for (size_t i = 0; i < events_.size(); ++i) {
    const ScenarioEvent& e = events_[i];
    const bool blocking = e.kind == EventKind::accident || e.kind == EventKind::workzone;
    if (!event_active_[i] && t >= e.start && t < e.start + e.duration) {
      event_active_[i] = 1;
      if (blocking) {
        const auto& seg = net_->seg(e.segment);
        double p;
        switch (e.lane_position) {
          case LanePosition::beginning: p = 0.15 * seg.length; break;
          case LanePosition::middle: p = 0.50 * seg.length; break;
          default: p = 0.85 * seg.length; break;
        }
        int count = static_cast<int>(e.blocked_lanes.size()) + 1;
        for (int k = 0; k < count; ++k) {
          VehicleState obs;
          obs.id = next_vehicle_id_++;
          obs.seg = e.segment;
          obs.lane = e.blocked_lanes[k % e.blocked_lanes.size()];
          obs.pos = p - 9.0 * (k / e.blocked_lanes.size());
          obs.speed = 0.0;
          obs.obstacle = true;
          obs.segment_entry_time = t;
          vehicles_.push_back(obs);
          obstacle_ids_[i].push_back(obs.id);
        }
      }
    } else if (event_active_[i] && t >= e.start + e.duration) {
      event_active_[i] = 0;
      if (!obstacle_ids_[i].empty()) {
        std::erase_if(vehicles_, [&](const VehicleState& v) {
          return std::find(obstacle_ids_[i].begin(), obstacle_ids_[i].end(), v.id) !=
                 obstacle_ids_[i].end();
        });
        obstacle_ids_[i].clear();
      }
    }
    // ground-truth event labels for the current interval
    if (t >= e.start && t < e.start + e.duration) {
      int interval = static_cast<int>(std::floor(t / log_.interval_s));
      switch (e.kind) {
        case EventKind::accident:
        case EventKind::workzone:
        case EventKind::recurrent:
          log_.mark_event(e.segment, interval, e.kind);
          break;
        case EventKind::weather:
          for (const auto& s : net_->segments) log_.mark_event(s.id, interval, e.kind);
          break;
        case EventKind::special_event:
          log_.mark_event(e.event_destination, interval, e.kind);
          for (SegmentId a : netmodel::adjacent_segments(*net_, e.event_destination))
            log_.mark_event(a, interval, e.kind);
          break;
        case EventKind::none:
          break;
      }
    }
  }
}

void World::rebuild_entry_info() {
  for (auto& seg_lanes : entry_info_)
    for (auto& e : seg_lanes) e = LaneEntryInfo{};
  for (const VehicleState& v : vehicles_) {
    LaneEntryInfo& e = entry_info_[v.seg][v.lane];
    ++e.count;
    e.min_pos = std::min(e.min_pos, v.pos);
  }
}

void World::note_entry(SegmentId seg, int lane, double pos) {
  LaneEntryInfo& e = entry_info_[seg][lane];
  ++e.count;
  e.min_pos = std::min(e.min_pos, pos);
}

int World::choose_entry_lane(SegmentId seg, double min_front_space) const {
  const auto& s = net_->seg(seg);
  int best = -1;
  int best_count = std::numeric_limits<int>::max();
  for (int lane = 0; lane < s.lanes; ++lane) {
    const LaneEntryInfo& e = entry_info_[seg][lane];
    if (e.min_pos < min_front_space) continue;
    if (e.count < best_count) {
      best_count = e.count;
      best = lane;
    }
  }
  return best;
}

void World::spawn_departures(double t) {
  last_spawned_.clear();
  auto try_spawn = [&](const Trip& trip) {
    int lane = choose_entry_lane(trip.origin, params_.min_gap);
    if (lane < 0) {
      retry_next_.push_back(trip);  // entry jammed: retry next step
      return;
    }
    VehicleState v;
    v.id = next_vehicle_id_++;
    v.seg = trip.origin;
    v.lane = lane;
    v.pos = 0.0;
    v.speed = 0.0;
    v.route = shortest_route(*net_, trip.origin, trip.destination);
    v.route_idx = 0;
    v.segment_entry_time = t;
    vehicles_.push_back(v);
    note_entry(v.seg, v.lane, v.pos);
    log_.record_entry(v.seg, t, params_.horizon);
    last_spawned_.push_back(v.id);
    ++injected_;
  };
  for (const Trip& trip : retry_) try_spawn(trip);
  retry_.clear();
  while (next_trip_ < pending_.size() && pending_[next_trip_].depart <= t)
    try_spawn(pending_[next_trip_++]);
  std::swap(retry_, retry_next_);
}

void World::rebuild_lane_index() {
  for (auto& seg_lanes : lane_index_)
    for (auto& lane : seg_lanes) lane.clear();
  for (size_t i = 0; i < vehicles_.size(); ++i) {
    const VehicleState& v = vehicles_[i];
    lane_index_[v.seg][v.lane].push_back(static_cast<int>(i));
  }
  for (auto& seg_lanes : lane_index_) {
    for (auto& lane : seg_lanes) {
      std::sort(lane.begin(), lane.end(), [this](int a, int b) {
        if (vehicles_[a].pos != vehicles_[b].pos) return vehicles_[a].pos > vehicles_[b].pos;
        return vehicles_[a].id < vehicles_[b].id;
      });
    }
  }
}

void World::move_vehicles(double t) {
  const double dt = params_.dt;
  const double wf = weather_factor(t);
  last_changes_.clear();

  rebuild_lane_index();

  // lane changes around blocked lanes, using start-of-step positions
  for (VehicleState& v : vehicles_) {
    if (v.obstacle) continue;
    const auto& seg = net_->seg(v.seg);
    if (seg.lanes < 2) continue;
    bool obstructed = false;
    for (const VehicleState& o : vehicles_) {
      if (o.obstacle && o.seg == v.seg && o.lane == v.lane && o.pos > v.pos &&
          o.pos - v.pos < 60.0) {
        obstructed = true;
        break;
      }
    }
    if (!obstructed) continue;
    for (int cand = 0; cand < seg.lanes; ++cand) {
      if (cand == v.lane) continue;
      bool ok = true;
      for (const VehicleState& o : vehicles_) {
        if (o.id == v.id || o.seg != v.seg || o.lane != cand) continue;
        if (o.obstacle && o.pos > v.pos && o.pos - v.pos < 60.0) { ok = false; break; }
        if (std::abs(o.pos - v.pos) < params_.min_gap) { ok = false; break; }
      }
      if (ok) {
        v.lane = cand;
        break;
      }
    }
  }

  rebuild_lane_index();

  // passing a crash or work site forces a crawl, whatever the lane
  std::vector<std::vector<double>> slow_zones(net_->size());
  for (const VehicleState& o : vehicles_)
    if (o.obstacle) slow_zones[o.seg].push_back(o.pos);

  std::vector<int> finished_idx;
  for (const auto& seg_ref : net_->segments) {
    SegmentId sid = seg_ref.id;
    const double vmax = seg_ref.speed_limit * wf;
    for (int lane = 0; lane < seg_ref.lanes; ++lane) {
      double ahead_pos = std::numeric_limits<double>::infinity();
      for (int idx : lane_index_[sid][lane]) {
        VehicleState& v = vehicles_[idx];
        if (v.obstacle) {
          ahead_pos = v.pos;
          continue;
        }
        double cap = vmax;
        for (double obs : slow_zones[sid])
          if (v.pos > obs - 45.0 && v.pos < obs + 5.0) cap = std::min(cap, kCrawlSpeed * wf);
        double want_v = std::min(v.speed + params_.accel * dt, cap);
        double space = std::numeric_limits<double>::infinity();
        if (std::isfinite(ahead_pos)) space = ahead_pos - params_.min_gap - v.pos;

        bool may_cross = true;
        if (!net_->green(sid, t)) may_cross = false;
        double to_stop_line = seg_ref.length - params_.stop_margin - v.pos;

        double disp = std::min(want_v * dt, std::max(0.0, space));
        double new_pos = v.pos + disp;

        if (new_pos >= seg_ref.length && may_cross) {
          double leftover = new_pos - seg_ref.length;
          SegmentId next_seg = -1;
          if (v.route_idx + 1 < v.route.size()) next_seg = v.route[v.route_idx + 1];
          double exit_time = t + dt;
          if (next_seg < 0) {
            // route finished on this segment
            CompletionRecord rec{v.id, sid, v.segment_entry_time, exit_time};
            log_.record_completion(rec, params_.horizon);
            last_changes_.push_back({v.id, sid, -1, v.segment_entry_time, exit_time});
            finished_idx.push_back(idx);
            ++finished_;
            ahead_pos = std::numeric_limits<double>::infinity();
            continue;
          }
          int entry_lane = choose_entry_lane(next_seg, leftover + params_.min_gap);
          if (entry_lane >= 0) {
            CompletionRecord rec{v.id, sid, v.segment_entry_time, exit_time};
            log_.record_completion(rec, params_.horizon);
            last_changes_.push_back({v.id, sid, next_seg, v.segment_entry_time, exit_time});
            v.seg = next_seg;
            v.lane = entry_lane;
            v.pos = leftover;
            note_entry(next_seg, entry_lane, leftover);
            v.speed = disp / dt;
            v.route_idx += 1;
            v.segment_entry_time = exit_time;
            log_.record_entry(next_seg, exit_time, params_.horizon);
            ahead_pos = std::numeric_limits<double>::infinity();
            continue;
          }
          // downstream entry jammed: hold at the stop line
          may_cross = false;
        }
        if (!may_cross && new_pos > seg_ref.length - params_.stop_margin) {
          disp = std::max(0.0, to_stop_line);
          new_pos = v.pos + disp;
        }
        v.pos = new_pos;
        v.speed = disp / dt;
        ahead_pos = v.pos;
      }
    }
  }

  if (!finished_idx.empty()) {
    std::sort(finished_idx.begin(), finished_idx.end(), std::greater<int>());
    for (int idx : finished_idx) vehicles_.erase(vehicles_.begin() + idx);
  }
}

void World::step() {
  double t = time_;
  activate_pending_events(t);
  rebuild_entry_info();
  spawn_departures(t);
  prev_vehicles_ = vehicles_;
  move_vehicles(t);
  time_ = t + params_.dt;
}

void World::run_to(double t_end) {
  while (time_ < t_end - 1e-9) step();
}

std::vector<SegmentId> World::shortest_route(const NetworkGraph& net, SegmentId origin,
                                             SegmentId destination) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.size(), kInf);
  std::vector<SegmentId> prev(net.size(), -1);
  auto cost = [&net](SegmentId s) {
    const auto& seg = net.seg(s);
    return seg.length / seg.speed_limit + (seg.signalized ? 20.0 : 0.0);
  };
  using Item = std::pair<double, SegmentId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist[origin] = 0.0;
  pq.push({0.0, origin});
  while (!pq.empty()) {
    auto [d, s] = pq.top();
    pq.pop();
    if (d > dist[s] + 1e-12) continue;
    if (s == destination) break;
    for (SegmentId n : net.seg(s).downstream) {
      double nd = d + cost(n);
      if (nd < dist[n] - 1e-12) {
        dist[n] = nd;
        prev[n] = s;
        pq.push({nd, n});
      }
    }
  }
  if (!std::isfinite(dist[destination]))
    throw std::runtime_error("no route between segments");
  std::vector<SegmentId> route;
  for (SegmentId s = destination; s != -1; s = prev[s]) route.push_back(s);
  std::reverse(route.begin(), route.end());
  return route;
}

TripDemand generate_base_demand(const NetworkGraph& net, double rate_veh_per_s,
                                double horizon_s, uint64_t seed) {
  TripDemand demand;
  if (rate_veh_per_s <= 0.0) return demand;
  Rng rng(seed);
  double t = rng.exponential(rate_veh_per_s);
  int n = static_cast<int>(net.size());
  while (t < horizon_s) {
    Trip trip;
    trip.depart = t;
    trip.origin = rng.uniform_int(0, n - 1);
    do {
      trip.destination = rng.uniform_int(0, n - 1);
    } while (trip.destination == trip.origin);
    demand.trips.push_back(trip);
    t += rng.exponential(rate_veh_per_s);
  }
  return demand;
}

TripDemand generate_special_event_demand(const NetworkGraph& net, SegmentId destination,
                                         double rate_veh_per_s, double window_start,
                                         double window_end, uint64_t seed) {
  TripDemand demand;
  net.seg(destination);
  if (rate_veh_per_s <= 0.0 || window_end <= window_start) return demand;
  Rng rng(seed);
  int n = static_cast<int>(net.size());
  double t = window_start + rng.exponential(rate_veh_per_s);
  while (t < window_end) {
    Trip trip;
    trip.depart = t;
    do {
      trip.origin = rng.uniform_int(0, n - 1);
    } while (trip.origin == destination);
    trip.destination = destination;
    demand.trips.push_back(trip);
    t += rng.exponential(rate_veh_per_s);
  }
  return demand;
}

}  // namespace stp::mobility
