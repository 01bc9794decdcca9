#include "stp/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stp::agent {

double compute_tt_index(const std::vector<std::pair<double, double>>& tt_tth_pairs) {
  if (tt_tth_pairs.empty()) throw std::invalid_argument("empty trajectory");
  if (tt_tth_pairs.size() > static_cast<size_t>(kTrajectoryCap))
    throw std::invalid_argument("trajectory longer than 10 segments");
  double sum = 0.0;
  for (size_t j = 0; j < tt_tth_pairs.size(); ++j) {
    auto [tt, tth] = tt_tth_pairs[j];
    if (tth <= 0.0) throw std::invalid_argument("historical travel time must be positive");
    double i = static_cast<double>(j + 1);  // oldest pair gets i = 1
    sum += 1.0 - std::exp(-(i / 10.0) * ((tt - tth) / tth));
  }
  return sum / 10.0;
}

double blend_indices(double own, double neighbor_mean, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
  return (1.0 - alpha) * own + alpha * neighbor_mean;
}

bool detect_excessive(double observed_tt, double tth, double c) {
  return observed_tt > c * tth;
}

void NeighborTable::on_beacon(const BeaconMessage& beacon, double now, SegmentId my_segment) {
  if (beacon.segment_id == my_segment) {
    Entry e;
    e.segment_id = beacon.segment_id;
    e.time = beacon.time;
    e.position = beacon.position;
    e.speed = beacon.speed;
    e.tt_index = beacon.tt_index;
    entries_[beacon.sender_id] = e;  // newest wins
  }
  prune(now, my_segment);
}

void NeighborTable::prune(double now, SegmentId my_segment) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (now - it->second.time > kStaleSeconds || it->second.segment_id != my_segment)
      it = entries_.erase(it);
    else
      ++it;
  }
}

std::optional<double> NeighborTable::mean_tt_index() const {
  if (entries_.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [id, e] : entries_) sum += e.tt_index;
  return sum / entries_.size();
}

int NeighborTable::count_within(double now, double window) const {
  int n = 0;
  for (const auto& [id, e] : entries_)
    if (now - e.time <= window) ++n;
  return n;
}

void TrajectoryLog::push(const TrajectoryEntry& entry) {
  entries_.push_front(entry);
  while (entries_.size() > static_cast<size_t>(kTrajectoryCap)) entries_.pop_back();
}

std::vector<TrajectoryEntry> TrajectoryLog::reportable(double now) const {
  std::vector<TrajectoryEntry> out;
  for (const TrajectoryEntry& e : entries_)
    if (now - e.time <= kStaleSeconds) out.push_back(e);
  return out;
}

EventKind GroundTruthClassifier::classify(const mobility::World& world, SegmentId seg,
                                          double t) {
  EventKind k = world.active_event(seg, t);
  return k == EventKind::none ? EventKind::recurrent : k;
}

void VehicleAgent::on_beacon(const BeaconMessage& beacon, double now, SegmentId my_segment) {
  table_.on_beacon(beacon, now, my_segment);
}

int VehicleAgent::local_flow_estimate(double now, double window) const {
  return table_.count_within(now, window) + 1;  // plus self
}

void VehicleAgent::recompute_own_index(const netmodel::HistoricalProfile& profile,
                                       double now) {
  std::vector<std::pair<double, double>> pairs;
  auto fresh = trajectory_.reportable(now);
  for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) {  // oldest first
    double t_bin = std::min(it->time, profile.horizon() - 1.0);
    double tth = profile.travel_time(it->segment_id, std::max(0.0, t_bin));
    pairs.emplace_back(it->current_tt, tth);
  }
  if (!pairs.empty()) own_index_ = compute_tt_index(pairs);
}

void VehicleAgent::refresh_index(double now, SegmentId my_segment,
                                 const netmodel::HistoricalProfile& profile) {
  table_.prune(now, my_segment);
  recompute_own_index(profile, now);
  auto mean = table_.mean_tt_index();
  blended_index_ = mean ? blend_indices(own_index_, *mean, alpha_) : own_index_;
}

void VehicleAgent::on_segment_change(SegmentId finished_seg, double entry_time,
                                     double exit_time,
                                     const netmodel::HistoricalProfile& profile,
                                     const mobility::World& world,
                                     CauseClassifier& classifier) {
  TrajectoryEntry entry;
  entry.segment_id = finished_seg;
  entry.time = exit_time;
  entry.current_tt = exit_time - entry_time;
  entry.flow = local_flow_estimate(exit_time);

  double t_bin = std::clamp(entry_time, 0.0, profile.horizon() - 1.0);
  double tth = profile.travel_time(finished_seg, t_bin);
  if (detect_excessive(entry.current_tt, tth, c_factor_))
    entry.event = classifier.classify(world, finished_seg, exit_time);
  else
    entry.event = EventKind::none;

  trajectory_.push(entry);
  // the table tracked the finished segment; the new one starts fresh
  table_.clear();
  recompute_own_index(profile, exit_time);
  blended_index_ = own_index_;
}

UploadMessage VehicleAgent::make_upload(double now) const {
  UploadMessage msg;
  msg.vehicle_id = id_;
  msg.time = now;
  msg.tt_index = blended_index_;
  for (const TrajectoryEntry& e : trajectory_.reportable(now)) {
    UploadRecord r;
    r.segment_id = e.segment_id;
    r.time = e.time;
    r.flow = e.flow;
    r.event = e.event;
    r.current_tt = e.current_tt;
    msg.records.push_back(r);
  }
  return msg;
}

}  // namespace stp::agent
