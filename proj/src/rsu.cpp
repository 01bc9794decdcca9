#include "stp/rsu.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "stp/csv.hpp"

namespace stp::rsu {

using nlohmann::json;

std::array<double, kFeatureDim> to_feature_vector(const FeatureRow& row,
                                                  double time_span_s,
                                                  double flow_divisor) {
  std::array<double, kFeatureDim> x{};
  int k = 0;
  x[k++] = std::clamp(row.t / time_span_s, 0.0, 1.0);
  x[k++] = row.avg_tt_index;
  auto norm_flow = [flow_divisor](double f) {
    return std::clamp(f / flow_divisor, 0.0, 1.0);
  };
  for (double f : row.past_flows) x[k++] = norm_flow(f);
  for (double f : row.adj_flows) x[k++] = norm_flow(f);
  for (EventKind e : row.adj_events) {
    for (int c = 0; c < kEventClasses; ++c)
      x[k++] = (mobility::event_index(e) == c) ? 1.0 : 0.0;
  }
  return x;
}

Rsu::Rsu(SegmentId target, const netmodel::NetworkGraph& net,
         const netmodel::HistoricalProfile& profile, FlowCountMode mode)
    : target_(target), net_(&net), profile_(&profile), mode_(mode) {
  adjacent_ = netmodel::adjacent_segments(net, target);
}

void Rsu::prune_table(double now) {
  for (auto it = table_.begin(); it != table_.end();) {
    if (now - it->second.time > agent::kStaleSeconds)
      it = table_.erase(it);
    else
      ++it;
  }
}

void Rsu::ingest_beacon(const BeaconMessage& beacon, double now) {
  if (logging_) {
    RsuInputLog::Item item;
    item.type = RsuInputLog::Item::Type::beacon;
    item.time = now;
    item.beacon = beacon;
    log_.items.push_back(item);
  }
  if (beacon.segment_id == target_) {
    TableEntry e;
    e.time = beacon.time;
    e.position = beacon.position;
    e.speed = beacon.speed;
    e.tt_index = beacon.tt_index;
    e.direction = beacon.direction;
    table_[beacon.sender_id] = e;

    auto [it, inserted] = presence_.try_emplace(beacon.sender_id,
                                                Presence{beacon.time, beacon.time});
    if (!inserted) it->second.last_heard = std::max(it->second.last_heard, beacon.time);
    if (inserted && mode_ == FlowCountMode::first_heard) {
      int idx = static_cast<int>(std::floor(beacon.time / 300.0));
      if (idx >= static_cast<int>(flow_by_interval_.size()))
        flow_by_interval_.resize(idx + 1, 0);
      flow_by_interval_[idx] += 1;
    }
  }
  prune_table(now);
}

void Rsu::ingest_upload(const UploadMessage& upload, double now) {
  if (logging_) {
    RsuInputLog::Item item;
    item.type = RsuInputLog::Item::Type::upload;
    item.time = now;
    item.upload = upload;
    log_.items.push_back(item);
  }
  for (const agent::UploadRecord& rec : upload.records) {
    if (now - rec.time > agent::kStaleSeconds) continue;
    auto pos = std::find(adjacent_.begin(), adjacent_.end(), rec.segment_id);
    if (pos == adjacent_.end()) continue;
    size_t slot = static_cast<size_t>(pos - adjacent_.begin());
    AdjacentSlot& s = adj_state_[slot];
    if (!s.reported || rec.time > s.report_time) {
      s.reported = true;
      s.report_time = rec.time;
      s.flow = rec.flow;
      s.event = rec.event;
    }
  }
}

std::optional<double> Rsu::average_tt_index() const {
  if (table_.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [id, e] : table_) sum += e.tt_index;
  return sum / table_.size();
}

std::optional<FeatureRow> Rsu::close_interval(double now) {
  if (logging_) {
    RsuInputLog::Item item;
    item.type = RsuInputLog::Item::Type::interval;
    item.time = now;
    log_.items.push_back(item);
  }
  constexpr double kSilenceGap = 0.25;  // more than two missed beacon periods
  if (mode_ == FlowCountMode::observed_exit) {
    for (auto it = presence_.begin(); it != presence_.end();) {
      if (now - it->second.last_heard >= kSilenceGap) {
        double exit_time = std::floor(it->second.last_heard) + 1.0;
        int idx = static_cast<int>(std::floor(exit_time / 300.0));
        if (idx >= static_cast<int>(flow_by_interval_.size()))
          flow_by_interval_.resize(idx + 1, 0);
        flow_by_interval_[idx] += 1;
        it = presence_.erase(it);
      } else {
        ++it;
      }
    }
  }
  int interval_idx = static_cast<int>(std::floor((now - 1.0) / 300.0));
  if (interval_idx >= static_cast<int>(flow_by_interval_.size()))
    flow_by_interval_.resize(interval_idx + 1, 0);
  last_interval_flow_ = flow_by_interval_[interval_idx];

  flow_history_.insert(flow_history_.begin(), static_cast<double>(last_interval_flow_));
  while (flow_history_.size() > static_cast<size_t>(kFlowHistory)) flow_history_.pop_back();

  prune_table(now);
  auto tti = average_tt_index();
  if (flow_history_.size() < static_cast<size_t>(kFlowHistory) || !tti)
    return std::nullopt;  // defer until enough history and on-segment traffic

  FeatureRow row;
  row.t = now;
  row.avg_tt_index = *tti;
  for (int i = 0; i < kFlowHistory; ++i) row.past_flows[i] = flow_history_[i];
  for (int i = 0; i < kAdjacentCount; ++i) {
    const AdjacentSlot& s = adj_state_[i];
    if (s.reported && now - s.report_time <= agent::kStaleSeconds) {
      row.adj_flows[i] = s.flow;
      row.adj_events[i] = s.event;
    } else {
      double t_bin = std::clamp(now - 1.0, 0.0, profile_->horizon() - 1.0);
      row.adj_flows[i] = profile_->bins() > 0 ? profile_->flow(adjacent_[i], t_bin) : 0.0;
      row.adj_events[i] = EventKind::none;
    }
  }
  features_.push_back(row);
  return row;
}

std::vector<FeatureRow> Rsu::replay(const RsuInputLog& log, SegmentId target,
                                    const netmodel::NetworkGraph& net,
                                    const netmodel::HistoricalProfile& profile,
                                    FlowCountMode mode) {
  Rsu fresh(target, net, profile, mode);
  for (const RsuInputLog::Item& item : log.items) {
    switch (item.type) {
      case RsuInputLog::Item::Type::beacon:
        fresh.ingest_beacon(item.beacon, item.time);
        break;
      case RsuInputLog::Item::Type::upload:
        fresh.ingest_upload(item.upload, item.time);
        break;
      case RsuInputLog::Item::Type::interval:
        fresh.close_interval(item.time);
        break;
    }
  }
  return fresh.features_;
}

void RsuInputLog::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Item& item : items) {
    json j;
    j["time"] = item.time;
    switch (item.type) {
      case Item::Type::beacon: {
        j["type"] = "beacon";
        const BeaconMessage& b = item.beacon;
        j["msg"] = {{"seg", b.segment_id}, {"t", b.time},     {"sender", b.sender_id},
                    {"pos", b.position},   {"speed", b.speed}, {"tti", b.tt_index},
                    {"dir", b.direction}};
        break;
      }
      case Item::Type::upload: {
        j["type"] = "upload";
        const UploadMessage& u = item.upload;
        json recs = json::array();
        for (const auto& r : u.records)
          recs.push_back({{"seg", r.segment_id},
                          {"t", r.time},
                          {"flow", r.flow},
                          {"event", mobility::event_name(r.event)},
                          {"tt", r.current_tt}});
        j["msg"] = {{"vehicle", u.vehicle_id}, {"t", u.time}, {"tti", u.tt_index},
                    {"records", recs}};
        break;
      }
      case Item::Type::interval:
        j["type"] = "interval";
        break;
    }
    out << j.dump() << '\n';
  }
}

RsuInputLog RsuInputLog::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  RsuInputLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Item item;
    item.time = j["time"];
    std::string type = j["type"];
    if (type == "beacon") {
      item.type = Item::Type::beacon;
      const json& m = j["msg"];
      item.beacon.segment_id = m["seg"];
      item.beacon.time = m["t"];
      item.beacon.sender_id = m["sender"];
      item.beacon.position = m["pos"];
      item.beacon.speed = m["speed"];
      item.beacon.tt_index = m["tti"];
      item.beacon.direction = m["dir"];
    } else if (type == "upload") {
      item.type = Item::Type::upload;
      const json& m = j["msg"];
      item.upload.vehicle_id = m["vehicle"];
      item.upload.time = m["t"];
      item.upload.tt_index = m["tti"];
      for (const json& rj : m["records"]) {
        agent::UploadRecord r;
        r.segment_id = rj["seg"];
        r.time = rj["t"];
        r.flow = rj["flow"];
        r.event = mobility::event_from_name(rj["event"]);
        r.current_tt = rj["tt"];
        item.upload.records.push_back(r);
      }
    } else {
      item.type = Item::Type::interval;
    }
    log.items.push_back(item);
  }
  return log;
}

void Rsu::export_features_csv(const std::vector<FeatureRow>& rows,
                              const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header{"t", "tti"};
  for (int i = 1; i <= kFlowHistory; ++i) header.push_back("f_t" + std::to_string(i));
  for (int i = 1; i <= kAdjacentCount; ++i) header.push_back("f_a" + std::to_string(i));
  for (int i = 1; i <= kAdjacentCount; ++i)
    for (int c = 1; c <= kEventClasses; ++c)
      header.push_back("e_a" + std::to_string(i) + "_" + std::to_string(c));
  w.row(header);
  for (const FeatureRow& r : rows) {
    std::vector<std::string> cells{fmt_double(r.t), fmt_double(r.avg_tt_index)};
    for (double f : r.past_flows) cells.push_back(fmt_double(f));
    for (double f : r.adj_flows) cells.push_back(fmt_double(f));
    for (EventKind e : r.adj_events)
      for (int c = 0; c < kEventClasses; ++c)
        cells.push_back(mobility::event_index(e) == c ? "1" : "0");
    w.row(cells);
  }
}

std::vector<FeatureRow> Rsu::load_features_csv(const std::string& path) {
  auto rows = read_csv(path);
  std::vector<FeatureRow> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& cells = rows[i];
    if (cells.size() < 14 + 48) continue;
    FeatureRow r;
    int k = 0;
    r.t = std::stod(cells[k++]);
    r.avg_tt_index = std::stod(cells[k++]);
    for (int j = 0; j < kFlowHistory; ++j) r.past_flows[j] = std::stod(cells[k++]);
    for (int j = 0; j < kAdjacentCount; ++j) r.adj_flows[j] = std::stod(cells[k++]);
    for (int j = 0; j < kAdjacentCount; ++j) {
      int cls = 5;
      for (int c = 0; c < kEventClasses; ++c)
        if (cells[k + c] == "1") cls = c;
      k += kEventClasses;
      r.adj_events[j] = static_cast<EventKind>(cls);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace stp::rsu
