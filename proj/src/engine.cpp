#include "stp/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stp/csv.hpp"

namespace stp::engine {

namespace {

// One interpolatable comm participant for the current step.
struct Mover {
  int id = -1;
  SegmentId seg = -1;
  double start_pos = 0.0;
  double end_pos = 0.0;  // along the same (old) segment, clamped to length
  double speed = 0.0;
  int direction = 0;
  std::vector<int> candidates;  // indices into the mover vector
  bool near_rsu = false;
};

int heading_quadrant(const netmodel::NetworkGraph& net, SegmentId seg) {
  auto a = net.node_xy(net.seg(seg).from_node);
  auto b = net.node_xy(net.seg(seg).to_node);
  double dx = b[0] - a[0], dy = b[1] - a[1];
  if (std::abs(dx) >= std::abs(dy)) return dx >= 0 ? 0 : 2;
  return dy >= 0 ? 1 : 3;
}

}  // namespace

Engine::Engine(const netmodel::NetworkGraph& net, const netmodel::HistoricalProfile& profile,
               mobility::WorldParams world_params, EngineConfig config)
    : net_(&net),
      profile_(&profile),
      config_(config),
      world_(net, world_params, config.seed),
      rng_(Rng(config.seed).fork(0x636f6d6d)) {
  classifier_ = std::make_shared<agent::GroundTruthClassifier>();
  if (config_.rsu_enabled) {
    if (config_.rsu_segment < 0 || config_.rsu_segment >= static_cast<SegmentId>(net.size()))
      throw std::invalid_argument("rsu segment out of range");
    rsu_ = std::make_unique<rsu::Rsu>(config_.rsu_segment, net, profile, config_.flow_mode);
    if (config_.log_rsu_inputs) rsu_->enable_logging();
    rsu_xy_ = net.position_xy(config_.rsu_segment, net.seg(config_.rsu_segment).length * 0.5);
    if (config_.collect_alpha_samples)
      reference_ring_ = netmodel::nearest_segments(net, config_.rsu_segment, 10);
  }
}

const agent::VehicleAgent* Engine::agent_for(int vehicle_id) const {
  auto it = agents_.find(vehicle_id);
  return it == agents_.end() ? nullptr : &it->second;
}

double Engine::segment_density(SegmentId seg) const {
  if (seg < 0 || seg >= static_cast<SegmentId>(density_by_segment_.size())) return 0.0;
  return density_by_segment_[seg];
}

bool Engine::rsu_in_range(double x, double y) const {
  if (!rsu_) return false;
  double dx = x - rsu_xy_[0], dy = y - rsu_xy_[1];
  return std::sqrt(dx * dx + dy * dy) <= config_.channel.range_m;
}

double Engine::phase01(int vehicle_id) const {
  // stable per-vehicle beacon phase jitter in [0,1)
  uint64_t h = splitmix64(config_.seed ^ (0x9e3779b97f4a7c15ull * (vehicle_id + 1)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void Engine::step() {
  double t0 = world_.time();
  world_.step();
  double now = world_.time();

  for (int id : world_.last_spawned()) {
    agents_.emplace(id, agent::VehicleAgent(id, config_.alpha, config_.c_factor));
    last_upload_[id] = now;
  }

  // per-segment vehicle densities from the start-of-step snapshot
  density_by_segment_.assign(net_->size(), 0.0);
  for (const auto& v : world_.prev_vehicles())
    if (!v.obstacle) density_by_segment_[v.seg] += 1.0;
  for (size_t s = 0; s < net_->size(); ++s) {
    const auto& seg = net_->seg(static_cast<SegmentId>(s));
    density_by_segment_[s] /= seg.length * seg.lanes * 3.5;
  }

  comm_subcycles(t0);
  handle_segment_changes();

  // vehicles that stayed on their segment refresh the blended index
  {
    std::vector<int> crossed_ids;
    for (const auto& c : world_.last_changes()) crossed_ids.push_back(c.vehicle);
    for (const auto& v : world_.vehicles()) {
      if (v.obstacle) continue;
      if (std::find(crossed_ids.begin(), crossed_ids.end(), v.id) != crossed_ids.end()) continue;
      auto it = agents_.find(v.id);
      if (it != agents_.end()) it->second.refresh_index(now, v.seg, *profile_);
    }
  }

  handle_uploads();
  if (config_.scf_enabled) scf_exchange();

  if (rsu_ && std::fmod(now, 300.0) < 1e-9 && now > 0.0) rsu_->close_interval(now);

  if (config_.collect_alpha_samples && !reference_ring_.empty() && now >= 1500.0 &&
      std::fmod(now, 10.0) < 1e-9) {
    double ref = reference_index(now);
    for (const auto& v : world_.vehicles()) {
      if (v.obstacle || v.seg != config_.rsu_segment) continue;
      auto it = agents_.find(v.id);
      if (it == agents_.end()) continue;
      auto mean = it->second.table().mean_tt_index();
      if (!mean) continue;
      alpha_samples_.push_back({now, it->second.own_index(), *mean, ref});
    }
  }

  if (config_.trace_vehicle >= 0) {
    auto it = agents_.find(config_.trace_vehicle);
    if (it != agents_.end()) {
      for (const auto& v : world_.vehicles()) {
        if (v.id != config_.trace_vehicle) continue;
        trace_.push_back({now, v.seg, it->second.tt_index(), it->second.own_index(),
                          it->second.trajectory().size()});
        break;
      }
    }
  }
}

void Engine::run() {
  while (world_.time() < world_.params().horizon - 1e-9) step();
}

void Engine::comm_subcycles(double step_start) {
  const auto& prev = world_.prev_vehicles();
  std::vector<Mover> movers;
  movers.reserve(prev.size());

  // end-of-step position of each id on its old segment
  std::map<int, const mobility::VehicleState*> cur;
  for (const auto& v : world_.vehicles()) cur[v.id] = &v;

  for (const auto& v : prev) {
    if (v.obstacle) continue;
    Mover m;
    m.id = v.id;
    m.seg = v.seg;
    m.start_pos = v.pos;
    m.speed = v.speed;
    m.direction = heading_quadrant(*net_, v.seg);
    auto it = cur.find(v.id);
    if (it != cur.end() && it->second->seg == v.seg)
      m.end_pos = it->second->pos;
    else
      m.end_pos = net_->seg(v.seg).length;  // crossed or finished during the step
    movers.push_back(m);
  }
  if (movers.empty()) return;

  // candidate pruning once per step, with a margin for within-step motion
  std::vector<vanet::Endpoint> pts(movers.size());
  for (size_t i = 0; i < movers.size(); ++i) {
    auto xy = net_->position_xy(movers[i].seg, movers[i].start_pos);
    pts[i] = {movers[i].id, xy[0], xy[1], movers[i].seg, 0.0};
  }
  vanet::SpatialIndex index(config_.channel.range_m);
  index.rebuild(pts);
  double margin = 2.0 * world_.params().dt * 15.0;  // both endpoints may move
  for (size_t i = 0; i < movers.size(); ++i) {
    // receivers on another segment drop the beacon on arrival, so only
    // same-segment pairs can matter
    for (int j : index.within(pts[i].x, pts[i].y, config_.channel.range_m + margin))
      if (static_cast<size_t>(j) != i && movers[static_cast<size_t>(j)].seg == movers[i].seg)
        movers[i].candidates.push_back(j);
    std::sort(movers[i].candidates.begin(), movers[i].candidates.end());
    if (rsu_) {
      double dx = pts[i].x - rsu_xy_[0], dy = pts[i].y - rsu_xy_[1];
      movers[i].near_rsu =
          std::sqrt(dx * dx + dy * dy) <= config_.channel.range_m + margin;
    }
  }

  double dt = world_.params().dt;
  for (int k = 0; k < vanet::kSubticksPerStep; ++k) {
    for (size_t i = 0; i < movers.size(); ++i) {
      const Mover& s = movers[i];
      double tb = step_start + vanet::kBeaconPeriod * (k + phase01(s.id));
      double frac = (tb - step_start) / dt;
      double spos = s.start_pos + frac * (s.end_pos - s.start_pos);
      auto sxy = net_->position_xy(s.seg, spos);

      agent::BeaconMessage b;
      b.segment_id = s.seg;
      b.time = tb;
      b.sender_id = s.id;
      b.position = spos;
      b.speed = s.speed;
      auto ai = agents_.find(s.id);
      b.tt_index = ai == agents_.end() ? 0.0 : ai->second.tt_index();
      b.direction = s.direction;

      for (int j : s.candidates) {
        const Mover& r = movers[static_cast<size_t>(j)];
        double rpos = r.start_pos + frac * (r.end_pos - r.start_pos);
        auto rxy = net_->position_xy(r.seg, rpos);
        double dx = sxy[0] - rxy[0], dy = sxy[1] - rxy[1];
        double dist = std::sqrt(dx * dx + dy * dy);
        double p = vanet::reception_probability(dist, segment_density(r.seg), config_.channel);
        if (p > 0.0 && rng_.bernoulli(p)) {
          auto ri = agents_.find(r.id);
          if (ri != agents_.end()) ri->second.on_beacon(b, tb, r.seg);
        }
      }
      if (s.near_rsu && rsu_) {
        double dx = sxy[0] - rsu_xy_[0], dy = sxy[1] - rsu_xy_[1];
        double dist = std::sqrt(dx * dx + dy * dy);
        double p = vanet::reception_probability(dist, segment_density(config_.rsu_segment),
                                                config_.channel);
        if (p > 0.0 && rng_.bernoulli(p)) rsu_->ingest_beacon(b, tb);
      }
    }
  }
}

// Envelope draw first, then per-record draws; a failed record truncates the
// rest. Returns true when the envelope got through.
static bool deliver_upload(rsu::Rsu& rsu, const agent::UploadMessage& msg, double now,
                           double p, Rng& rng) {
  if (p <= 0.0 || !rng.bernoulli(p)) return false;
  agent::UploadMessage got = msg;
  size_t keep = 0;
  for (size_t i = 0; i < msg.records.size(); ++i) {
    if (!rng.bernoulli(p)) break;
    keep = i + 1;
  }
  got.records.resize(keep);
  rsu.ingest_upload(got, now);
  return true;
}

void Engine::handle_segment_changes() {
  double now = world_.time();
  std::map<int, const mobility::VehicleState*> cur;
  for (const auto& v : world_.vehicles()) cur[v.id] = &v;

  for (const auto& c : world_.last_changes()) {
    auto it = agents_.find(c.vehicle);
    if (it == agents_.end()) continue;
    agent::VehicleAgent& ag = it->second;
    ag.on_segment_change(c.from_seg, c.entry_time, c.exit_time, *profile_, world_, *classifier_);

    agent::UploadMessage msg = ag.make_upload(c.exit_time);
    std::array<double, 2> xy;
    auto ci = cur.find(c.vehicle);
    if (ci != cur.end())
      xy = net_->position_xy(ci->second->seg, ci->second->pos);
    else
      xy = net_->position_xy(c.from_seg, net_->seg(c.from_seg).length);

    bool delivered = false;
    if (rsu_ && rsu_in_range(xy[0], xy[1])) {
      double dx = xy[0] - rsu_xy_[0], dy = xy[1] - rsu_xy_[1];
      double p = vanet::reception_probability(std::sqrt(dx * dx + dy * dy),
                                              segment_density(config_.rsu_segment),
                                              config_.channel);
      delivered = deliver_upload(*rsu_, msg, now, p, rng_);
      last_upload_[c.vehicle] = now;
    }
    if (!delivered && config_.scf_enabled && !msg.records.empty() && ci != cur.end())
      scf_[c.vehicle].add(msg, now);

    if (c.to_seg < 0) {  // route finished; the on-board unit goes away
      agents_.erase(c.vehicle);
      scf_.erase(c.vehicle);
      last_upload_.erase(c.vehicle);
    }
  }
}

void Engine::handle_uploads() {
  if (!rsu_) return;
  double now = world_.time();
  for (const auto& v : world_.vehicles()) {
    if (v.obstacle) continue;
    auto it = agents_.find(v.id);
    if (it == agents_.end()) continue;
    double& last = last_upload_[v.id];
    if (now - last < config_.upload_period_s) continue;
    auto xy = net_->position_xy(v.seg, v.pos);
    if (!rsu_in_range(xy[0], xy[1])) continue;
    last = now;
    agent::UploadMessage msg = it->second.make_upload(now);
    if (msg.records.empty()) continue;
    double dx = xy[0] - rsu_xy_[0], dy = xy[1] - rsu_xy_[1];
    double p = vanet::reception_probability(std::sqrt(dx * dx + dy * dy),
                                            segment_density(config_.rsu_segment),
                                            config_.channel);
    deliver_upload(*rsu_, msg, now, p, rng_);
  }
}

void Engine::scf_exchange() {
  double now = world_.time();
  std::map<int, const mobility::VehicleState*> cur;
  for (const auto& v : world_.vehicles())
    if (!v.obstacle) cur[v.id] = &v;

  std::vector<std::pair<int, agent::UploadMessage>> relayed;
  for (auto& [id, buf] : scf_) {
    buf.expire(now);
    if (buf.empty()) continue;
    auto ci = cur.find(id);
    if (ci == cur.end()) continue;
    auto xy = net_->position_xy(ci->second->seg, ci->second->pos);

    if (rsu_ && rsu_in_range(xy[0], xy[1])) {
      double dx = xy[0] - rsu_xy_[0], dy = xy[1] - rsu_xy_[1];
      double p = vanet::reception_probability(std::sqrt(dx * dx + dy * dy),
                                              segment_density(config_.rsu_segment),
                                              config_.channel);
      auto& items = buf.items();
      for (size_t i = 0; i < items.size();) {
        if (deliver_upload(*rsu_, items[i], now, p, rng_))
          items.erase(items.begin() + static_cast<long>(i));
        else
          ++i;
      }
      continue;
    }

    // hand the oldest message to the nearest peer in range, one hop a second
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [oid, ov] : cur) {
      if (oid == id) continue;
      auto oxy = net_->position_xy(ov->seg, ov->pos);
      double dx = xy[0] - oxy[0], dy = xy[1] - oxy[1];
      double d = std::sqrt(dx * dx + dy * dy);
      if (d <= config_.channel.range_m && d < best_d) {
        best_d = d;
        best = oid;
      }
    }
    if (best < 0) continue;
    double p = vanet::reception_probability(best_d, segment_density(cur[best]->seg),
                                            config_.channel);
    if (p > 0.0 && rng_.bernoulli(p)) {
      relayed.emplace_back(best, buf.items().front());
      buf.items().pop_front();
    }
  }
  for (auto& [dst, msg] : relayed) scf_[dst].add(msg, now);
}

double Engine::reference_index(double t) const {
  int idx = static_cast<int>(t / 300.0) - 1;
  if (idx < 0) idx = 0;
  std::vector<std::pair<double, double>> pairs(reference_ring_.size());
  for (size_t r = 0; r < reference_ring_.size(); ++r) {
    SegmentId s = reference_ring_[r];
    double tth = profile_->travel_time(s, idx * 300.0);
    double tt = world_.log().mean_tt(s, idx);
    if (tt <= 0.0) tt = tth;
    // nearest segment last, so it carries the highest recency weight
    pairs[reference_ring_.size() - 1 - r] = {tt, tth};
  }
  return agent::compute_tt_index(pairs);
}

void Engine::export_trace_csv(const std::string& path) const {
  CsvWriter w(path);
  w.row({"t", "segment", "tt_index", "own_index", "trajectory_len"});
  for (const auto& s : trace_)
    w.row({fmt_double(s.t), std::to_string(s.seg), fmt_double(s.tt_index),
           fmt_double(s.own_index), std::to_string(s.trajectory_len)});
}

}  // namespace stp::engine
