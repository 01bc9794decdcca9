#include "stp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "stp/csv.hpp"

namespace stp::harness {

using nlohmann::json;

// ---------------------------------------------------------------- metrics

double rmse(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("rmse needs equal nonempty sequences");
  double sse = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    double d = predicted[i] - truth[i];
    sse += d * d;
  }
  return std::sqrt(sse / predicted.size());
}

double class_midpoint_normalized(int cls, const dataset::ClassBinning& bins,
                                 const dataset::Normalizer& norm) {
  return bins.midpoint(cls) / norm.flow_divisor;
}

// -------------------------------------------------------------- scenarios

netmodel::NetworkGraph build_network(const NetworkSpec& spec) {
  return netmodel::build_grid_network(spec.rows, spec.cols, spec.segment_length, spec.lanes,
                                      spec.seed);
}

SegmentId central_segment(const netmodel::NetworkGraph& net) {
  double cx = (net.cols - 1) * net.spacing * 0.5;
  double cy = (net.rows - 1) * net.spacing * 0.5;
  SegmentId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& s : net.segments) {
    auto xy = net.position_xy(s.id, s.length * 0.5);
    double dx = xy[0] - cx, dy = xy[1] - cy;
    double d = dx * dx + dy * dy;
    if (d < best_d - 1e-9) {
      best_d = d;
      best = s.id;
    }
  }
  return best;
}

static json event_to_json(const mobility::ScenarioEvent& e) {
  json j;
  j["kind"] = mobility::event_name(e.kind);
  j["segment"] = e.segment;
  j["blocked_lanes"] = e.blocked_lanes;
  j["lane_position"] = static_cast<int>(e.lane_position);
  j["start"] = e.start;
  j["duration"] = e.duration;
  j["weather_speed_factor"] = e.weather_speed_factor;
  j["event_destination"] = e.event_destination;
  j["demand_multiplier"] = e.demand_multiplier;
  return j;
}

static mobility::ScenarioEvent event_from_json(const json& j) {
  mobility::ScenarioEvent e;
  e.kind = mobility::event_from_name(j["kind"]);
  e.segment = j["segment"];
  e.blocked_lanes = j["blocked_lanes"].get<std::vector<int>>();
  e.lane_position = static_cast<mobility::LanePosition>(j["lane_position"].get<int>());
  e.start = j["start"];
  e.duration = j["duration"];
  e.weather_speed_factor = j["weather_speed_factor"];
  e.event_destination = j["event_destination"];
  e.demand_multiplier = j["demand_multiplier"];
  return e;
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["network"] = {{"rows", cfg.network.rows},
                  {"cols", cfg.network.cols},
                  {"segment_length", cfg.network.segment_length},
                  {"lanes", cfg.network.lanes},
                  {"seed", cfg.network.seed}};
  j["horizon"] = cfg.horizon;
  j["demand_rate"] = cfg.demand_rate;
  j["channel"] = {{"range_m", cfg.channel.range_m},
                  {"base_loss", cfg.channel.base_loss},
                  {"collision_coefficient", cfg.channel.collision_coefficient}};
  j["alpha"] = cfg.alpha;
  j["c_factor"] = cfg.c_factor;
  j["scf"] = cfg.scf;
  j["target"] = cfg.target;
  j["special_rate"] = cfg.special_rate;
  j["special_destination"] = cfg.special_destination;
  j["special_start"] = cfg.special_start;
  j["special_end"] = cfg.special_end;
  j["seed"] = cfg.seed;
  j["events"] = json::array();
  for (const auto& e : cfg.events) j["events"].push_back(event_to_json(e));
  return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
  json j = json::parse(text);
  ScenarioConfig cfg;
  cfg.name = j.value("name", "base");
  if (j.contains("network")) {
    const json& n = j["network"];
    cfg.network.rows = n.value("rows", cfg.network.rows);
    cfg.network.cols = n.value("cols", cfg.network.cols);
    cfg.network.segment_length = n.value("segment_length", cfg.network.segment_length);
    cfg.network.lanes = n.value("lanes", cfg.network.lanes);
    cfg.network.seed = n.value("seed", cfg.network.seed);
  }
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.demand_rate = j.value("demand_rate", cfg.demand_rate);
  if (j.contains("channel")) {
    const json& c = j["channel"];
    cfg.channel.range_m = c.value("range_m", cfg.channel.range_m);
    cfg.channel.base_loss = c.value("base_loss", cfg.channel.base_loss);
    cfg.channel.collision_coefficient =
        c.value("collision_coefficient", cfg.channel.collision_coefficient);
  }
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.c_factor = j.value("c_factor", cfg.c_factor);
  cfg.scf = j.value("scf", cfg.scf);
  cfg.target = j.value("target", cfg.target);
  cfg.special_rate = j.value("special_rate", cfg.special_rate);
  cfg.special_destination = j.value("special_destination", cfg.special_destination);
  cfg.special_start = j.value("special_start", cfg.special_start);
  cfg.special_end = j.value("special_end", cfg.special_end);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("events"))
    for (const auto& je : j["events"]) cfg.events.push_back(event_from_json(je));
  return cfg;
}

std::vector<ScenarioConfig> make_suite(const ScenarioConfig& base) {
  std::vector<ScenarioConfig> out;
  ScenarioConfig b = base;
  b.name = "base";
  out.push_back(b);

  {
    ScenarioConfig s = base;
    s.name = "incident";
    mobility::ScenarioEvent e;
    e.kind = mobility::EventKind::accident;
    e.segment = -1;  // resolved to the target at run time
    e.blocked_lanes = {0};
    e.lane_position = mobility::LanePosition::middle;
    e.start = 4400.0;
    e.duration = 2800.0;
    s.events.push_back(e);
    out.push_back(s);
  }
  {
    ScenarioConfig s = base;
    s.name = "workzone";
    mobility::ScenarioEvent e;
    e.kind = mobility::EventKind::workzone;
    e.segment = -1;
    e.blocked_lanes = {0};
    e.lane_position = mobility::LanePosition::beginning;
    e.start = 2700.0;
    e.duration = 4500.0;
    s.events.push_back(e);
    out.push_back(s);
  }
  {
    ScenarioConfig s = base;
    s.name = "weather";
    mobility::ScenarioEvent e;
    e.kind = mobility::EventKind::weather;
    e.start = 3000.0;
    e.duration = 4200.0;
    e.weather_speed_factor = 0.55;
    s.events.push_back(e);
    out.push_back(s);
  }
  {
    ScenarioConfig s = base;
    s.name = "special_event";
    s.special_rate = base.demand_rate * 0.25;
    s.special_destination = -1;
    s.special_start = 4200.0;
    s.special_end = 6600.0;
    mobility::ScenarioEvent e;
    e.kind = mobility::EventKind::special_event;
    e.event_destination = -1;
    e.start = 4200.0;
    e.duration = 2400.0;
    s.events.push_back(e);
    out.push_back(s);
  }
  {
    ScenarioConfig s = base;
    s.name = "recurrent";
    mobility::ScenarioEvent e;
    e.kind = mobility::EventKind::recurrent;
    e.segment = -1;
    e.start = 3900.0;
    e.duration = 3300.0;
    e.demand_multiplier = 1.4;
    s.events.push_back(e);
    out.push_back(s);
  }
  return out;
}

ScenarioConfig vary_scenario(const ScenarioConfig& scn, int run_index) {
  ScenarioConfig out = scn;
  out.seed = splitmix64(scn.seed ^ (0x51edull * (run_index + 1)));
  // blocking events sweep position x lane x duration so their timing and
  // geometry cannot be memorized from the clock feature
  uint64_t h = splitmix64(out.seed ^ 0xb10cull);
  for (auto& e : out.events) {
    if (e.kind != mobility::EventKind::accident && e.kind != mobility::EventKind::workzone)
      continue;
    e.lane_position = static_cast<mobility::LanePosition>(h % 3);
    e.blocked_lanes = {static_cast<int>((h >> 2) % 2)};
    double jitter = static_cast<double>((h >> 4) % 5) * 300.0;  // 0..20 min
    if (e.kind == mobility::EventKind::accident) {
      e.start = 3600.0 + jitter;
      e.duration = 1800.0 + static_cast<double>((h >> 8) % 4) * 300.0;
    } else {
      e.start = 1800.0 + jitter;
      e.duration = 3900.0 + static_cast<double>((h >> 8) % 4) * 300.0;
    }
    h = splitmix64(h);
  }
  return out;
}

SuiteData build_suite_dataset(const ScenarioConfig& base,
                              const netmodel::HistoricalProfile& profile,
                              int runs_per_scenario, FeatureSource source) {
  SuiteData out;
  std::vector<dataset::StreamPoint> stream;
  int run_id = 0;
  for (const ScenarioConfig& scn : make_suite(base)) {
    for (int r = 0; r < runs_per_scenario; ++r) {
      ScenarioConfig v = vary_scenario(scn, r);
      RunResult rr = run_scenario(v, profile, v.seed);
      auto pts = to_stream(rr, run_id, source);
      stream.insert(stream.end(), pts.begin(), pts.end());
      out.scenario_of_run[run_id] = scn.name;
      ++run_id;
    }
  }
  out.ds = dataset::build_dataset(dataset::label_with_window(stream), 0.2, runs_per_scenario);
  return out;
}

// extra demand over a window, departures shifted into [start, end)
static mobility::TripDemand windowed_demand(const netmodel::NetworkGraph& net, double rate,
                                            double start, double end, uint64_t seed) {
  mobility::TripDemand d = mobility::generate_base_demand(net, rate, end - start, seed);
  for (auto& trip : d.trips) trip.depart += start;
  return d;
}

// Piecewise time-of-day shape (mean factor 1.0): quiet start, peak in the
// middle hours, tapering off. Gives the flow series a learnable trend.
//
// On top of the volume curve, a commute pattern redirects a clock-dependent
// share of trips toward the city center: off-peak traffic is spread evenly,
// peak traffic funnels into the central segments. This gives the monitored
// downtown area a wide daily flow range (a handful of vehicles per interval
// at night, dozens at the peak), so the flow classes are far apart compared
// to the count noise.
static mobility::TripDemand shaped_base_demand(const netmodel::NetworkGraph& net, double rate,
                                               double horizon, uint64_t seed) {
  // anchor factors, interpolated linearly and renormalized to mean 1.0
  static const double kAnchor[7] = {0.35, 0.55, 1.15, 1.75, 1.9, 1.4, 0.7};
  constexpr int kAnchors = 7;
  double mean = 0.0;
  for (int a = 0; a + 1 < kAnchors; ++a) mean += 0.5 * (kAnchor[a] + kAnchor[a + 1]);
  mean /= kAnchors - 1;

  SegmentId center = central_segment(net);
  std::vector<SegmentId> core = netmodel::nearest_segments(net, center, 5);
  Rng bias_rng(splitmix64(seed ^ 0xb1a5ull));

  mobility::TripDemand all;
  const int n_windows = std::max(1, static_cast<int>(horizon / 120.0));
  double window = horizon / n_windows;
  for (int w = 0; w < n_windows; ++w) {
    double u = (w + 0.5) / n_windows * (kAnchors - 1);
    int a = std::min(kAnchors - 2, static_cast<int>(u));
    double factor = (kAnchor[a] + (u - a) * (kAnchor[a + 1] - kAnchor[a])) / mean;
    auto d = windowed_demand(net, rate * factor, w * window, (w + 1) * window,
                             splitmix64(seed + 7919ull * w));
    // commute share toward the core, ramping in above ~mean volume
    double bias = 0.35 * std::clamp((factor - 0.8) / 1.1, 0.0, 1.0);
    for (auto& trip : d.trips) {
      if (bias > 0.0 && bias_rng.uniform() < bias) {
        SegmentId dest = core[static_cast<size_t>(
            bias_rng.uniform_int(0, static_cast<int>(core.size()) - 1))];
        if (dest != trip.origin) trip.destination = dest;
      }
    }
    all.trips.insert(all.trips.end(), d.trips.begin(), d.trips.end());
  }
  std::sort(all.trips.begin(), all.trips.end(),
            [](const mobility::Trip& a, const mobility::Trip& b) { return a.depart < b.depart; });
  return all;
}

netmodel::HistoricalProfile build_profile(const ScenarioConfig& base, int n_runs) {
  netmodel::NetworkGraph net = build_network(base.network);
  netmodel::HistoricalProfile prof = netmodel::free_flow_profile(net, base.horizon);
  int bins = prof.bins();
  std::vector<std::vector<double>> tt_sum(net.size(), std::vector<double>(bins, 0.0));
  std::vector<std::vector<int>> tt_cnt(net.size(), std::vector<int>(bins, 0));
  std::vector<std::vector<double>> flow_sum(net.size(), std::vector<double>(bins, 0.0));

  for (int r = 0; r < n_runs; ++r) {
    mobility::WorldParams wp;
    wp.horizon = base.horizon;
    uint64_t seed = splitmix64(base.seed + 1000003ull * (r + 1));
    mobility::World world(net, wp, seed);
    world.add_demand(
        shaped_base_demand(net, base.demand_rate, base.horizon, seed ^ 0x5eedull));
    world.run_to(base.horizon);
    const auto& log = world.log();
    for (size_t s = 0; s < net.size(); ++s)
      for (int b = 0; b < bins && b < log.intervals(); ++b) {
        int f = log.flow(static_cast<SegmentId>(s), b);
        flow_sum[s][b] += f;
        if (f > 0) {
          tt_sum[s][b] += log.mean_tt(static_cast<SegmentId>(s), b);
          tt_cnt[s][b] += 1;
        }
      }
  }
  for (size_t s = 0; s < net.size(); ++s)
    for (int b = 0; b < bins; ++b) {
      if (tt_cnt[s][b] > 0)
        prof.tth_seconds[s][b] =
            std::max(prof.tth_seconds[s][b], tt_sum[s][b] / tt_cnt[s][b]);
      prof.expected_flow[s][b] = flow_sum[s][b] / n_runs;
    }
  return prof;
}

double ground_truth_index(const netmodel::NetworkGraph& net,
                          const netmodel::HistoricalProfile& profile,
                          const mobility::GroundTruthLog& log, SegmentId target, double t) {
  std::vector<SegmentId> ring = netmodel::nearest_segments(net, target, 10);
  int idx = static_cast<int>(t / 300.0) - 1;
  if (idx < 0) idx = 0;
  std::vector<std::pair<double, double>> pairs(ring.size());
  for (size_t r = 0; r < ring.size(); ++r) {
    double tth = profile.travel_time(ring[r], idx * 300.0);
    double tt = log.mean_tt(ring[r], idx);
    if (tt <= 0.0) tt = tth;
    pairs[ring.size() - 1 - r] = {tt, tth};  // nearest gets the newest weight
  }
  return agent::compute_tt_index(pairs);
}

RunResult run_scenario(const ScenarioConfig& cfg, const netmodel::HistoricalProfile& profile,
                       uint64_t seed, bool collect_alpha, rsu::RsuInputLog* capture_log,
                       int trace_vehicle, const std::string& trace_csv) {
  netmodel::NetworkGraph net = build_network(cfg.network);
  SegmentId target = cfg.target < 0 ? central_segment(net) : cfg.target;

  mobility::WorldParams wp;
  wp.horizon = cfg.horizon;
  engine::EngineConfig ec;
  ec.channel = cfg.channel;
  ec.rsu_segment = target;
  ec.alpha = cfg.alpha;
  ec.c_factor = cfg.c_factor;
  ec.scf_enabled = cfg.scf;
  ec.log_rsu_inputs = capture_log != nullptr;
  ec.collect_alpha_samples = collect_alpha;
  ec.trace_vehicle = trace_vehicle;
  ec.seed = seed;
  engine::Engine eng(net, profile, wp, ec);

  eng.world().add_demand(
      shaped_base_demand(net, cfg.demand_rate, cfg.horizon, seed ^ 0x5eedull));
  if (cfg.special_rate > 0.0) {
    SegmentId dest = cfg.special_destination < 0 ? target : cfg.special_destination;
    eng.world().add_demand(mobility::generate_special_event_demand(
        net, dest, cfg.special_rate, cfg.special_start, cfg.special_end, seed ^ 0x5bc1ull));
  }
  for (mobility::ScenarioEvent e : cfg.events) {
    if (e.segment < 0 &&
        (e.kind == mobility::EventKind::accident || e.kind == mobility::EventKind::workzone ||
         e.kind == mobility::EventKind::recurrent))
      e.segment = target;
    if (e.kind == mobility::EventKind::special_event && e.event_destination < 0)
      e.event_destination = target;
    eng.world().inject_event(e);
    if (e.kind == mobility::EventKind::recurrent && e.demand_multiplier > 1.0)
      eng.world().add_demand(windowed_demand(net, cfg.demand_rate * (e.demand_multiplier - 1.0),
                                             e.start, e.start + e.duration, seed ^ 0x3ec3ull));
  }

  eng.run();

  RunResult rr;
  rr.log = eng.world().log();
  rr.injected = eng.world().injected_count();
  if (eng.rsu()) rr.est_rows = eng.rsu()->features();
  if (capture_log && eng.rsu()) *capture_log = eng.rsu()->input_log();
  if (collect_alpha) rr.alpha_samples = eng.alpha_samples();
  if (!trace_csv.empty()) eng.export_trace_csv(trace_csv);

  auto adj = netmodel::adjacent_segments(net, target);
  for (double T = 1500.0; T <= cfg.horizon + 1e-9; T += 300.0) {
    int idx = static_cast<int>(T / 300.0) - 1;
    rsu::FeatureRow row;
    row.t = T;
    row.avg_tt_index = ground_truth_index(net, profile, rr.log, target, T);
    for (int j = 0; j < rsu::kFlowHistory; ++j)
      row.past_flows[j] = rr.log.flow(target, idx - j);
    for (int j = 0; j < rsu::kAdjacentCount; ++j) {
      row.adj_flows[j] = rr.log.flow(adj[j], idx);
      row.adj_events[j] = rr.log.event(adj[j], idx);
    }
    rr.true_rows.push_back(row);
    rr.true_flows.push_back(static_cast<double>(rr.log.flow(target, idx)));
  }
  return rr;
}

std::vector<dataset::StreamPoint> to_stream(const RunResult& run, int run_id,
                                            FeatureSource source) {
  std::vector<dataset::StreamPoint> out;
  if (source == FeatureSource::estimated) {
    for (const auto& row : run.est_rows) {
      dataset::StreamPoint p;
      p.row = row;
      int idx = static_cast<int>(row.t / 300.0) - 1;
      // the target flow of the emission interval is the newest past flow
      p.true_flow = row.past_flows[0];
      (void)idx;
      p.run = run_id;
      out.push_back(p);
    }
    return out;
  }

  std::map<double, const rsu::FeatureRow*> est_by_t;
  for (const auto& row : run.est_rows) est_by_t[row.t] = &row;

  for (size_t i = 0; i < run.true_rows.size(); ++i) {
    const rsu::FeatureRow& truth = run.true_rows[i];
    dataset::StreamPoint p;
    p.row = truth;
    p.true_flow = run.true_flows[i];
    p.run = run_id;
    if (source == FeatureSource::truth_with_est_tti ||
        source == FeatureSource::truth_with_est_flows) {
      auto it = est_by_t.find(truth.t);
      if (it == est_by_t.end()) continue;  // keep variants aligned
      if (source == FeatureSource::truth_with_est_tti) {
        p.row.avg_tt_index = it->second->avg_tt_index;
      } else {
        p.row.past_flows = it->second->past_flows;
        p.row.adj_flows = it->second->adj_flows;
      }
    }
    out.push_back(p);
  }
  return out;
}

// ------------------------------------------------------------ experiments

static int head_index(const learner::Architecture& arch, learner::Task task) {
  for (size_t i = 0; i < arch.heads.size(); ++i)
    if (arch.heads[i] == task) return static_cast<int>(i);
  return -1;
}

static int label_for(const dataset::LabeledExample& ex, learner::Task task) {
  switch (task) {
    case learner::Task::t5: return ex.y5;
    case learner::Task::t15: return ex.y15;
    default: return ex.y20;
  }
}

static std::vector<learner::Sample> make_samples(const learner::Architecture& arch,
                                                 const std::vector<dataset::LabeledExample>& exs) {
  std::vector<learner::Sample> out;
  out.reserve(exs.size());
  for (const auto& ex : exs) {
    learner::Sample s;
    s.x = ex.x;
    for (learner::Task t : arch.heads) s.targets.push_back(label_for(ex, t));
    out.push_back(std::move(s));
  }
  return out;
}

static double eval_task_rmse(const learner::MlpParams& params, int head,
                             const std::vector<dataset::LabeledExample>& test,
                             learner::Task task, const dataset::ClassBinning& bins,
                             const dataset::Normalizer& norm) {
  std::vector<double> pred, truth;
  for (const auto& ex : test) {
    auto out = learner::forward(params, ex.x);
    int cls = learner::predict_class(out, static_cast<size_t>(head));
    pred.push_back(class_midpoint_normalized(cls, bins, norm));
    truth.push_back(class_midpoint_normalized(label_for(ex, task), bins, norm));
  }
  return rmse(pred, truth);
}

double arima_test_rmse(const dataset::Dataset& ds, int max_pq) {
  std::vector<double> pred, truth;
  arima::ArimaModel carried;  // most recent fit, reused for fully held-out runs
  bool have_carried = false;
  for (size_t s = 0; s < ds.full_flow_series.size(); ++s) {
    const auto& full = ds.full_flow_series[s];
    int train_len = ds.series_train_len[s];
    int rid = ds.series_run_ids[s];
    arima::ArimaModel model;
    if (train_len >= 8) {
      std::vector<double> head(full.begin(), full.begin() + train_len);
      model = arima::fit_best_arima(head, max_pq);
      if (model.ok) {
        carried = model;
        have_carried = true;
      }
    } else if (have_carried) {
      model = carried;
    }
    if (!model.ok) continue;

    // test examples of this run, in temporal order
    std::vector<const dataset::LabeledExample*> test;
    for (const auto& ex : ds.test)
      if (ex.run == rid) test.push_back(&ex);
    std::sort(test.begin(), test.end(),
              [](const auto* a, const auto* b) { return a->t < b->t; });
    for (size_t j = 0; j < test.size(); ++j) {
      size_t pos = static_cast<size_t>(train_len) + j;  // position in the run series
      if (pos >= full.size()) break;
      if (pos + 1 < 8) continue;  // too little observed history to condition on
      std::vector<double> hist(full.begin(), full.begin() + static_cast<long>(pos) + 1);
      auto fc = arima::forecast_from(model, hist, 3);
      if (fc.size() < 3) continue;
      pred.push_back(fc[2] / ds.norm.flow_divisor);
      // same truth encoding as the classifiers, so scores are commensurable
      truth.push_back(
          class_midpoint_normalized(ds.binning.discretize(test[j]->f15), ds.binning, ds.norm));
    }
  }
  if (pred.empty()) return 0.0;
  return rmse(pred, truth);
}

static void finalize(CellStats& c) {
  if (c.per_run.empty()) return;
  double s = 0.0;
  for (double v : c.per_run) s += v;
  c.mean = s / c.per_run.size();
  double ss = 0.0;
  for (double v : c.per_run) ss += (v - c.mean) * (v - c.mean);
  c.stddev = c.per_run.size() > 1 ? std::sqrt(ss / (c.per_run.size() - 1)) : 0.0;
}

static const char* task_name(learner::Task t) {
  switch (t) {
    case learner::Task::t5: return "t5";
    case learner::Task::t15: return "t15";
    default: return "t20";
  }
}

ExperimentReport run_comparison(const dataset::Dataset& ds,
                                const std::map<int, std::string>& scenario_of_run,
                                const ComparisonConfig& cc) {
  ExperimentReport rep;
  rep.seed = cc.plan.seed;
  rep.arima_rmse_t15 = arima_test_rmse(ds, cc.arima_max_pq);

  // per-scenario test subsets
  std::map<std::string, std::vector<dataset::LabeledExample>> test_by_scn;
  for (const auto& ex : ds.test) {
    auto it = scenario_of_run.find(ex.run);
    std::string scn = it == scenario_of_run.end() ? "unknown" : it->second;
    test_by_scn[scn].push_back(ex);
  }

  struct VariantCtx {
    learner::VariantKind kind;
    learner::Architecture arch;
    std::vector<learner::Sample> train_samples;
  };
  std::vector<VariantCtx> ctxs;
  for (learner::VariantKind k : cc.variants) {
    VariantCtx c;
    c.kind = k;
    c.arch = learner::make_variant(k);
    c.train_samples = make_samples(c.arch, ds.train);
    ctxs.push_back(std::move(c));
  }

  auto folds = dataset::make_folds(static_cast<int>(ds.train.size()), cc.plan);

  int n_runs = 0, cv_below_ann = 0, ann_below_arima = 0, a_between = 0, b_between = 0;
  for (int rep_i = 0; rep_i < cc.plan.repeats; ++rep_i) {
    for (int f = 0; f < cc.plan.folds; ++f) {
      std::map<learner::VariantKind, double> r15;
      for (size_t vi = 0; vi < ctxs.size(); ++vi) {
        VariantCtx& vc = ctxs[vi];
        std::vector<learner::Sample> tr, va;
        for (size_t i = 0; i < vc.train_samples.size(); ++i)
          (folds[rep_i][i] == f ? va : tr).push_back(vc.train_samples[i]);

        learner::TrainConfig cfg = cc.nn;
        cfg.epochs = vc.arch.default_epochs;
        cfg.dropout = vc.arch.default_dropout;
        cfg.seed = splitmix64(cc.plan.seed ^ (0x100ull * rep_i + f) ^ (0x10000ull * (vi + 1)));
        auto res = learner::train(vc.arch, tr, va, cfg);

        const char* mname = learner::variant_name(vc.kind);
        for (size_t h = 0; h < vc.arch.heads.size(); ++h) {
          learner::Task task = vc.arch.heads[h];
          double r = eval_task_rmse(res.params, static_cast<int>(h), ds.test, task,
                                    ds.binning, ds.norm);
          rep.by_model_task[mname][task_name(task)].per_run.push_back(r);
          if (task == learner::Task::t15) r15[vc.kind] = r;
        }
        if (vc.kind == learner::VariantKind::mtlcv) {
          int h15 = head_index(vc.arch, learner::Task::t15);
          for (auto& [scn, subset] : test_by_scn)
            if (!subset.empty())
              rep.by_scenario[scn].per_run.push_back(eval_task_rmse(
                  res.params, h15, subset, learner::Task::t15, ds.binning, ds.norm));
        }
      }
      ++n_runs;
      double cv = r15.count(learner::VariantKind::mtlcv) ? r15[learner::VariantKind::mtlcv] : 0;
      double ann = r15.count(learner::VariantKind::ann) ? r15[learner::VariantKind::ann] : 0;
      if (cv < ann) ++cv_below_ann;
      if (ann < rep.arima_rmse_t15) ++ann_below_arima;
      if (r15.count(learner::VariantKind::mtla) &&
          cv < r15[learner::VariantKind::mtla] && r15[learner::VariantKind::mtla] < ann)
        ++a_between;
      if (r15.count(learner::VariantKind::mtlb) &&
          cv < r15[learner::VariantKind::mtlb] && r15[learner::VariantKind::mtlb] < ann)
        ++b_between;
    }
  }

  for (auto& [m, tasks] : rep.by_model_task)
    for (auto& [t, cell] : tasks) finalize(cell);
  for (auto& [s, cell] : rep.by_scenario) finalize(cell);
  if (n_runs > 0) {
    rep.frac_mtlcv_below_ann = static_cast<double>(cv_below_ann) / n_runs;
    rep.frac_ann_below_arima = static_cast<double>(ann_below_arima) / n_runs;
    rep.frac_mtla_between = static_cast<double>(a_between) / n_runs;
    rep.frac_mtlb_between = static_cast<double>(b_between) / n_runs;
  }
  return rep;
}

void ExperimentReport::save_csv(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir + "/table1.csv");
    w.row({"model", "task", "mean_rmse", "std_rmse", "n"});
    for (const auto& [m, tasks] : by_model_task)
      for (const auto& [t, cell] : tasks)
        w.row({m, t, fmt_double(cell.mean), fmt_double(cell.stddev),
               std::to_string(cell.per_run.size())});
    w.row({"arima", "t15", fmt_double(arima_rmse_t15), "0", "1"});
  }
  {
    CsvWriter w(dir + "/table2.csv");
    w.row({"scenario", "mean_rmse", "std_rmse", "n"});
    for (const auto& [s, cell] : by_scenario)
      w.row({s, fmt_double(cell.mean), fmt_double(cell.stddev),
             std::to_string(cell.per_run.size())});
  }
  {
    CsvWriter w(dir + "/long.csv");
    w.row({"model", "task", "scenario", "run", "rmse"});
    for (const auto& [m, tasks] : by_model_task)
      for (const auto& [t, cell] : tasks)
        for (size_t i = 0; i < cell.per_run.size(); ++i)
          w.row({m, t, "all", std::to_string(i), fmt_double(cell.per_run[i])});
    for (const auto& [s, cell] : by_scenario)
      for (size_t i = 0; i < cell.per_run.size(); ++i)
        w.row({"mtlcv", "t15", s, std::to_string(i), fmt_double(cell.per_run[i])});
    w.row({"arima", "t15", "all", "0", fmt_double(arima_rmse_t15)});
  }
  {
    std::ofstream out(dir + "/orderings.csv");
    out << "comparison,fraction\n";
    out << "mtlcv_below_ann," << fmt_double(frac_mtlcv_below_ann) << "\n";
    out << "ann_below_arima," << fmt_double(frac_ann_below_arima) << "\n";
    out << "mtla_between," << fmt_double(frac_mtla_between) << "\n";
    out << "mtlb_between," << fmt_double(frac_mtlb_between) << "\n";
  }
}

std::string ExperimentReport::markdown() const {
  std::ostringstream os;
  os << "| model | t+5 | t+15 | t+20 |\n|---|---|---|---|\n";
  auto cell = [&](const std::string& m, const char* t) -> std::string {
    auto mi = by_model_task.find(m);
    if (mi == by_model_task.end()) return "-";
    auto ti = mi->second.find(t);
    if (ti == mi->second.end()) return "-";
    std::ostringstream c;
    c.precision(4);
    c << ti->second.mean;
    return c.str();
  };
  for (const std::string& m : {std::string("mtlcv"), std::string("mtla"),
                               std::string("mtlb"), std::string("ann")})
    os << "| " << m << " | " << cell(m, "t5") << " | " << cell(m, "t15") << " | "
       << cell(m, "t20") << " |\n";
  std::ostringstream a;
  a.precision(4);
  a << arima_rmse_t15;
  os << "| arima | - | " << a.str() << " | - |\n";
  os << "\n| scenario | t+15 rmse |\n|---|---|\n";
  for (const auto& [s, c] : by_scenario) {
    std::ostringstream v;
    v.precision(4);
    v << c.mean;
    os << "| " << s << " | " << v.str() << " |\n";
  }
  return os.str();
}

// -------------------------------------------------------------- studies

namespace {

struct FeatureGroup {
  std::string name;
  std::vector<int> idx;
};

std::vector<FeatureGroup> feature_groups() {
  std::vector<FeatureGroup> g;
  g.push_back({"time", {0}});
  g.push_back({"tt_index", {1}});
  g.push_back({"past_flows", {2, 3, 4, 5}});
  for (int j = 0; j < rsu::kAdjacentCount; ++j)
    g.push_back({"adj_flow_" + std::to_string(j), {6 + j}});
  for (int j = 0; j < rsu::kAdjacentCount; ++j) {
    FeatureGroup e{"adj_events_" + std::to_string(j), {}};
    for (int k = 0; k < rsu::kEventClasses; ++k)
      e.idx.push_back(14 + j * rsu::kEventClasses + k);
    g.push_back(e);
  }
  return g;
}

}  // namespace

std::vector<AblationEntry> feature_ablation(const dataset::Dataset& ds,
                                            const learner::TrainConfig& cfg) {
  learner::Architecture arch = learner::make_variant(learner::VariantKind::mtlcv);
  int h15 = head_index(arch, learner::Task::t15);

  auto run_once = [&](const std::vector<int>& zero_idx) {
    std::vector<dataset::LabeledExample> train = ds.train, test = ds.test;
    for (auto* split : {&train, &test})
      for (auto& ex : *split)
        for (int i : zero_idx) ex.x[static_cast<size_t>(i)] = 0.0;
    // hold out the tail of the training split for validation
    size_t n_val = std::max<size_t>(1, train.size() / 5);
    std::vector<dataset::LabeledExample> tr(train.begin(), train.end() - n_val);
    std::vector<dataset::LabeledExample> va(train.end() - n_val, train.end());
    learner::TrainConfig c = cfg;
    c.epochs = arch.default_epochs;
    c.dropout = arch.default_dropout;
    auto res = learner::train(arch, make_samples(arch, tr), make_samples(arch, va), c);
    return eval_task_rmse(res.params, h15, test, learner::Task::t15, ds.binning, ds.norm);
  };

  double baseline = run_once({});
  std::vector<AblationEntry> out;
  out.push_back({"none", baseline, 0.0});
  for (const FeatureGroup& g : feature_groups())
    out.push_back({g.name, 0.0, 0.0});
  size_t i = 1;
  for (const FeatureGroup& g : feature_groups()) {
    double r = run_once(g.idx);
    out[i].rmse = r;
    out[i].delta = r - baseline;
    ++i;
  }
  return out;
}

std::vector<CommImpactRow> comm_impact_study(const ScenarioConfig& incident,
                                             const netmodel::HistoricalProfile& profile,
                                             const std::vector<vanet::ChannelModel>& grid,
                                             const learner::TrainConfig& cfg) {
  std::vector<CommImpactRow> out;
  for (const vanet::ChannelModel& ch : grid) {
    ScenarioConfig sc = incident;
    sc.channel = ch;
    RunResult rr = run_scenario(sc, profile, sc.seed);

    auto truth = to_stream(rr, 0, FeatureSource::truth_with_est_tti);
    // the hybrid streams define the aligned time set; rebuild the pure-truth
    // stream on those same times
    std::vector<dataset::StreamPoint> truth_aligned;
    {
      std::set<double> times;
      for (const auto& p : truth) times.insert(p.row.t);
      auto all_truth = to_stream(rr, 0, FeatureSource::ground_truth);
      for (const auto& p : all_truth)
        if (times.count(p.row.t)) truth_aligned.push_back(p);
    }
    auto tti = to_stream(rr, 0, FeatureSource::truth_with_est_tti);
    auto flw = to_stream(rr, 0, FeatureSource::truth_with_est_flows);
    if (truth_aligned.size() < 10) continue;

    auto raw_truth = dataset::label_with_window(truth_aligned);
    dataset::Dataset ds = dataset::build_dataset(raw_truth);
    if (ds.train.empty() || ds.test.empty()) continue;

    learner::Architecture arch = learner::make_variant(learner::VariantKind::mtlcv);
    int h15 = head_index(arch, learner::Task::t15);
    size_t n_val = std::max<size_t>(1, ds.train.size() / 5);
    std::vector<dataset::LabeledExample> tr(ds.train.begin(), ds.train.end() - n_val);
    std::vector<dataset::LabeledExample> va(ds.train.end() - n_val, ds.train.end());
    learner::TrainConfig c = cfg;
    c.epochs = arch.default_epochs;
    c.dropout = arch.default_dropout;
    auto res = learner::train(arch, make_samples(arch, tr), make_samples(arch, va), c);

    auto hybrid_test = [&](const std::vector<dataset::StreamPoint>& stream) {
      auto raws = dataset::label_with_window(stream);
      std::vector<dataset::LabeledExample> test;
      size_t n_test = ds.test.size();
      for (size_t i = raws.size() - std::min(n_test, raws.size()); i < raws.size(); ++i)
        test.push_back(dataset::materialize(raws[i], ds.norm, ds.binning));
      return eval_task_rmse(res.params, h15, test, learner::Task::t15, ds.binning, ds.norm);
    };

    CommImpactRow row;
    row.base_loss = ch.base_loss;
    row.collision_coefficient = ch.collision_coefficient;
    row.rmse_truth =
        eval_task_rmse(res.params, h15, ds.test, learner::Task::t15, ds.binning, ds.norm);
    row.rmse_est_tti = hybrid_test(tti);
    row.rmse_est_flow = hybrid_test(flw);
    out.push_back(row);
  }
  return out;
}

std::vector<DensityPoint> density_accuracy_curve(const vanet::ChannelModel& channel,
                                                 const std::vector<double>& densities,
                                                 int trials, uint64_t seed) {
  // one covered segment: 500 m, two 3.5 m lanes, observer at the roadside
  const double length = 500.0, width = 7.0;
  const double area = length * width;
  Rng rng(seed);
  std::vector<DensityPoint> out;
  for (double density : densities) {
    int n = std::max(1, static_cast<int>(std::lround(density * area)));
    long detected = 0, total = 0;
    for (int t = 0; t < trials; ++t) {
      for (int v = 0; v < n; ++v) {
        double x = rng.uniform() * length;
        double y = rng.uniform() * width;
        double dx = x - length * 0.5, dy = y;
        double dist = std::sqrt(dx * dx + dy * dy);
        double p = vanet::reception_probability(dist, density, channel);
        if (p > 0.0 && rng.bernoulli(p)) ++detected;
        ++total;
      }
    }
    out.push_back({density, total > 0 ? static_cast<double>(detected) / total : 0.0});
  }
  return out;
}

double calibrate_congestion_factor(const std::vector<std::pair<double, double>>& ott_tth) {
  if (ott_tth.empty()) return 1.0;
  for (double c = 1.0; c <= 2.5 + 1e-9; c += 0.1) {
    size_t ok = 0;
    for (const auto& [ott, tth] : ott_tth)
      if (ott <= c * tth + 1e-9) ++ok;
    if (static_cast<double>(ok) / ott_tth.size() >= 0.99) return std::round(c * 10.0) / 10.0;
  }
  return 2.5;
}

AlphaReport calibrate_alpha(const ScenarioConfig& cfg,
                            const netmodel::HistoricalProfile& profile, uint64_t seed) {
  RunResult rr = run_scenario(cfg, profile, seed, /*collect_alpha=*/true);
  AlphaReport rep;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 20; ++i) {
    double a = 0.05 * i;
    double sse = 0.0;
    size_t n = rr.alpha_samples.size();
    for (const auto& s : rr.alpha_samples) {
      double v = (1.0 - a) * s.own + a * s.neighbor_mean;
      sse += (v - s.reference) * (v - s.reference);
    }
    double r = n > 0 ? std::sqrt(sse / n) : 0.0;
    rep.alphas.push_back(a);
    rep.rmses.push_back(r);
    if (r < best) {
      best = r;
      rep.best_alpha = a;
    }
  }
  return rep;
}

}  // namespace stp::harness
