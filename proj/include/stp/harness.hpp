#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stp/arima.hpp"
#include "stp/dataset.hpp"
#include "stp/engine.hpp"
#include "stp/learner.hpp"

namespace stp::harness {

using netmodel::SegmentId;

// ---------------------------------------------------------------- metrics

double rmse(const std::vector<double>& predicted, const std::vector<double>& truth);

// Class -> midpoint of its flow bin, on the normalized [0,1] flow scale.
double class_midpoint_normalized(int cls, const dataset::ClassBinning& bins,
                                 const dataset::Normalizer& norm);

// -------------------------------------------------------------- scenarios

struct NetworkSpec {
  int rows = 5;
  int cols = 5;
  double segment_length = 150.0;
  int lanes = 2;
  uint64_t seed = 7;
};

struct ScenarioConfig {
  std::string name = "base";
  NetworkSpec network;
  double horizon = 7200.0;
  double demand_rate = 0.2;  // network-wide departures, veh/s
  vanet::ChannelModel channel;
  double alpha = agent::kDefaultAlpha;
  double c_factor = agent::kDefaultCongestionFactor;
  bool scf = true;
  SegmentId target = -1;  // -1: central segment of the grid
  std::vector<mobility::ScenarioEvent> events;
  // extra demand toward a destination (special-event crowds)
  double special_rate = 0.0;
  SegmentId special_destination = -1;
  double special_start = 0.0;
  double special_end = 0.0;
  uint64_t seed = 1;
};

std::string scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const std::string& text);

netmodel::NetworkGraph build_network(const NetworkSpec& spec);
SegmentId central_segment(const netmodel::NetworkGraph& net);

// Base plus the five event kinds, each reproducible from (config, seed).
std::vector<ScenarioConfig> make_suite(const ScenarioConfig& base);

// Per-run variant: reseeds the scenario and sweeps blocking events over the
// position x lane x duration grid.
ScenarioConfig vary_scenario(const ScenarioConfig& scn, int run_index);

// Average interval travel times / flows over event-free runs, floored by
// free flow; this is the TTh / expected-flow reference everything reads.
netmodel::HistoricalProfile build_profile(const ScenarioConfig& base, int n_runs = 3);

struct RunResult {
  std::vector<rsu::FeatureRow> est_rows;   // what the RSU assembled
  std::vector<rsu::FeatureRow> true_rows;  // same times, from ground truth
  std::vector<double> true_flows;          // label flow per true row
  mobility::GroundTruthLog log;
  long injected = 0;
  std::vector<engine::AlphaSample> alpha_samples;
};

RunResult run_scenario(const ScenarioConfig& cfg, const netmodel::HistoricalProfile& profile,
                       uint64_t seed, bool collect_alpha = false,
                       rsu::RsuInputLog* capture_log = nullptr, int trace_vehicle = -1,
                       const std::string& trace_csv = "");

// Eq.-1 index over the ten segments nearest `target`, evaluated from the
// completed interval before t.
double ground_truth_index(const netmodel::NetworkGraph& net,
                          const netmodel::HistoricalProfile& profile,
                          const mobility::GroundTruthLog& log, SegmentId target, double t);

enum class FeatureSource {
  estimated,            // RSU rows as assembled over the air
  ground_truth,         // rows rebuilt from the ground-truth log
  truth_with_est_tti,   // ground truth, TTindex swapped for the estimate
  truth_with_est_flows  // ground truth, flows swapped for the estimates
};

std::vector<dataset::StreamPoint> to_stream(const RunResult& run, int run_id,
                                            FeatureSource source);

struct SuiteData {
  dataset::Dataset ds;
  std::map<int, std::string> scenario_of_run;
};

// Runs every suite scenario `runs_per_scenario` times (varied per run) and
// assembles the labeled dataset.
SuiteData build_suite_dataset(const ScenarioConfig& base,
                              const netmodel::HistoricalProfile& profile,
                              int runs_per_scenario, FeatureSource source);

// ------------------------------------------------------------ experiments

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_run;  // one score per fold x repeat
};

struct ExperimentReport {
  // model -> task ("t5"/"t15"/"t20") -> pooled-test stats
  std::map<std::string, std::map<std::string, CellStats>> by_model_task;
  // scenario -> stats for the full model on t+15
  std::map<std::string, CellStats> by_scenario;
  // paired ordering fractions over the fold x repeat runs
  double frac_mtlcv_below_ann = 0.0;
  double frac_ann_below_arima = 0.0;
  double frac_mtla_between = 0.0;
  double frac_mtlb_between = 0.0;
  double arima_rmse_t15 = 0.0;
  uint64_t seed = 0;

  void save_csv(const std::string& dir) const;  // table1/table2/long CSVs
  std::string markdown() const;
};

struct ComparisonConfig {
  dataset::SplitPlan plan;
  learner::TrainConfig nn;
  int arima_max_pq = 10;
  std::vector<learner::VariantKind> variants{
      learner::VariantKind::mtlcv, learner::VariantKind::ann, learner::VariantKind::mtla,
      learner::VariantKind::mtlb};
};

// Trains every variant per fold/repeat on the training split (the held-out
// fold is validation), scores on the temporal test split, and fits ARIMA on
// each run's training flow series.
ExperimentReport run_comparison(const dataset::Dataset& ds,
                                const std::map<int, std::string>& scenario_of_run,
                                const ComparisonConfig& cc);

// Per-run ARIMA walk-forward over the test examples, t+15 only; scores are
// normalized flows compared directly.
double arima_test_rmse(const dataset::Dataset& ds, int max_pq);

// -------------------------------------------------------------- studies

struct AblationEntry {
  std::string group;
  double rmse = 0.0;
  double delta = 0.0;  // vs the unablated baseline
};

// 19 groups: time, TTindex, past flows, each adjacent's flow, each
// adjacent's event block.
std::vector<AblationEntry> feature_ablation(const dataset::Dataset& ds,
                                            const learner::TrainConfig& cfg);

struct CommImpactRow {
  double base_loss = 0.0;
  double collision_coefficient = 0.0;
  double rmse_truth = 0.0;
  double rmse_est_tti = 0.0;   // truth features, estimated TTindex
  double rmse_est_flow = 0.0;  // truth features, estimated flows
  double delta_tti() const { return rmse_est_tti - rmse_truth; }
  double delta_flow() const { return rmse_est_flow - rmse_truth; }
};

std::vector<CommImpactRow> comm_impact_study(const ScenarioConfig& incident,
                                             const netmodel::HistoricalProfile& profile,
                                             const std::vector<vanet::ChannelModel>& grid,
                                             const learner::TrainConfig& cfg);

struct DensityPoint {
  double density = 0.0;   // vehicles per m^2
  double accuracy = 0.0;  // detected / true over one beacon cycle
};

// Monte-Carlo sweep on a single covered segment.
std::vector<DensityPoint> density_accuracy_curve(const vanet::ChannelModel& channel,
                                                 const std::vector<double>& densities,
                                                 int trials, uint64_t seed);

// Smallest c in {1.0, 1.1, ..., 2.5} keeping >= 99% of event-free travel
// times under c * TTh.
double calibrate_congestion_factor(const std::vector<std::pair<double, double>>& ott_tth);

struct AlphaReport {
  std::vector<double> alphas;
  std::vector<double> rmses;
  double best_alpha = 0.0;
};

AlphaReport calibrate_alpha(const ScenarioConfig& cfg,
                            const netmodel::HistoricalProfile& profile, uint64_t seed);

}  // namespace stp::harness
