#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stp/rsu.hpp"

namespace stp::dataset {

struct StreamPoint {
  rsu::FeatureRow row;
  double true_flow = 0.0;  // ground-truth flow for the emission interval
  int run = 0;             // scenario run the point came from
};

// Example with raw future flows attached; class labels come later, once
// binning has been fit on the training split.
struct RawExample {
  rsu::FeatureRow row;
  double f5 = 0.0;   // flow one 5-min step ahead
  double f15 = 0.0;  // three steps ahead
  double f20 = 0.0;  // four steps ahead
  int run = 0;
};

// Raw per-interval trace rows, one file per simulation run; the
// build-dataset stage stitches several of these into a labeled dataset.
void save_stream_csv(const std::vector<StreamPoint>& stream, const std::string& path);
std::vector<StreamPoint> load_stream_csv(const std::string& path);

// 4-period windowing: example i takes labels from stream flows at i+1,
// i+3 and i+4; trailing points without four future samples are dropped.
// Windows never span run boundaries.
std::vector<RawExample> label_with_window(const std::vector<StreamPoint>& stream);

// Three ascending thresholds defining four flow classes.
struct ClassBinning {
  std::array<double, 3> thresholds{};
  double lo = 0.0;  // training min / max, for bin midpoints
  double hi = 0.0;

  int discretize(double flow) const;  // thresholds strictly below flow
  double midpoint(int cls) const;     // raw-flow midpoint of the class bin
};

// Quartile thresholds from training flows; throws on a degenerate
// (all-equal) sample.
ClassBinning fit_binning(std::vector<double> training_flows);

struct Normalizer {
  double flow_divisor = 1.0;  // 99th percentile of training flows
  double time_span_s = 7200.0;
};

Normalizer fit_normalizer(std::vector<double> training_flows);

struct LabeledExample {
  std::array<double, rsu::kFeatureDim> x{};
  int y5 = 0, y15 = 0, y20 = 0;
  double f5 = 0.0, f15 = 0.0, f20 = 0.0;  // raw flows kept for RMSE bridging
  double t = 0.0;
  int run = 0;
};

LabeledExample materialize(const RawExample& raw, const Normalizer& norm,
                           const ClassBinning& bins);

struct SplitPlan {
  int folds = 5;
  int repeats = 20;
  uint64_t seed = 0;
};

// [repeat][example] -> fold index; deterministic per seed, fresh shuffle
// per repeat.
std::vector<std::vector<int>> make_folds(int n_examples, const SplitPlan& plan);

struct Dataset {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;  // temporal holdout, final 20% per run
  ClassBinning binning;
  Normalizer norm;
  // training-split flow series per run, for the time-series baseline
  std::vector<std::vector<double>> train_flow_series;
  // full (train+test) series per run, for walk-forward evaluation
  std::vector<std::vector<double>> full_flow_series;
  std::vector<int> series_train_len;  // aligned with full_flow_series
  std::vector<int> series_run_ids;
};

// Temporal split, then binning/normalization fit on the training part only.
// runs_per_block > 0 treats each consecutive block of runs as one scenario's
// timeline and holds out its final runs whole; 0 holds out the tail of every
// individual run instead.
Dataset build_dataset(const std::vector<RawExample>& examples, double test_fraction = 0.2,
                      int runs_per_block = 0);

void save_dataset_csv(const Dataset& ds, const std::string& path,
                      const std::string& meta_path);
Dataset load_dataset_csv(const std::string& path, const std::string& meta_path);

}  // namespace stp::dataset
