#include "stp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "stp/csv.hpp"
#include "stp/rng.hpp"

namespace stp::dataset {

void save_stream_csv(const std::vector<StreamPoint>& stream, const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header{"run", "t", "tt_index"};
  for (int i = 0; i < rsu::kFlowHistory; ++i) header.push_back("pf" + std::to_string(i));
  for (int i = 0; i < rsu::kAdjacentCount; ++i) header.push_back("af" + std::to_string(i));
  for (int i = 0; i < rsu::kAdjacentCount; ++i) header.push_back("ev" + std::to_string(i));
  header.push_back("true_flow");
  w.row(header);
  for (const StreamPoint& p : stream) {
    std::vector<std::string> cells{std::to_string(p.run), fmt_double(p.row.t),
                                   fmt_double(p.row.avg_tt_index)};
    for (double v : p.row.past_flows) cells.push_back(fmt_double(v));
    for (double v : p.row.adj_flows) cells.push_back(fmt_double(v));
    for (auto e : p.row.adj_events) cells.push_back(mobility::event_name(e));
    cells.push_back(fmt_double(p.true_flow));
    w.row(cells);
  }
}

std::vector<StreamPoint> load_stream_csv(const std::string& path) {
  auto rows = read_csv(path);
  std::vector<StreamPoint> out;
  const size_t expected = 3 + rsu::kFlowHistory + 2 * rsu::kAdjacentCount + 1;
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() < expected) continue;
    StreamPoint p;
    p.run = std::stoi(c[0]);
    p.row.t = std::stod(c[1]);
    p.row.avg_tt_index = std::stod(c[2]);
    size_t k = 3;
    for (int j = 0; j < rsu::kFlowHistory; ++j) p.row.past_flows[j] = std::stod(c[k++]);
    for (int j = 0; j < rsu::kAdjacentCount; ++j) p.row.adj_flows[j] = std::stod(c[k++]);
    for (int j = 0; j < rsu::kAdjacentCount; ++j)
      p.row.adj_events[j] = mobility::event_from_name(c[k++]);
    p.true_flow = std::stod(c[k]);
    out.push_back(p);
  }
  return out;
}

std::vector<RawExample> label_with_window(const std::vector<StreamPoint>& stream) {
  std::vector<RawExample> out;
  // group by run, preserving order
  std::vector<int> runs;
  for (const StreamPoint& p : stream)
    if (runs.empty() || runs.back() != p.run) runs.push_back(p.run);
  for (int run : runs) {
    std::vector<const StreamPoint*> pts;
    for (const StreamPoint& p : stream)
      if (p.run == run) pts.push_back(&p);
    if (pts.size() < 5) continue;
    for (size_t i = 0; i + 4 < pts.size(); ++i) {
      RawExample ex;
      ex.row = pts[i]->row;
      ex.f5 = pts[i + 1]->true_flow;
      ex.f15 = pts[i + 3]->true_flow;
      ex.f20 = pts[i + 4]->true_flow;
      ex.run = run;
      out.push_back(ex);
    }
  }
  return out;
}

static double percentile(std::vector<double> sorted, double q) {
  size_t n = sorted.size();
  double idx = q * (n - 1);
  size_t lo = static_cast<size_t>(std::floor(idx));
  size_t hi = static_cast<size_t>(std::ceil(idx));
  double frac = idx - lo;
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

int ClassBinning::discretize(double flow) const {
  int cls = 0;
  for (double t : thresholds)
    if (flow > t) ++cls;
  return cls;
}

double ClassBinning::midpoint(int cls) const {
  double lower, upper;
  switch (cls) {
    case 0: lower = lo; upper = thresholds[0]; break;
    case 1: lower = thresholds[0]; upper = thresholds[1]; break;
    case 2: lower = thresholds[1]; upper = thresholds[2]; break;
    default: lower = thresholds[2]; upper = hi; break;
  }
  return 0.5 * (lower + upper);
}

ClassBinning fit_binning(std::vector<double> training_flows) {
  if (training_flows.empty()) throw std::invalid_argument("no training flows");
  std::sort(training_flows.begin(), training_flows.end());
  if (training_flows.front() == training_flows.back())
    throw std::invalid_argument("degenerate flow sample: all values equal");
  ClassBinning b;
  b.thresholds = {percentile(training_flows, 0.25), percentile(training_flows, 0.50),
                  percentile(training_flows, 0.75)};
  b.lo = training_flows.front();
  b.hi = training_flows.back();
  return b;
}

Normalizer fit_normalizer(std::vector<double> training_flows) {
  Normalizer n;
  if (training_flows.empty()) return n;
  std::sort(training_flows.begin(), training_flows.end());
  double p99 = percentile(training_flows, 0.99);
  n.flow_divisor = p99 > 0.0 ? p99 : 1.0;
  return n;
}

LabeledExample materialize(const RawExample& raw, const Normalizer& norm,
                           const ClassBinning& bins) {
  LabeledExample ex;
  ex.x = rsu::to_feature_vector(raw.row, norm.time_span_s, norm.flow_divisor);
  ex.y5 = bins.discretize(raw.f5);
  ex.y15 = bins.discretize(raw.f15);
  ex.y20 = bins.discretize(raw.f20);
  ex.f5 = raw.f5;
  ex.f15 = raw.f15;
  ex.f20 = raw.f20;
  ex.t = raw.row.t;
  ex.run = raw.run;
  return ex;
}

std::vector<std::vector<int>> make_folds(int n_examples, const SplitPlan& plan) {
  std::vector<std::vector<int>> out;
  Rng root(plan.seed);
  for (int rep = 0; rep < plan.repeats; ++rep) {
    Rng rng = root.fork(rep);
    std::vector<int> order(n_examples);
    for (int i = 0; i < n_examples; ++i) order[i] = i;
    for (int i = n_examples - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    std::vector<int> assign(n_examples, 0);
    for (int i = 0; i < n_examples; ++i) assign[order[i]] = i % plan.folds;
    out.push_back(std::move(assign));
  }
  return out;
}

Dataset build_dataset(const std::vector<RawExample>& examples, double test_fraction,
                      int runs_per_block) {
  Dataset ds;
  // Temporal holdout. With runs_per_block == 0 the final fraction of each
  // run's own timeline is test; otherwise runs are consecutive recordings of
  // the same scenario and the final fraction of each block of runs is held
  // out whole, so training still covers the full time-of-day range.
  std::map<int, std::vector<const RawExample*>> by_run;
  for (const RawExample& ex : examples) by_run[ex.run].push_back(&ex);

  std::map<int, bool> run_is_test;
  if (runs_per_block > 0) {
    int n_test_runs = static_cast<int>(std::floor(runs_per_block * test_fraction));
    int idx = 0;
    for (auto& [run, pts] : by_run) {
      run_is_test[run] = (idx % runs_per_block) >= runs_per_block - n_test_runs;
      ++idx;
    }
  }

  std::vector<const RawExample*> train_raw, test_raw;
  for (auto& [run, pts] : by_run) {
    if (runs_per_block > 0) {
      auto& dst = run_is_test[run] ? test_raw : train_raw;
      for (const RawExample* p : pts) dst.push_back(p);
      continue;
    }
    size_t n_test = static_cast<size_t>(std::floor(pts.size() * test_fraction));
    size_t n_train = pts.size() - n_test;
    for (size_t i = 0; i < pts.size(); ++i)
      (i < n_train ? train_raw : test_raw).push_back(pts[i]);
  }
  if (train_raw.empty()) throw std::invalid_argument("empty training split");

  std::vector<double> train_flows;
  for (const RawExample* ex : train_raw) {
    train_flows.push_back(ex->f5);
    train_flows.push_back(ex->f15);
    train_flows.push_back(ex->f20);
    for (double f : ex->row.past_flows) train_flows.push_back(f);
  }
  ds.norm = fit_normalizer(train_flows);
  ds.binning = fit_binning(train_flows);

  for (const RawExample* ex : train_raw) ds.train.push_back(materialize(*ex, ds.norm, ds.binning));
  for (const RawExample* ex : test_raw) ds.test.push_back(materialize(*ex, ds.norm, ds.binning));

  for (auto& [run, pts] : by_run) {
    size_t n_train;
    if (runs_per_block > 0) {
      n_train = run_is_test[run] ? 0 : pts.size();
    } else {
      size_t n_test = static_cast<size_t>(std::floor(pts.size() * test_fraction));
      n_train = pts.size() - n_test;
    }
    std::vector<double> series;
    // past flows newest-first: past_flows[0] of example i is the flow of the
    // interval ending at its timestamp
    for (size_t i = 0; i < n_train; ++i) series.push_back(pts[i]->row.past_flows[0]);
    ds.train_flow_series.push_back(std::move(series));
    std::vector<double> full;
    for (const RawExample* p : pts) full.push_back(p->row.past_flows[0]);
    ds.full_flow_series.push_back(std::move(full));
    ds.series_train_len.push_back(static_cast<int>(n_train));
    ds.series_run_ids.push_back(run);
  }
  return ds;
}

using nlohmann::json;

static void write_examples(CsvWriter& w, const std::vector<LabeledExample>& exs,
                           const std::string& split) {
  for (const LabeledExample& ex : exs) {
    std::vector<std::string> cells{split, std::to_string(ex.run), fmt_double(ex.t)};
    for (double v : ex.x) cells.push_back(fmt_double(v));
    cells.push_back(std::to_string(ex.y5));
    cells.push_back(std::to_string(ex.y15));
    cells.push_back(std::to_string(ex.y20));
    cells.push_back(fmt_double(ex.f5));
    cells.push_back(fmt_double(ex.f15));
    cells.push_back(fmt_double(ex.f20));
    w.row(cells);
  }
}

void save_dataset_csv(const Dataset& ds, const std::string& path,
                      const std::string& meta_path) {
  CsvWriter w(path);
  std::vector<std::string> header{"split", "run", "t"};
  for (int i = 0; i < rsu::kFeatureDim; ++i) header.push_back("x" + std::to_string(i));
  for (const char* c : {"y5", "y15", "y20", "f5", "f15", "f20"}) header.push_back(c);
  w.row(header);
  write_examples(w, ds.train, "train");
  write_examples(w, ds.test, "test");

  json meta;
  meta["thresholds"] = ds.binning.thresholds;
  meta["flow_lo"] = ds.binning.lo;
  meta["flow_hi"] = ds.binning.hi;
  meta["flow_divisor"] = ds.norm.flow_divisor;
  meta["time_span_s"] = ds.norm.time_span_s;
  meta["train_flow_series"] = ds.train_flow_series;
  meta["full_flow_series"] = ds.full_flow_series;
  meta["series_train_len"] = ds.series_train_len;
  meta["series_run_ids"] = ds.series_run_ids;
  std::ofstream out(meta_path);
  if (!out) throw std::runtime_error("cannot write " + meta_path);
  out << meta.dump(2) << '\n';
}

Dataset load_dataset_csv(const std::string& path, const std::string& meta_path) {
  Dataset ds;
  std::ifstream min(meta_path);
  if (!min) throw std::runtime_error("cannot read " + meta_path);
  json meta = json::parse(min);
  ds.binning.thresholds = meta["thresholds"];
  ds.binning.lo = meta["flow_lo"];
  ds.binning.hi = meta["flow_hi"];
  ds.norm.flow_divisor = meta["flow_divisor"];
  ds.norm.time_span_s = meta["time_span_s"];
  ds.train_flow_series = meta["train_flow_series"].get<std::vector<std::vector<double>>>();
  if (meta.contains("full_flow_series")) {
    ds.full_flow_series = meta["full_flow_series"].get<std::vector<std::vector<double>>>();
    ds.series_train_len = meta["series_train_len"].get<std::vector<int>>();
    ds.series_run_ids = meta["series_run_ids"].get<std::vector<int>>();
  }

  auto rows = read_csv(path);
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() < 3 + rsu::kFeatureDim + 6) continue;
    LabeledExample ex;
    ex.run = std::stoi(c[1]);
    ex.t = std::stod(c[2]);
    for (int j = 0; j < rsu::kFeatureDim; ++j) ex.x[j] = std::stod(c[3 + j]);
    int k = 3 + rsu::kFeatureDim;
    ex.y5 = std::stoi(c[k]);
    ex.y15 = std::stoi(c[k + 1]);
    ex.y20 = std::stoi(c[k + 2]);
    ex.f5 = std::stod(c[k + 3]);
    ex.f15 = std::stod(c[k + 4]);
    ex.f20 = std::stod(c[k + 5]);
    (c[0] == "train" ? ds.train : ds.test).push_back(ex);
  }
  return ds;
}

}  // namespace stp::dataset
