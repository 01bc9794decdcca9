#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "stp/dataset.hpp"
#include "stp/rng.hpp"

using namespace stp;
using namespace stp::dataset;

namespace {

std::vector<StreamPoint> make_stream(const std::vector<double>& flows, int run = 0) {
  std::vector<StreamPoint> out;
  for (size_t i = 0; i < flows.size(); ++i) {
    StreamPoint p;
    p.row.t = 1500.0 + 300.0 * i;
    p.row.past_flows[0] = flows[i];
    p.true_flow = flows[i];
    p.run = run;
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("sliding window takes labels one, three and four steps ahead") {
  std::vector<double> flows;
  for (int i = 1; i <= 9; ++i) flows.push_back(static_cast<double>(i));
  auto examples = label_with_window(make_stream(flows));
  REQUIRE(examples.size() == 5);
  // first window: labels from the 2nd, 4th and 5th data points
  CHECK(examples[0].f5 == doctest::Approx(2.0));
  CHECK(examples[0].f15 == doctest::Approx(4.0));
  CHECK(examples[0].f20 == doctest::Approx(5.0));
  // next window slides by one point
  CHECK(examples[1].f5 == doctest::Approx(3.0));
  CHECK(examples[1].f15 == doctest::Approx(5.0));
  CHECK(examples[1].f20 == doctest::Approx(6.0));
  // timestamps stay ordered
  for (size_t i = 1; i < examples.size(); ++i)
    CHECK(examples[i].row.t > examples[i - 1].row.t);
}

TEST_CASE("two hour stream yields twenty examples") {
  std::vector<double> flows(24, 7.0);
  auto examples = label_with_window(make_stream(flows));
  CHECK(examples.size() == 20);
  for (const auto& ex : examples) {
    CHECK(ex.f5 == doctest::Approx(7.0));
    CHECK(ex.f15 == doctest::Approx(7.0));
    CHECK(ex.f20 == doctest::Approx(7.0));
  }
}

TEST_CASE("short streams and run boundaries") {
  std::vector<double> flows(4, 1.0);
  CHECK(label_with_window(make_stream(flows)).empty());

  auto a = make_stream(std::vector<double>(6, 1.0), 0);
  auto b = make_stream(std::vector<double>(6, 2.0), 1);
  a.insert(a.end(), b.begin(), b.end());
  auto examples = label_with_window(a);
  CHECK(examples.size() == 4);  // 2 per run, never spanning the boundary
  for (const auto& ex : examples) CHECK(ex.f5 == doctest::Approx(ex.run == 0 ? 1.0 : 2.0));
}

TEST_CASE("quartile thresholds match the percentile oracle") {
  std::vector<double> flows;
  for (int i = 1; i <= 100; ++i) flows.push_back(static_cast<double>(i));
  auto bins = fit_binning(flows);
  CHECK(bins.thresholds[0] == doctest::Approx(25.75));
  CHECK(bins.thresholds[1] == doctest::Approx(50.5));
  CHECK(bins.thresholds[2] == doctest::Approx(75.25));

  // balanced classes: 25% each, within one example
  std::array<int, 4> counts{};
  for (double f : flows) counts[static_cast<size_t>(bins.discretize(f))]++;
  for (int c : counts) CHECK(std::abs(c - 25) <= 1);

  CHECK_THROWS(fit_binning(std::vector<double>(10, 3.0)));
  CHECK_THROWS(fit_binning({}));
}

TEST_CASE("discretize uses strict thresholds") {
  ClassBinning bins;
  bins.thresholds = {10.0, 20.0, 30.0};
  bins.lo = 0.0;
  bins.hi = 40.0;
  CHECK(bins.discretize(5.0) == 0);
  CHECK(bins.discretize(10.0) == 0);
  CHECK(bins.discretize(20.0) == 1);  // equal to threshold 2 -> class 1
  CHECK(bins.discretize(35.0) == 3);
  CHECK(bins.midpoint(0) == doctest::Approx(5.0));
  CHECK(bins.midpoint(1) == doctest::Approx(15.0));
  CHECK(bins.midpoint(3) == doctest::Approx(35.0));
}

TEST_CASE("folds partition every repeat deterministically") {
  SplitPlan plan;
  plan.seed = 77;
  auto folds = make_folds(100, plan);
  REQUIRE(folds.size() == 20);
  for (const auto& rep : folds) {
    std::array<int, 5> sizes{};
    for (int f : rep) {
      REQUIRE(f >= 0);
      REQUIRE(f < 5);
      sizes[static_cast<size_t>(f)]++;
    }
    for (int s : sizes) CHECK(s == 20);
  }
  auto again = make_folds(100, plan);
  CHECK(folds == again);
  plan.seed = 78;
  CHECK(make_folds(100, plan) != folds);
  // repeats differ from each other
  CHECK(folds[0] != folds[1]);
}

TEST_CASE("dataset split is temporal and fits constants on train only") {
  Rng rng(5);
  std::vector<StreamPoint> stream;
  for (int run = 0; run < 2; ++run) {
    std::vector<double> flows;
    for (int i = 0; i < 30; ++i) flows.push_back(5.0 + rng.uniform() * 20.0 + run);
    auto s = make_stream(flows, run);
    stream.insert(stream.end(), s.begin(), s.end());
  }
  auto ds = build_dataset(label_with_window(stream));
  CHECK(!ds.train.empty());
  CHECK(!ds.test.empty());
  for (const auto& tr : ds.train)
    for (const auto& te : ds.test)
      if (tr.run == te.run) CHECK(tr.t < te.t);

  // thresholds derive from training flows only
  std::vector<double> train_flows;
  for (const auto& ex : ds.train) {
    train_flows.push_back(ex.f5);
    train_flows.push_back(ex.f15);
    train_flows.push_back(ex.f20);
  }
  double max_train = *std::max_element(train_flows.begin(), train_flows.end());
  CHECK(ds.binning.thresholds[2] < max_train);
  CHECK(ds.norm.flow_divisor > 0.0);
  CHECK(ds.full_flow_series.size() == 2);
  CHECK(ds.series_train_len.size() == 2);
}

TEST_CASE("dataset csv round trips") {
  std::vector<double> flows;
  Rng rng(8);
  for (int i = 0; i < 30; ++i) flows.push_back(1.0 + 25.0 * rng.uniform());
  auto ds = build_dataset(label_with_window(make_stream(flows)));
  auto dir = std::filesystem::temp_directory_path();
  auto csv = (dir / "ds.csv").string();
  auto meta = (dir / "ds.meta.json").string();
  save_dataset_csv(ds, csv, meta);
  auto loaded = load_dataset_csv(csv, meta);
  REQUIRE(loaded.train.size() == ds.train.size());
  REQUIRE(loaded.test.size() == ds.test.size());
  CHECK(loaded.binning.thresholds == ds.binning.thresholds);
  CHECK(loaded.norm.flow_divisor == doctest::Approx(ds.norm.flow_divisor));
  for (size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(loaded.train[i].y15 == ds.train[i].y15);
    CHECK(loaded.train[i].x[1] == doctest::Approx(ds.train[i].x[1]));
  }
  std::filesystem::remove(csv);
  std::filesystem::remove(meta);
}
