// Command-line front end: simulation, dataset assembly, training,
// evaluation, reporting and the parameter studies. Every run is fully
// deterministic in the single --seed flag.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stp/csv.hpp"
#include "stp/harness.hpp"
#include "stp/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

harness::ScenarioConfig load_scenario(const std::string& path) {
  if (path.empty()) return harness::ScenarioConfig{};
  return harness::scenario_from_json(read_file(path));
}

learner::TrainConfig load_train_config(const std::string& path) {
  learner::TrainConfig cfg;
  if (path.empty()) return cfg;
  json j = json::parse(read_file(path));
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  return cfg;
}

std::string meta_path_for(const std::string& dataset_path) {
  return dataset_path + ".meta.json";
}

std::vector<learner::Sample> to_samples(const learner::Architecture& arch,
                                        const std::vector<dataset::LabeledExample>& exs) {
  std::vector<learner::Sample> out;
  for (const auto& ex : exs) {
    learner::Sample s;
    s.x = ex.x;
    for (auto t : arch.heads)
      s.targets.push_back(t == learner::Task::t5 ? ex.y5
                          : t == learner::Task::t15 ? ex.y15 : ex.y20);
    out.push_back(std::move(s));
  }
  return out;
}

double test_rmse_for_head(const learner::MlpParams& params, int head, learner::Task task,
                          const dataset::Dataset& ds) {
  std::vector<double> pred, truth;
  for (const auto& ex : ds.test) {
    int cls = learner::predict_class(learner::forward(params, ex.x), head);
    pred.push_back(harness::class_midpoint_normalized(cls, ds.binning, ds.norm));
    double f = task == learner::Task::t5 ? ex.f5 : task == learner::Task::t15 ? ex.f15 : ex.f20;
    truth.push_back(
        harness::class_midpoint_normalized(ds.binning.discretize(f), ds.binning, ds.norm));
  }
  return harness::rmse(pred, truth);
}

int cmd_simulate(const std::string& config, const std::string& network, uint64_t seed,
                 const std::string& out_dir, int runs, int trace_vehicle) {
  fs::create_directories(out_dir);
  harness::ScenarioConfig cfg = load_scenario(config);
  cfg.seed = seed;

  netmodel::NetworkGraph net;
  netmodel::HistoricalProfile profile;
  if (!network.empty()) {
    netmodel::load_network(network, net, profile);
  } else {
    harness::ScenarioConfig event_free = cfg;
    event_free.events.clear();
    event_free.special_rate = 0.0;
    profile = harness::build_profile(event_free);
    net = harness::build_network(cfg.network);
    netmodel::save_network(net, profile, out_dir + "/network.json");
  }

  for (int r = 0; r < runs; ++r) {
    harness::ScenarioConfig v = harness::vary_scenario(cfg, r);
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "%03d", r);
    std::string trace_csv =
        trace_vehicle >= 0 ? out_dir + "/vehicle_trace_" + suffix + ".csv" : "";
    harness::RunResult rr =
        harness::run_scenario(v, profile, v.seed, false, nullptr, trace_vehicle, trace_csv);
    auto stream = harness::to_stream(rr, r, harness::FeatureSource::estimated);
    dataset::save_stream_csv(stream, out_dir + "/trace_" + suffix + ".csv");
    rr.log.export_csv(out_dir + "/truth_" + suffix + ".csv");
  }
  std::ofstream(out_dir + "/scenario.json") << harness::scenario_to_json(cfg) << "\n";
  std::cout << "wrote " << runs << " run(s) to " << out_dir << "\n";
  return 0;
}

int cmd_build_dataset(const std::string& traces, const std::string& out, double test_fraction,
                      int runs_per_block) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(traces)) {
    std::string name = e.path().filename().string();
    if (name.rfind("trace_", 0) == 0 && e.path().extension() == ".csv")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no trace_*.csv files in " + traces);

  std::vector<dataset::StreamPoint> stream;
  int run_id = 0;
  for (const std::string& f : files) {
    auto pts = dataset::load_stream_csv(f);
    for (auto& p : pts) p.run = run_id;  // one file, one run
    stream.insert(stream.end(), pts.begin(), pts.end());
    ++run_id;
  }
  auto ds = dataset::build_dataset(dataset::label_with_window(stream), test_fraction,
                                   runs_per_block);
  dataset::save_dataset_csv(ds, out, meta_path_for(out));
  std::cout << "dataset: " << ds.train.size() << " train / " << ds.test.size()
            << " test examples\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& model,
              const std::string& config, uint64_t seed, const std::string& out) {
  auto ds = dataset::load_dataset_csv(dataset_path, meta_path_for(dataset_path));
  auto arch = learner::make_variant(learner::variant_from_name(model));
  learner::TrainConfig cfg = load_train_config(config);
  if (config.empty()) {
    cfg.epochs = arch.default_epochs;
    cfg.dropout = arch.default_dropout;
  }
  cfg.seed = seed;

  // hold out one fold of the training split for the validation snapshot
  dataset::SplitPlan plan;
  plan.repeats = 1;
  plan.seed = seed;
  auto folds = dataset::make_folds(static_cast<int>(ds.train.size()), plan);
  auto samples = to_samples(arch, ds.train);
  std::vector<learner::Sample> tr, va;
  for (size_t i = 0; i < samples.size(); ++i)
    (folds[0][i] == 0 ? va : tr).push_back(samples[i]);

  auto res = learner::train(arch, tr, va, cfg);
  learner::save_params(res.params, out);
  {
    CsvWriter w(out + ".losses.csv");
    w.row({"epoch", "train_loss", "val_loss"});
    for (size_t e = 0; e < res.train_losses.size(); ++e)
      w.row({std::to_string(e + 1), fmt_double(res.train_losses[e]),
             e < res.val_losses.size() ? fmt_double(res.val_losses[e]) : ""});
  }
  std::cout << "trained " << model << ": " << res.params.parameter_count()
            << " parameters -> " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& models_dir, const std::string& dataset_path,
                 const std::string& report) {
  auto ds = dataset::load_dataset_csv(dataset_path, meta_path_for(dataset_path));
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(models_dir))
    if (e.path().extension() == ".json" &&
        e.path().filename().string().find("losses") == std::string::npos)
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());

  CsvWriter w(report);
  w.row({"model", "task", "rmse"});
  for (const std::string& f : files) {
    learner::MlpParams params;
    try {
      params = learner::load_params(f);
    } catch (const std::exception&) {
      continue;  // not a parameter file
    }
    std::string name = fs::path(f).stem().string();
    for (size_t h = 0; h < params.arch.heads.size(); ++h) {
      learner::Task task = params.arch.heads[h];
      const char* tn = task == learner::Task::t5 ? "t5"
                       : task == learner::Task::t15 ? "t15" : "t20";
      w.row({name, tn,
             fmt_double(test_rmse_for_head(params, static_cast<int>(h), task, ds))});
    }
  }
  w.row({"arima", "t15", fmt_double(harness::arima_test_rmse(ds, 10))});
  std::cout << "report -> " << report << "\n";
  return 0;
}

int cmd_report(uint64_t seed, const std::string& out_dir, const std::string& format,
               int runs_per_scenario, int repeats, double demand) {
  fs::create_directories(out_dir);
  harness::ScenarioConfig base;
  base.demand_rate = demand;
  base.seed = seed;
  auto profile = harness::build_profile(base);
  auto suite = harness::build_suite_dataset(base, profile, runs_per_scenario,
                                            harness::FeatureSource::estimated);
  harness::ComparisonConfig cc;
  cc.plan.repeats = repeats;
  cc.plan.seed = seed;
  auto rep = harness::run_comparison(suite.ds, suite.scenario_of_run, cc);
  rep.save_csv(out_dir);
  if (format == "markdown") {
    std::ofstream(out_dir + "/report.md") << rep.markdown();
    std::cout << rep.markdown();
  }
  std::cout << "report -> " << out_dir << "\n";
  return 0;
}

int cmd_study(const std::string& which, uint64_t seed, const std::string& out_dir,
              const std::string& dataset_path, double demand) {
  fs::create_directories(out_dir);
  if (which == "ablation") {
    if (dataset_path.empty()) throw std::runtime_error("ablation needs --dataset");
    auto ds = dataset::load_dataset_csv(dataset_path, meta_path_for(dataset_path));
    learner::TrainConfig cfg;
    cfg.seed = seed;
    auto entries = harness::feature_ablation(ds, cfg);
    CsvWriter w(out_dir + "/ablation.csv");
    w.row({"group", "rmse", "delta"});
    for (const auto& e : entries) w.row({e.group, fmt_double(e.rmse), fmt_double(e.delta)});
  } else if (which == "comm-impact") {
    harness::ScenarioConfig base;
    base.demand_rate = demand;
    base.seed = seed;
    auto profile = harness::build_profile(base);
    harness::ScenarioConfig incident = harness::make_suite(base)[1];
    std::vector<vanet::ChannelModel> grid;
    for (double loss : {0.0, 0.3, 0.6}) {
      vanet::ChannelModel ch;
      ch.base_loss = loss;
      ch.collision_coefficient = loss > 0.0 ? 5.0 : 0.0;
      grid.push_back(ch);
    }
    learner::TrainConfig cfg;
    cfg.seed = seed;
    auto rows = harness::comm_impact_study(incident, profile, grid, cfg);
    CsvWriter w(out_dir + "/comm_impact.csv");
    w.row({"base_loss", "collision_coefficient", "rmse_truth", "rmse_est_tti",
           "rmse_est_flow", "delta_tti", "delta_flow"});
    for (const auto& r : rows)
      w.row({fmt_double(r.base_loss), fmt_double(r.collision_coefficient),
             fmt_double(r.rmse_truth), fmt_double(r.rmse_est_tti),
             fmt_double(r.rmse_est_flow), fmt_double(r.delta_tti()),
             fmt_double(r.delta_flow())});
  } else if (which == "density") {
    vanet::ChannelModel ch;
    ch.base_loss = 0.1;
    ch.collision_coefficient = 40.0;
    std::vector<double> densities;
    for (int i = 0; i < 12; ++i) densities.push_back(0.0001 + i * (0.036 - 0.0001) / 11.0);
    auto curve = harness::density_accuracy_curve(ch, densities, 200, seed);
    CsvWriter w(out_dir + "/density.csv");
    w.row({"density", "accuracy"});
    for (const auto& p : curve) w.row({fmt_double(p.density), fmt_double(p.accuracy)});
  } else if (which == "alpha") {
    harness::ScenarioConfig base;
    base.demand_rate = demand;
    base.seed = seed;
    auto profile = harness::build_profile(base);
    auto rep = harness::calibrate_alpha(base, profile, seed);
    CsvWriter w(out_dir + "/alpha.csv");
    w.row({"alpha", "rmse"});
    for (size_t i = 0; i < rep.alphas.size(); ++i)
      w.row({fmt_double(rep.alphas[i]), fmt_double(rep.rmses[i])});
    std::ofstream(out_dir + "/alpha_best.txt") << fmt_double(rep.best_alpha) << "\n";
  } else if (which == "c-factor") {
    harness::ScenarioConfig base;
    base.demand_rate = demand;
    base.seed = seed;
    auto profile = harness::build_profile(base);
    auto rr = harness::run_scenario(base, profile, seed);
    std::vector<std::pair<double, double>> pairs;
    for (const auto& c : rr.log.completions())
      pairs.emplace_back(c.exit_time - c.entry_time,
                         profile.travel_time(c.seg, c.entry_time));
    double c = harness::calibrate_congestion_factor(pairs);
    CsvWriter w(out_dir + "/c_factor.csv");
    w.row({"c_factor"});
    w.row({fmt_double(c)});
  } else {
    throw std::runtime_error("unknown study: " + which);
  }
  std::cout << "study " << which << " -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"connected-vehicle traffic flow prediction toolkit"};
  app.require_subcommand(1);
  uint64_t seed = 1;
  app.add_option("--seed", seed, "master random seed")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "run scenario simulations, write traces");
  std::string sim_config, sim_network, sim_out = "out";
  int sim_runs = 1, sim_trace_vehicle = -1;
  sim->add_option("--config", sim_config, "scenario config JSON");
  sim->add_option("--network", sim_network, "pre-built network + profile JSON");
  sim->add_option("--out", sim_out, "output directory")->capture_default_str();
  sim->add_option("--runs", sim_runs, "number of varied runs")->capture_default_str();
  sim->add_option("--trace-vehicle", sim_trace_vehicle, "vehicle id to trace");

  auto* bd = app.add_subcommand("build-dataset", "label traces into a dataset");
  std::string bd_traces, bd_out = "dataset.csv";
  double bd_test_fraction = 0.2;
  int bd_block = 0;
  bd->add_option("--traces", bd_traces, "directory of trace_*.csv files")->required();
  bd->add_option("--out", bd_out, "dataset CSV path")->capture_default_str();
  bd->add_option("--test-fraction", bd_test_fraction, "held-out fraction")
      ->capture_default_str();
  bd->add_option("--runs-per-block", bd_block,
                 "hold out whole runs per block of this size (0: per-run tail)")
      ->capture_default_str();

  auto* tr = app.add_subcommand("train", "train one model variant");
  std::string tr_dataset, tr_model = "mtlcv", tr_config, tr_out = "params.json";
  tr->add_option("--dataset", tr_dataset, "dataset CSV")->required();
  tr->add_option("--model", tr_model, "ann|mtla|mtlb|mtlcv")->capture_default_str();
  tr->add_option("--config", tr_config, "training config JSON");
  tr->add_option("--out", tr_out, "parameter file")->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "score saved models on the test split");
  std::string ev_models, ev_dataset, ev_report = "report.csv";
  ev->add_option("--models", ev_models, "directory of parameter files")->required();
  ev->add_option("--dataset", ev_dataset, "dataset CSV")->required();
  ev->add_option("--report", ev_report, "report CSV path")->capture_default_str();

  auto* rp = app.add_subcommand("report", "full model-comparison experiment");
  std::string rp_out = "report", rp_format = "csv";
  int rp_runs = 16, rp_repeats = 20;
  double rp_demand = 0.4;
  rp->add_option("--out", rp_out, "output directory")->capture_default_str();
  rp->add_option("--format", rp_format, "csv|markdown")->capture_default_str();
  rp->add_option("--runs-per-scenario", rp_runs, "simulated runs per scenario")
      ->capture_default_str();
  rp->add_option("--repeats", rp_repeats, "cross-validation repeats")->capture_default_str();
  rp->add_option("--demand", rp_demand, "base demand rate, veh/s")->capture_default_str();

  auto* st = app.add_subcommand("study", "parameter studies");
  std::string st_which, st_out = "study", st_dataset;
  double st_demand = 0.4;
  st->add_option("which", st_which, "ablation|comm-impact|density|alpha|c-factor")
      ->required();
  st->add_option("--out", st_out, "output directory")->capture_default_str();
  st->add_option("--dataset", st_dataset, "dataset CSV (ablation)");
  st->add_option("--demand", st_demand, "base demand rate, veh/s")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim)
      return cmd_simulate(sim_config, sim_network, seed, sim_out, sim_runs,
                          sim_trace_vehicle);
    if (*bd) return cmd_build_dataset(bd_traces, bd_out, bd_test_fraction, bd_block);
    if (*tr) return cmd_train(tr_dataset, tr_model, tr_config, seed, tr_out);
    if (*ev) return cmd_evaluate(ev_models, ev_dataset, ev_report);
    if (*rp) return cmd_report(seed, rp_out, rp_format, rp_runs, rp_repeats, rp_demand);
    if (*st) return cmd_study(st_which, seed, st_out, st_dataset, st_demand);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
