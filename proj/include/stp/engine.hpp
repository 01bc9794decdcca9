#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stp/agent.hpp"
#include "stp/mobility.hpp"
#include "stp/rsu.hpp"
#include "stp/vanet.hpp"

namespace stp::engine {

using mobility::World;
using netmodel::SegmentId;

struct EngineConfig {
  vanet::ChannelModel channel;
  SegmentId rsu_segment = -1;
  bool rsu_enabled = true;
  double upload_period_s = 10.0;
  double alpha = agent::kDefaultAlpha;
  double c_factor = agent::kDefaultCongestionFactor;
  bool scf_enabled = true;
  bool log_rsu_inputs = false;
  bool collect_alpha_samples = false;
  int trace_vehicle = -1;
  rsu::FlowCountMode flow_mode = rsu::FlowCountMode::observed_exit;
  uint64_t seed = 0;
};

// Sample for the alpha study: a vehicle's own index, its neighbor-table
// mean, and the reference index over the ten segments around the target.
struct AlphaSample {
  double t = 0.0;
  double own = 0.0;
  double neighbor_mean = 0.0;
  double reference = 0.0;
};

struct TraceSample {
  double t = 0.0;
  SegmentId seg = -1;
  double tt_index = 0.0;
  double own_index = 0.0;
  size_t trajectory_len = 0;
};

// Single-run composition of mobility, channel, on-board agents and the RSU.
class Engine {
 public:
  Engine(const netmodel::NetworkGraph& net, const netmodel::HistoricalProfile& profile,
         mobility::WorldParams world_params, EngineConfig config);

  World& world() { return world_; }
  const World& world() const { return world_; }

  void step();
  void run();  // to the world horizon

  const rsu::Rsu* rsu() const { return rsu_ ? rsu_.get() : nullptr; }
  const agent::VehicleAgent* agent_for(int vehicle_id) const;
  const std::vector<AlphaSample>& alpha_samples() const { return alpha_samples_; }
  const std::vector<TraceSample>& trace() const { return trace_; }
  void set_classifier(std::shared_ptr<agent::CauseClassifier> c) { classifier_ = std::move(c); }

  // Reference Eq.-1 index over the ten segments nearest the target at time
  // t, computed from ground truth (interval means against the profile).
  double reference_index(double t) const;

  void export_trace_csv(const std::string& path) const;

 private:
  void comm_subcycles(double step_start);
  void handle_segment_changes();
  void handle_uploads();
  void scf_exchange();
  double segment_density(SegmentId seg) const;
  bool rsu_in_range(double x, double y) const;
  double phase01(int vehicle_id) const;

  const netmodel::NetworkGraph* net_;
  const netmodel::HistoricalProfile* profile_;
  EngineConfig config_;
  World world_;
  Rng rng_;
  std::map<int, agent::VehicleAgent> agents_;
  std::map<int, vanet::ScfBuffer> scf_;
  std::map<int, double> last_upload_;
  std::unique_ptr<rsu::Rsu> rsu_;
  std::array<double, 2> rsu_xy_{};
  std::shared_ptr<agent::CauseClassifier> classifier_;
  std::vector<SegmentId> reference_ring_;  // ten segments for the alpha study
  std::vector<AlphaSample> alpha_samples_;
  std::vector<TraceSample> trace_;
  std::vector<double> density_by_segment_;
};

}  // namespace stp::engine
