#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "stp/agent.hpp"
#include "stp/rng.hpp"

namespace stp::vanet {

using agent::BeaconMessage;
using agent::UploadMessage;
using netmodel::SegmentId;

struct ChannelModel {
  double range_m = 300.0;
  double base_loss = 0.0;                // probability in [0,1)
  double collision_coefficient = 0.0;    // per vehicle/m^2
};

// Distance gate times base-loss times a density collision term. Parametric
// stand-in for PHY/MAC effects; exposed in config so the density study can
// sweep it.
double reception_probability(double distance_m, double local_density,
                             const ChannelModel& channel);

constexpr double kBeaconPeriod = 0.1;
constexpr int kSubticksPerStep = 10;
constexpr double kScfExpiry = 900.0;
constexpr size_t kScfCapacity = 100;

// Store-carry-forward buffer for upload messages that could not reach the
// RSU directly. Oldest-evicted at capacity, 15-minute expiry.
class ScfBuffer {
 public:
  void add(const UploadMessage& msg, double now);
  void expire(double now);
  bool empty() const { return items_.empty(); }
  size_t size() const { return items_.size(); }
  std::deque<UploadMessage>& items() { return items_; }
  const std::deque<UploadMessage>& items() const { return items_; }
  void clear() { items_.clear(); }

 private:
  std::deque<UploadMessage> items_;
};

struct Endpoint {
  int id = -1;
  double x = 0.0;
  double y = 0.0;
  SegmentId seg = -1;
  double local_density = 0.0;  // vehicles per m^2 on the receiver's segment
};

// One broadcast attempt toward a set of candidate receivers. Returns the
// ids of endpoints that received the message.
std::vector<int> broadcast(const Endpoint& sender, const std::vector<Endpoint>& receivers,
                           const ChannelModel& channel, Rng& rng);

// Grid hash over endpoint positions for range queries at the beacon rate.
class SpatialIndex {
 public:
  explicit SpatialIndex(double cell_size);
  void rebuild(const std::vector<Endpoint>& points);
  std::vector<int> within(double x, double y, double radius) const;  // endpoint indices

 private:
  double cell_ = 300.0;
  std::vector<Endpoint> points_;
  std::vector<std::vector<int>> cells_;
  int nx_ = 0, ny_ = 0;
  double min_x_ = 0.0, min_y_ = 0.0;
};

}  // namespace stp::vanet
