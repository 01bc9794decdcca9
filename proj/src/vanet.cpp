#include "stp/vanet.hpp"

#include <algorithm>
#include <cmath>

namespace stp::vanet {

double reception_probability(double distance_m, double local_density,
                             const ChannelModel& channel) {
  if (distance_m > channel.range_m) return 0.0;
  double p = (1.0 - channel.base_loss) *
             std::max(0.0, 1.0 - channel.collision_coefficient * local_density);
  return std::clamp(p, 0.0, 1.0);
}

void ScfBuffer::add(const UploadMessage& msg, double now) {
  expire(now);
  for (const UploadMessage& m : items_) {
    if (m.vehicle_id == msg.vehicle_id && m.time == msg.time) return;  // already carried
  }
  items_.push_back(msg);
  while (items_.size() > kScfCapacity) items_.pop_front();
}

void ScfBuffer::expire(double now) {
  while (!items_.empty() && now - items_.front().time > kScfExpiry) items_.pop_front();
  std::erase_if(items_, [now](const UploadMessage& m) { return now - m.time > kScfExpiry; });
}

std::vector<int> broadcast(const Endpoint& sender, const std::vector<Endpoint>& receivers,
                           const ChannelModel& channel, Rng& rng) {
  std::vector<int> delivered;
  for (const Endpoint& r : receivers) {
    if (r.id == sender.id) continue;
    double dx = r.x - sender.x;
    double dy = r.y - sender.y;
    double dist = std::sqrt(dx * dx + dy * dy);
    double p = reception_probability(dist, r.local_density, channel);
    if (p > 0.0 && rng.bernoulli(p)) delivered.push_back(r.id);
  }
  return delivered;
}

SpatialIndex::SpatialIndex(double cell_size) : cell_(cell_size) {}

void SpatialIndex::rebuild(const std::vector<Endpoint>& points) {
  points_ = points;
  if (points_.empty()) {
    cells_.clear();
    nx_ = ny_ = 0;
    return;
  }
  double max_x = points_[0].x, max_y = points_[0].y;
  min_x_ = points_[0].x;
  min_y_ = points_[0].y;
  for (const Endpoint& p : points_) {
    min_x_ = std::min(min_x_, p.x);
    min_y_ = std::min(min_y_, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  nx_ = static_cast<int>((max_x - min_x_) / cell_) + 1;
  ny_ = static_cast<int>((max_y - min_y_) / cell_) + 1;
  cells_.assign(static_cast<size_t>(nx_) * ny_, {});
  for (size_t i = 0; i < points_.size(); ++i) {
    int cx = static_cast<int>((points_[i].x - min_x_) / cell_);
    int cy = static_cast<int>((points_[i].y - min_y_) / cell_);
    cells_[static_cast<size_t>(cy) * nx_ + cx].push_back(static_cast<int>(i));
  }
}

std::vector<int> SpatialIndex::within(double x, double y, double radius) const {
  std::vector<int> out;
  if (cells_.empty()) return out;
  int cx0 = static_cast<int>(std::floor((x - radius - min_x_) / cell_));
  int cx1 = static_cast<int>(std::floor((x + radius - min_x_) / cell_));
  int cy0 = static_cast<int>(std::floor((y - radius - min_y_) / cell_));
  int cy1 = static_cast<int>(std::floor((y + radius - min_y_) / cell_));
  cx0 = std::max(cx0, 0);
  cy0 = std::max(cy0, 0);
  cx1 = std::min(cx1, nx_ - 1);
  cy1 = std::min(cy1, ny_ - 1);
  double r2 = radius * radius;
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      for (int i : cells_[static_cast<size_t>(cy) * nx_ + cx]) {
        double dx = points_[i].x - x;
        double dy = points_[i].y - y;
        if (dx * dx + dy * dy <= r2) out.push_back(i);
      }
    }
  }
  return out;
}

}  // namespace stp::vanet
