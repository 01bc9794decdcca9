#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stp/rng.hpp"

namespace stp::learner {

constexpr int kInputDim = 62;
constexpr int kClasses = 4;

enum class Task { t5 = 0, t15 = 1, t20 = 2 };
enum class VariantKind { ann, mtla, mtlb, mtlcv };

const char* variant_name(VariantKind v);
VariantKind variant_from_name(const std::string& name);

struct Architecture {
  int input = kInputDim;
  std::vector<int> hidden;     // e.g. {20, 40, 20}
  std::vector<Task> heads;     // one softmax head per task
  int classes = kClasses;
  int default_epochs = 100;
  // dropout is tunable per variant: the deep 20-40-20 trunk does not escape
  // its initial plateau under the 0.2 default, the single-layer net does
  double default_dropout = 0.2;
};

// ANN: one 90-unit hidden layer, t+15 only, 150 epochs.
// MTLa: {t+5, t+15}; MTLb: {t+15, t+20}; MTL-CV: all three; deep nets use
// the 20-40-20 stack with 300 epochs and no dropout.
Architecture make_variant(VariantKind kind);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.5;
  double dropout = 0.2;  // per hidden layer, inverted dropout
  int batch_size = 32;
  uint64_t seed = 0;
};

struct MlpParams {
  Architecture arch;
  // weights[l] is (fan_in x fan_out) row-major for hidden layer l; the
  // final entries of weights/biases hold the per-head output layers.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<double>> head_weights;  // per head, (last_hidden x classes)
  std::vector<std::vector<double>> head_biases;   // per head, (classes)

  size_t parameter_count() const;
};

MlpParams init_params(const Architecture& arch, uint64_t seed);

struct Prediction {
  std::vector<std::array<double, kClasses>> head_probs;  // aligned with arch.heads
};

Prediction forward(const MlpParams& params, const std::array<double, kInputDim>& x);

// One-hot targets per head, aligned with arch.heads.
double loss(const Prediction& pred, const std::vector<int>& target_classes);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<double>> head_weights;
  std::vector<std::vector<double>> head_biases;
};

// Exact analytic gradient of the MSE-through-softmax-through-sigmoid loss.
Gradients backward(const MlpParams& params, const std::array<double, kInputDim>& x,
                   const std::vector<int>& target_classes);

int predict_class(const Prediction& pred, size_t head_index);

struct Sample {
  std::array<double, kInputDim> x{};
  std::vector<int> targets;  // class per head, aligned with arch.heads
};

struct TrainResult {
  MlpParams params;  // parameters at best validation loss
  std::vector<double> train_losses;
  std::vector<double> val_losses;
};

TrainResult train(const Architecture& arch, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config);

struct GridPoint {
  Architecture arch;
  TrainConfig config;
};

// Exhaustive search over the supplied grid; the evaluator returns a
// validation score to minimize. Ties break toward the earlier point.
struct GridResult {
  GridPoint best;
  double best_score = 0.0;
  std::vector<double> scores;
};

GridResult grid_search(const std::vector<GridPoint>& grid,
                       const std::function<double(const GridPoint&)>& evaluate);

void save_params(const MlpParams& params, const std::string& path);
MlpParams load_params(const std::string& path);

}  // namespace stp::learner
