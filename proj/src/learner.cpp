#include "stp/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace stp::learner {

const char* variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::ann: return "ann";
    case VariantKind::mtla: return "mtla";
    case VariantKind::mtlb: return "mtlb";
    case VariantKind::mtlcv: return "mtlcv";
  }
  return "ann";
}

VariantKind variant_from_name(const std::string& name) {
  for (VariantKind v : {VariantKind::ann, VariantKind::mtla, VariantKind::mtlb,
                        VariantKind::mtlcv})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown model variant: " + name);
}

Architecture make_variant(VariantKind kind) {
  Architecture a;
  switch (kind) {
    case VariantKind::ann:
      a.hidden = {90};
      a.heads = {Task::t15};
      a.default_epochs = 150;
      break;
    case VariantKind::mtla:
      a.hidden = {20, 40, 20};
      a.heads = {Task::t5, Task::t15};
      a.default_epochs = 300;
      a.default_dropout = 0.0;
      break;
    case VariantKind::mtlb:
      a.hidden = {20, 40, 20};
      a.heads = {Task::t15, Task::t20};
      a.default_epochs = 300;
      a.default_dropout = 0.0;
      break;
    case VariantKind::mtlcv:
      a.hidden = {20, 40, 20};
      a.heads = {Task::t5, Task::t15, Task::t20};
      a.default_epochs = 300;
      a.default_dropout = 0.0;
      break;
  }
  return a;
}

size_t MlpParams::parameter_count() const {
  size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  for (const auto& w : head_weights) n += w.size();
  for (const auto& b : head_biases) n += b.size();
  return n;
}

MlpParams init_params(const Architecture& arch, uint64_t seed) {
  if (arch.heads.empty()) throw std::invalid_argument("architecture needs a head");
  MlpParams p;
  p.arch = arch;
  Rng rng(seed);
  int fan_in = arch.input;
  for (int units : arch.hidden) {
    double r = std::sqrt(6.0 / (fan_in + units));
    std::vector<double> w(static_cast<size_t>(fan_in) * units);
    for (double& v : w) v = rng.uniform(-r, r);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(units, 0.0);
    fan_in = units;
  }
  for (size_t h = 0; h < arch.heads.size(); ++h) {
    double r = std::sqrt(6.0 / (fan_in + arch.classes));
    std::vector<double> w(static_cast<size_t>(fan_in) * arch.classes);
    for (double& v : w) v = rng.uniform(-r, r);
    p.head_weights.push_back(std::move(w));
    p.head_biases.emplace_back(arch.classes, 0.0);
  }
  return p;
}

static void softmax(const double* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

namespace {

struct ForwardCache {
  std::vector<std::vector<double>> activations;  // per hidden layer, post-sigmoid
  std::vector<std::array<double, kClasses>> head_probs;
};

ForwardCache forward_cached(const MlpParams& p, const std::array<double, kInputDim>& x,
                            const std::vector<std::vector<double>>* dropout_masks) {
  if (p.arch.input != kInputDim)
    throw std::invalid_argument("input dimension mismatch");
  ForwardCache cache;
  std::vector<double> cur(x.begin(), x.end());
  for (size_t l = 0; l < p.weights.size(); ++l) {
    int units = static_cast<int>(p.biases[l].size());
    int fan_in = static_cast<int>(cur.size());
    std::vector<double> next(units);
    for (int j = 0; j < units; ++j) {
      double z = p.biases[l][j];
      const double* col = &p.weights[l][static_cast<size_t>(j)];
      for (int i = 0; i < fan_in; ++i) z += cur[i] * p.weights[l][static_cast<size_t>(i) * units + j];
      (void)col;
      next[j] = 1.0 / (1.0 + std::exp(-z));
    }
    if (dropout_masks) {
      for (int j = 0; j < units; ++j) next[j] *= (*dropout_masks)[l][j];
    }
    cache.activations.push_back(next);
    cur = std::move(next);
  }
  for (size_t h = 0; h < p.head_weights.size(); ++h) {
    int fan_in = static_cast<int>(cur.size());
    std::array<double, kClasses> logits{};
    for (int k = 0; k < p.arch.classes; ++k) {
      double z = p.head_biases[h][k];
      for (int i = 0; i < fan_in; ++i)
        z += cur[i] * p.head_weights[h][static_cast<size_t>(i) * p.arch.classes + k];
      logits[k] = z;
    }
    std::array<double, kClasses> probs{};
    softmax(logits.data(), p.arch.classes, probs.data());
    cache.head_probs.push_back(probs);
  }
  return cache;
}

Gradients zero_like(const MlpParams& p) {
  Gradients g;
  for (const auto& w : p.weights) g.weights.emplace_back(w.size(), 0.0);
  for (const auto& b : p.biases) g.biases.emplace_back(b.size(), 0.0);
  for (const auto& w : p.head_weights) g.head_weights.emplace_back(w.size(), 0.0);
  for (const auto& b : p.head_biases) g.head_biases.emplace_back(b.size(), 0.0);
  return g;
}

// Accumulates the per-sample gradient into `g`; returns the sample loss.
double backward_into(const MlpParams& p, const std::array<double, kInputDim>& x,
                     const std::vector<int>& targets,
                     const std::vector<std::vector<double>>* dropout_masks,
                     Gradients& g) {
  ForwardCache cache = forward_cached(p, x, dropout_masks);
  size_t n_hidden = p.weights.size();
  const std::vector<double>& last =
      n_hidden > 0 ? cache.activations.back() : std::vector<double>(x.begin(), x.end());
  int last_n = static_cast<int>(last.size());

  double sample_loss = 0.0;
  std::vector<double> dlast(last_n, 0.0);
  for (size_t h = 0; h < p.head_weights.size(); ++h) {
    const auto& probs = cache.head_probs[h];
    std::array<double, kClasses> dp{};
    for (int k = 0; k < p.arch.classes; ++k) {
      double y = (targets[h] == k) ? 1.0 : 0.0;
      dp[k] = probs[k] - y;
      sample_loss += 0.5 * dp[k] * dp[k];
    }
    // softmax jacobian: dz_k = p_k * (dp_k - sum_j dp_j p_j)
    double dot = 0.0;
    for (int k = 0; k < p.arch.classes; ++k) dot += dp[k] * probs[k];
    std::array<double, kClasses> dz{};
    for (int k = 0; k < p.arch.classes; ++k) dz[k] = probs[k] * (dp[k] - dot);

    for (int i = 0; i < last_n; ++i) {
      for (int k = 0; k < p.arch.classes; ++k) {
        g.head_weights[h][static_cast<size_t>(i) * p.arch.classes + k] += last[i] * dz[k];
        dlast[i] += p.head_weights[h][static_cast<size_t>(i) * p.arch.classes + k] * dz[k];
      }
    }
    for (int k = 0; k < p.arch.classes; ++k) g.head_biases[h][k] += dz[k];
  }

  std::vector<double> dcur = std::move(dlast);
  for (size_t li = n_hidden; li-- > 0;) {
    const std::vector<double>& act = cache.activations[li];
    int units = static_cast<int>(act.size());
    const std::vector<double>& below =
        li > 0 ? cache.activations[li - 1] : std::vector<double>(x.begin(), x.end());
    int fan_in = static_cast<int>(below.size());
    std::vector<double> dz(units);
    for (int j = 0; j < units; ++j) {
      double a = act[j];
      double mask = dropout_masks ? (*dropout_masks)[li][j] : 1.0;
      // act already includes the dropout mask; derivative of sigmoid uses
      // the pre-mask activation
      double pre = mask != 0.0 ? a / mask : 0.0;
      dz[j] = dcur[j] * mask * pre * (1.0 - pre);
    }
    std::vector<double> dbelow(fan_in, 0.0);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < units; ++j) {
        g.weights[li][static_cast<size_t>(i) * units + j] += below[i] * dz[j];
        dbelow[i] += p.weights[li][static_cast<size_t>(i) * units + j] * dz[j];
      }
    }
    for (int j = 0; j < units; ++j) g.biases[li][j] += dz[j];
    dcur = std::move(dbelow);
  }
  return sample_loss;
}

}  // namespace

Prediction forward(const MlpParams& params, const std::array<double, kInputDim>& x) {
  ForwardCache cache = forward_cached(params, x, nullptr);
  Prediction pred;
  pred.head_probs = std::move(cache.head_probs);
  return pred;
}

double loss(const Prediction& pred, const std::vector<int>& target_classes) {
  if (pred.head_probs.size() != target_classes.size())
    throw std::invalid_argument("head/target count mismatch");
  double total = 0.0;
  for (size_t h = 0; h < pred.head_probs.size(); ++h) {
    for (int k = 0; k < kClasses; ++k) {
      double y = (target_classes[h] == k) ? 1.0 : 0.0;
      double d = y - pred.head_probs[h][k];
      total += 0.5 * d * d;
    }
  }
  return total;
}

Gradients backward(const MlpParams& params, const std::array<double, kInputDim>& x,
                   const std::vector<int>& target_classes) {
  Gradients g = zero_like(params);
  backward_into(params, x, target_classes, nullptr, g);
  return g;
}

int predict_class(const Prediction& pred, size_t head_index) {
  const auto& probs = pred.head_probs.at(head_index);
  int best = 0;
  for (int k = 1; k < kClasses; ++k)
    if (probs[k] > probs[best]) best = k;  // ties toward the lowest index
  return best;
}

static double mean_loss(const MlpParams& p, const std::vector<Sample>& set) {
  if (set.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : set) total += loss(forward(p, s.x), s.targets);
  return total / set.size();
}

TrainResult train(const Architecture& arch, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("negative epoch count");
  MlpParams params = init_params(arch, config.seed);
  Rng rng = Rng(config.seed).fork(1);

  TrainResult result;
  MlpParams best = params;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);

    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      size_t batch_end = std::min(pos + static_cast<size_t>(config.batch_size), order.size());
      size_t bsz = batch_end - pos;
      Gradients g = zero_like(params);
      for (size_t bi = pos; bi < batch_end; ++bi) {
        const Sample& s = train_set[order[bi]];
        std::vector<std::vector<double>> masks;
        std::vector<std::vector<double>>* mask_ptr = nullptr;
        if (config.dropout > 0.0) {
          for (const auto& b : params.biases) {
            std::vector<double> m(b.size());
            for (double& v : m)
              v = rng.bernoulli(config.dropout) ? 0.0 : 1.0 / (1.0 - config.dropout);
            masks.push_back(std::move(m));
          }
          mask_ptr = &masks;
        }
        epoch_loss += backward_into(params, s.x, s.targets, mask_ptr, g);
      }
      double scale = config.learning_rate / static_cast<double>(bsz);
      for (size_t l = 0; l < params.weights.size(); ++l) {
        for (size_t i = 0; i < params.weights[l].size(); ++i)
          params.weights[l][i] -= scale * g.weights[l][i];
        for (size_t i = 0; i < params.biases[l].size(); ++i)
          params.biases[l][i] -= scale * g.biases[l][i];
      }
      for (size_t h = 0; h < params.head_weights.size(); ++h) {
        for (size_t i = 0; i < params.head_weights[h].size(); ++i)
          params.head_weights[h][i] -= scale * g.head_weights[h][i];
        for (size_t i = 0; i < params.head_biases[h].size(); ++i)
          params.head_biases[h][i] -= scale * g.head_biases[h][i];
      }
      pos = batch_end;
    }
    result.train_losses.push_back(train_set.empty() ? 0.0 : epoch_loss / train_set.size());
    if (!val_set.empty()) {
      double vl = mean_loss(params, val_set);
      result.val_losses.push_back(vl);
      if (vl < best_val) {
        best_val = vl;
        best = params;
      }
    }
  }
  result.params = (!val_set.empty() && config.epochs > 0) ? best : params;
  return result;
}

GridResult grid_search(const std::vector<GridPoint>& grid,
                       const std::function<double(const GridPoint&)>& evaluate) {
  if (grid.empty()) throw std::invalid_argument("empty grid");
  GridResult r;
  r.best_score = std::numeric_limits<double>::infinity();
  size_t best_idx = 0;
  for (size_t i = 0; i < grid.size(); ++i) {
    double score = evaluate(grid[i]);
    r.scores.push_back(score);
    if (score < r.best_score) {
      r.best_score = score;
      best_idx = i;
    }
  }
  r.best = grid[best_idx];
  return r;
}

using nlohmann::json;

void save_params(const MlpParams& params, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["input"] = params.arch.input;
  j["hidden"] = params.arch.hidden;
  std::vector<int> heads;
  for (Task t : params.arch.heads) heads.push_back(static_cast<int>(t));
  j["heads"] = heads;
  j["classes"] = params.arch.classes;
  j["weights"] = params.weights;
  j["biases"] = params.biases;
  j["head_weights"] = params.head_weights;
  j["head_biases"] = params.head_biases;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

MlpParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j = json::parse(in);
  MlpParams p;
  p.arch.input = j["input"];
  p.arch.hidden = j["hidden"].get<std::vector<int>>();
  for (int t : j["heads"].get<std::vector<int>>())
    p.arch.heads.push_back(static_cast<Task>(t));
  p.arch.classes = j["classes"];
  p.weights = j["weights"].get<std::vector<std::vector<double>>>();
  p.biases = j["biases"].get<std::vector<std::vector<double>>>();
  p.head_weights = j["head_weights"].get<std::vector<std::vector<double>>>();
  p.head_biases = j["head_biases"].get<std::vector<std::vector<double>>>();
  return p;
}

}  // namespace stp::learner
