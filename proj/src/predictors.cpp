#include "viewsched/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "viewsched/errors.hpp"

namespace viewsched {

namespace {

// Minimum SSE reduction for a split to be kept.
constexpr double kMinGain = 1e-12;

struct OpenNode {
  int node = 0;  // index into tree.nodes
  double sum = 0.0;
  int count = 0;
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureRow>& x, const std::vector<std::vector<int>>& sorted, int width,
              const GbrtParams& params)
      : x_(x), sorted_(sorted), width_(width), params_(params) {
    // Feature values in each column's sorted order, so the split scan reads memory sequentially.
    sorted_values_.resize(width);
    for (int f = 0; f < width; ++f) {
      sorted_values_[f].reserve(sorted[f].size());
      for (int i : sorted[f]) sorted_values_[f].push_back(x[i][f]);
    }
    run_end_.resize(width);
    for (int f = 0; f < width; ++f) {
      const auto& v = sorted_values_[f];
      std::size_t e = 0;
      while (e < v.size() && v[e] == v.front()) ++e;
      run_end_[f] = e;
    }
  }

  RegressionTree build(std::span<const double> residual) {
    const int n = static_cast<int>(x_.size());
    RegressionTree tree;
    tree.nodes.push_back({});
    std::vector<int> slot(n, 0);  // open-node slot per sample, -1 once in a leaf
    std::vector<OpenNode> open = {{0, std::accumulate(residual.begin(), residual.end(), 0.0), n}};

    for (int depth = 0; depth < params_.max_depth && !open.empty(); ++depth) {
      const std::vector<SplitCandidate> best = find_splits(residual, slot, open);
      std::vector<OpenNode> next;
      std::vector<int> left_slot(open.size(), -1), right_slot(open.size(), -1);
      for (std::size_t k = 0; k < open.size(); ++k) {
        if (best[k].feature < 0) continue;
        auto& nd = tree.nodes[open[k].node];
        nd.feature = best[k].feature;
        nd.threshold = best[k].threshold;
        nd.left = static_cast<int>(tree.nodes.size());
        nd.right = nd.left + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        left_slot[k] = static_cast<int>(next.size());
        next.push_back({nd.left, 0.0, 0});
        right_slot[k] = static_cast<int>(next.size());
        next.push_back({nd.right, 0.0, 0});
      }
      for (int i = 0; i < n; ++i) {
        const int k = slot[i];
        if (k < 0) continue;
        if (best[k].feature < 0) {
          slot[i] = -1;
          continue;
        }
        const int dest = x_[i][best[k].feature] <= best[k].threshold ? left_slot[k] : right_slot[k];
        slot[i] = dest;
        next[dest].sum += residual[i];
        ++next[dest].count;
      }
      for (std::size_t k = 0; k < open.size(); ++k) {
        if (best[k].feature < 0) set_leaf(tree, open[k]);
      }
      open = std::move(next);
    }
    for (const OpenNode& o : open) set_leaf(tree, o);
    return tree;
  }

 private:
  static void set_leaf(RegressionTree& tree, const OpenNode& o) {
    tree.nodes[o.node].feature = -1;
    tree.nodes[o.node].value = o.count > 0 ? o.sum / o.count : 0.0;
  }

  // One pass over each presorted column evaluates every open node at once.
  std::vector<SplitCandidate> find_splits(std::span<const double> residual, const std::vector<int>& slot,
                                          const std::vector<OpenNode>& open) const {
    const std::size_t m = open.size();
    std::vector<SplitCandidate> best(m);
    std::vector<double> left_sum(m);
    std::vector<int> left_count(m);
    std::vector<double> last_value(m);
    std::vector<char> seen(m);
    const int min_leaf = std::max(1, params_.min_samples_leaf);

    std::vector<double> rest_sum(m);
    std::vector<int> rest_count(m);
    for (int f = 0; f < width_; ++f) {
      const std::vector<int>& order = sorted_[f];
      const std::vector<double>& values = sorted_values_[f];
      const std::size_t start = run_end_[f];
      if (start >= order.size()) continue;  // constant column

      // Columns are mostly one repeated minimum (empty distribution bins, off
      // one-hot entries), so that run is summed as node total minus the rest.
      std::fill(rest_sum.begin(), rest_sum.end(), 0.0);
      std::fill(rest_count.begin(), rest_count.end(), 0);
      for (std::size_t pos = start; pos < order.size(); ++pos) {
        const int k = slot[order[pos]];
        if (k < 0) continue;
        rest_sum[k] += residual[order[pos]];
        ++rest_count[k];
      }
      for (std::size_t k = 0; k < m; ++k) {
        left_sum[k] = open[k].sum - rest_sum[k];
        left_count[k] = open[k].count - rest_count[k];
        seen[k] = left_count[k] > 0;
        last_value[k] = values.front();
      }
      for (std::size_t pos = start; pos < order.size(); ++pos) {
        const int i = order[pos];
        const int k = slot[i];
        if (k < 0) continue;
        const double v = values[pos];
        if (seen[k] && v != last_value[k]) {
          const int nl = left_count[k];
          const int nr = open[k].count - nl;
          if (nl >= min_leaf && nr >= min_leaf) {
            const double sl = left_sum[k];
            const double sr = open[k].sum - sl;
            const double gain = sl * sl / nl + sr * sr / nr - open[k].sum * open[k].sum / open[k].count;
            if (gain > best[k].gain + kMinGain) {
              double thr = last_value[k] + 0.5 * (v - last_value[k]);
              if (!(thr < v)) thr = last_value[k];
              best[k] = {gain, f, thr};
            }
          }
        }
        seen[k] = 1;
        last_value[k] = v;
        left_sum[k] += residual[i];
        ++left_count[k];
      }
    }
    return best;
  }

  const std::vector<FeatureRow>& x_;
  const std::vector<std::vector<int>>& sorted_;
  std::vector<std::vector<double>> sorted_values_;
  std::vector<std::size_t> run_end_;  // end of the leading run of equal values per column
  int width_;
  GbrtParams params_;
};

double mse(std::span<const double> y, std::span<const double> pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
  return s / static_cast<double>(y.size());
}

nlohmann::json node_to_json(const RegressionTree& tree, int idx) {
  const auto& nd = tree.nodes[idx];
  if (nd.feature < 0) return {{"leaf_value", nd.value}};
  return {{"feature_index", nd.feature},
          {"threshold", nd.threshold},
          {"left", node_to_json(tree, nd.left)},
          {"right", node_to_json(tree, nd.right)}};
}

int node_from_json(RegressionTree& tree, const nlohmann::json& j, int width) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  if (j.contains("leaf_value")) {
    tree.nodes[idx].value = j.at("leaf_value").get<double>();
    return idx;
  }
  const int f = j.at("feature_index").get<int>();
  if (f < 0 || f >= width) throw ConfigError("model: feature_index " + std::to_string(f) + " out of range");
  const double thr = j.at("threshold").get<double>();
  const int l = node_from_json(tree, j.at("left"), width);
  const int r = node_from_json(tree, j.at("right"), width);
  tree.nodes[idx].feature = f;
  tree.nodes[idx].threshold = thr;
  tree.nodes[idx].left = l;
  tree.nodes[idx].right = r;
  return idx;
}

}  // namespace

FeatureRow make_features(const DistributionVector& dist, int branch_index, double mean_track_confidence) {
  if (branch_index < 0 || branch_index >= kNumBranches) {
    throw ConfigError("feature encoding: branch index " + std::to_string(branch_index) + " out of range");
  }
  FeatureRow row(kFeatureWidth, 0.0);
  std::copy(dist.begin(), dist.end(), row.begin());
  row[kNumCategories + branch_index] = 1.0;
  row[kFeatureWidth - 1] = branch_index == kTrackerBranch ? std::clamp(mean_track_confidence, 0.0, 1.0) : 0.0;
  return row;
}

double RegressionTree::predict(std::span<const double> x) const {
  int idx = 0;
  while (nodes[idx].feature >= 0) {
    idx = x[nodes[idx].feature] <= nodes[idx].threshold ? nodes[idx].left : nodes[idx].right;
  }
  return nodes[idx].value;
}

int RegressionTree::depth() const {
  std::vector<std::pair<int, int>> stack = {{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [idx, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (nodes[idx].feature >= 0) {
      stack.emplace_back(nodes[idx].left, d + 1);
      stack.emplace_back(nodes[idx].right, d + 1);
    }
  }
  return deepest;
}

double GbrtModel::raw_predict(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != feature_width) {
    throw ConfigError("feature width " + std::to_string(x.size()) + " does not match model width " +
                      std::to_string(feature_width));
  }
  double sum = 0.0;
  for (const RegressionTree& t : trees) sum += t.predict(x);
  return base_score + learning_rate * sum;
}

GbrtModel train_gbrt(const std::vector<FeatureRow>& features, std::span<const double> targets,
                     const GbrtParams& params, TrainingTrace* trace, int feature_width) {
  if (features.empty()) throw ConfigError("train_gbrt: no training samples");
  if (features.size() != targets.size()) throw ConfigError("train_gbrt: feature/target count mismatch");
  if (params.rounds < 0 || params.max_depth < 0 || !(params.learning_rate > 0.0)) {
    throw ConfigError("train_gbrt: invalid parameters");
  }
  for (const FeatureRow& row : features) {
    if (static_cast<int>(row.size()) != feature_width) throw ConfigError("train_gbrt: inconsistent feature width");
  }

  const int n = static_cast<int>(features.size());
  std::vector<std::vector<int>> sorted(feature_width, std::vector<int>(n));
  for (int f = 0; f < feature_width; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](int a, int b) { return features[a][f] < features[b][f]; });
  }

  GbrtModel model;
  model.learning_rate = params.learning_rate;
  model.max_depth = params.max_depth;
  model.feature_width = feature_width;
  model.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / n;

  std::vector<double> pred(n, model.base_score);
  std::vector<double> residual(n);
  if (trace) trace->mse_per_round = {mse(targets, pred)};

  TreeBuilder builder(features, sorted, feature_width, params);
  for (int round = 0; round < params.rounds; ++round) {
    for (int i = 0; i < n; ++i) residual[i] = targets[i] - pred[i];
    RegressionTree tree = builder.build(residual);
    for (int i = 0; i < n; ++i) pred[i] += model.learning_rate * tree.predict(features[i]);
    model.trees.push_back(std::move(tree));
    if (trace) trace->mse_per_round.push_back(mse(targets, pred));
  }
  return model;
}

double predict_accuracy(const GbrtModel& model, std::span<const double> features) {
  return std::clamp(model.raw_predict(features), 0.0, 1.0);
}

double r_squared(std::span<const double> truth, std::span<const double> predicted) {
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

LinearLatencyModel fit_update_latency(std::span<const std::pair<int, double>> samples) {
  if (samples.size() < 2) throw ConfigError("fit_update_latency: need at least two samples");
  const double n = static_cast<double>(samples.size());
  double mx = 0.0, my = 0.0;
  for (auto [c, ms] : samples) {
    mx += c;
    my += ms;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (auto [c, ms] : samples) {
    sxx += (c - mx) * (c - mx);
    sxy += (c - mx) * (ms - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_update_latency: degenerate design (all track counts identical)");

  LinearLatencyModel m;
  m.slope_ms = sxy / sxx;
  m.intercept_ms = my - m.slope_ms * mx;
  if (m.slope_ms < 0.0) {
    m.slope_ms = 0.0;
    m.intercept_ms = my;
  }
  if (m.intercept_ms < 0.0) {
    // Refit through the origin.
    double sxx0 = 0.0, sxy0 = 0.0;
    for (auto [c, ms] : samples) {
      sxx0 += static_cast<double>(c) * c;
      sxy0 += c * ms;
    }
    m.intercept_ms = 0.0;
    m.slope_ms = std::max(0.0, sxy0 / sxx0);
  }
  return m;
}

nlohmann::json to_json(const RegressionTree& tree) { return node_to_json(tree, 0); }

nlohmann::json to_json(const GbrtModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const RegressionTree& t : model.trees) trees.push_back(to_json(t));
  return {{"base_score", model.base_score},
          {"learning_rate", model.learning_rate},
          {"max_depth", model.max_depth},
          {"feature_width", model.feature_width},
          {"trees", std::move(trees)}};
}

nlohmann::json to_json(const LinearLatencyModel& model) {
  return {{"slope_ms", model.slope_ms}, {"intercept_ms", model.intercept_ms}};
}

GbrtModel gbrt_from_json(const nlohmann::json& j) {
  GbrtModel m;
  try {
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.max_depth = j.at("max_depth").get<int>();
    m.feature_width = j.value("feature_width", kFeatureWidth);
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      node_from_json(tree, t, m.feature_width);
      m.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

LinearLatencyModel linear_from_json(const nlohmann::json& j) {
  try {
    return {j.at("slope_ms").get<double>(), j.at("intercept_ms").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

nlohmann::json to_json(const PredictorBundle& bundle) {
  return {{"version", kModelFormatVersion},
          {"accuracy", to_json(bundle.accuracy)},
          {"update_latency", to_json(bundle.update)}};
}

PredictorBundle bundle_from_json(const nlohmann::json& j) {
  if (!j.contains("version")) throw ConfigError("model: missing version field");
  const int version = j["version"].is_number_integer() ? j["version"].get<int>() : -1;
  if (version != kModelFormatVersion) {
    throw ConfigError("model: unsupported version " + j["version"].dump());
  }
  if (!j.contains("accuracy") || !j.contains("update_latency")) {
    throw ConfigError("model: expected 'accuracy' and 'update_latency' blocks");
  }
  PredictorBundle b;
  b.accuracy = gbrt_from_json(j["accuracy"]);
  if (b.accuracy.feature_width != kFeatureWidth) {
    throw ConfigError("model: accuracy predictor width " + std::to_string(b.accuracy.feature_width) +
                      ", expected " + std::to_string(kFeatureWidth));
  }
  b.update = linear_from_json(j["update_latency"]);
  return b;
}

double predict_frame_latency(std::span<const int> assignment, const DeviceProfile& device,
                             const LinearLatencyModel& update_model, int track_count) {
  std::map<int, int> per_branch;
  for (int b : assignment) ++per_branch[b];
  double total = 0.0;
  for (auto [b, k] : per_branch) total += batched_latency(branch_latency(b, device), k, device.batching_alpha);
  return total + fixed_latency(device) + update_model.predict(track_count);
}

}  // namespace viewsched
