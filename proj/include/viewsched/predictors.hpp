#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "viewsched/branches.hpp"
#include "viewsched/core_types.hpp"

namespace viewsched {

// distribution (80) | branch one-hot (17) | mean tracked confidence (1)
inline constexpr int kFeatureWidth = kNumCategories + kNumBranches + 1;

using FeatureRow = std::vector<double>;

// The confidence feature is only meaningful for the tracker branch and is
// zeroed for detection branches.
FeatureRow make_features(const DistributionVector& dist, int branch_index, double mean_track_confidence);

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;  // feature value <= threshold goes left
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
};

struct GbrtParams {
  int rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 1;
};

struct GbrtModel {
  double base_score = 0.0;
  double learning_rate = 0.1;
  int max_depth = 3;
  int feature_width = kFeatureWidth;
  std::vector<RegressionTree> trees;

  // Unclamped ensemble sum. Throws ConfigError on a width mismatch.
  double raw_predict(std::span<const double> x) const;
};

struct TrainingTrace {
  std::vector<double> mse_per_round;  // entry 0 is the base-score-only model
};

// Squared-error gradient boosting with exact greedy axis-aligned splits.
// Deterministic given sample order and parameters. Targets need not lie in
// [0,1]; the accuracy use case clamps at predict time.
GbrtModel train_gbrt(const std::vector<FeatureRow>& features, std::span<const double> targets,
                     const GbrtParams& params, TrainingTrace* trace = nullptr, int feature_width = kFeatureWidth);

// Clamped to [0, 1].
double predict_accuracy(const GbrtModel& model, std::span<const double> features);

double r_squared(std::span<const double> truth, std::span<const double> predicted);

struct LinearLatencyModel {
  double slope_ms = 0.0;
  double intercept_ms = 0.0;
  double predict(int tracks) const { return intercept_ms + slope_ms * tracks; }
};

// Ordinary least squares; slope and intercept clamped at zero.
LinearLatencyModel fit_update_latency(std::span<const std::pair<int, double>> samples);

// Both predictors together, as serialized to disk.
struct PredictorBundle {
  GbrtModel accuracy;
  LinearLatencyModel update;
};

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const RegressionTree& tree);
nlohmann::json to_json(const GbrtModel& model);
nlohmann::json to_json(const LinearLatencyModel& model);
GbrtModel gbrt_from_json(const nlohmann::json& j);
LinearLatencyModel linear_from_json(const nlohmann::json& j);
// {"version", "accuracy", "update_latency"}; throws ConfigError on a missing
// or unsupported version.
nlohmann::json to_json(const PredictorBundle& bundle);
PredictorBundle bundle_from_json(const nlohmann::json& j);

// Predicted frame latency of a per-view assignment: batched marginals per
// branch, fixed modules and the tracker update.
double predict_frame_latency(std::span<const int> assignment, const DeviceProfile& device,
                             const LinearLatencyModel& update_model, int track_count);

}  // namespace viewsched
