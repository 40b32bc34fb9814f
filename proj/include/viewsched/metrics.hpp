#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "viewsched/core_types.hpp"

namespace viewsched {

struct EvalConfig {
  std::vector<double> thresholds = {0.5, 1.0, 2.0, 4.0};  // planar centre distance, metres
  double tp_threshold = 2.0;
  double min_recall = 0.10;
};

// Predictions and ground truth for one frame (or one view of a frame), in a
// common frame of reference.
struct EvalFrame {
  std::vector<Box3D> predictions;
  std::vector<Box3D> ground_truth;
};

// Greedy matching in descending confidence: each prediction takes the nearest
// unmatched same-class ground truth strictly within the threshold. Returns the
// matched ground-truth index per prediction, or -1 for a false positive.
std::vector<int> match(std::span<const Box3D> predictions, std::span<const Box3D> ground_truth, double threshold);

// 101-point interpolated AP over recall in [min_recall, 1], normalised so a
// perfect detector scores 1. nullopt when the class has no ground truth.
std::optional<double> average_precision(std::span<const EvalFrame> frames, ObjectClass cls, double threshold,
                                        const EvalConfig& config = {});

struct ClassMetrics {
  int gt_count = 0;
  std::vector<double> ap;  // per threshold
  int tp_count = 0;        // at tp_threshold
  double ate = 1.0;
  double ave = 1.0;
};

struct EvalSummary {
  double map = 0.0;
  double mate = 1.0;
  double mave = 1.0;
  double ds = 0.0;
  bool no_true_positives = true;  // errors fell back to the worst-case 1.0
  int evaluated_classes = 0;
  std::array<std::optional<ClassMetrics>, kNumClasses> per_class;
};

// (6 mAP + 2 max(1 - mATE, 0) + 2 max(1 - mAVE, 0)) / 10
double detection_score(double map, double mate, double mave);

EvalSummary summarize(std::span<const EvalFrame> frames, const EvalConfig& config = {});

nlohmann::json to_json(const EvalSummary& summary, const EvalConfig& config = {});

}  // namespace viewsched
