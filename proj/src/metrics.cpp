#include "viewsched/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace viewsched {

namespace {

constexpr int kRecallBins = 100;  // grid k/100, k = 0..100

std::vector<int> confidence_order(std::span<const Box3D> preds) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].confidence > preds[b].confidence; });
  return order;
}

double planar_distance(const Box3D& a, const Box3D& b) { return (a.center.head<2>() - b.center.head<2>()).norm(); }

std::string threshold_key(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

std::vector<int> match(std::span<const Box3D> predictions, std::span<const Box3D> ground_truth, double threshold) {
  std::vector<int> result(predictions.size(), -1);
  std::vector<char> taken(ground_truth.size(), 0);
  for (int p : confidence_order(predictions)) {
    int best = -1;
    double best_dist = threshold;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g] || ground_truth[g].cls != predictions[p].cls) continue;
      const double d = planar_distance(predictions[p], ground_truth[g]);
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      result[p] = best;
    }
  }
  return result;
}

std::optional<double> average_precision(std::span<const EvalFrame> frames, ObjectClass cls, double threshold,
                                        const EvalConfig& config) {
  struct Scored {
    double confidence;
    bool tp;
  };
  std::vector<Scored> scored;
  int npos = 0;
  for (const EvalFrame& f : frames) {
    std::vector<Box3D> preds, gts;
    for (const Box3D& b : f.predictions) {
      if (b.cls == cls) preds.push_back(b);
    }
    for (const Box3D& b : f.ground_truth) {
      if (b.cls == cls) gts.push_back(b);
    }
    npos += static_cast<int>(gts.size());
    const std::vector<int> m = match(preds, gts, threshold);
    for (std::size_t i = 0; i < preds.size(); ++i) scored.push_back({preds[i].confidence, m[i] >= 0});
  }
  if (npos == 0) return std::nullopt;

  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.confidence > b.confidence; });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const Scored& s : scored) {
    (s.tp ? tp : fp) += 1;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / npos);
  }
  // Interpolated precision: best precision at any recall >= r.
  std::vector<double> envelope(precision.size());
  double running = 0.0;
  for (std::size_t k = precision.size(); k-- > 0;) {
    running = std::max(running, precision[k]);
    envelope[k] = running;
  }

  const int first = static_cast<int>(std::lround(config.min_recall * kRecallBins)) + 1;
  double area = 0.0;
  std::size_t cursor = 0;
  for (int g = first; g <= kRecallBins; ++g) {
    const double r = static_cast<double>(g) / kRecallBins;
    while (cursor < recall.size() && recall[cursor] < r - 1e-12) ++cursor;
    if (cursor < recall.size()) area += envelope[cursor];
  }
  return area / (kRecallBins - first + 1);
}

double detection_score(double map, double mate, double mave) {
  return (6.0 * map + 2.0 * std::max(1.0 - mate, 0.0) + 2.0 * std::max(1.0 - mave, 0.0)) / 10.0;
}

EvalSummary summarize(std::span<const EvalFrame> frames, const EvalConfig& config) {
  EvalSummary s;
  double ap_sum = 0.0, ate_sum = 0.0, ave_sum = 0.0;
  int ap_terms = 0;

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ObjectClass cls = kAllClasses[c];
    ClassMetrics cm;
    for (const EvalFrame& f : frames) {
      for (const Box3D& b : f.ground_truth) cm.gt_count += b.cls == cls ? 1 : 0;
    }
    if (cm.gt_count == 0) continue;

    for (double t : config.thresholds) {
      const double ap = average_precision(frames, cls, t, config).value_or(0.0);
      cm.ap.push_back(ap);
      ap_sum += ap;
      ++ap_terms;
    }

    double ate = 0.0, ave = 0.0;
    for (const EvalFrame& f : frames) {
      std::vector<Box3D> preds, gts;
      for (const Box3D& b : f.predictions) {
        if (b.cls == cls) preds.push_back(b);
      }
      for (const Box3D& b : f.ground_truth) {
        if (b.cls == cls) gts.push_back(b);
      }
      const std::vector<int> m = match(preds, gts, config.tp_threshold);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (m[i] < 0) continue;
        ate += planar_distance(preds[i], gts[m[i]]);
        ave += (preds[i].velocity.head<2>() - gts[m[i]].velocity.head<2>()).norm();
        ++cm.tp_count;
      }
    }
    if (cm.tp_count > 0) {
      cm.ate = ate / cm.tp_count;
      cm.ave = ave / cm.tp_count;
      s.no_true_positives = false;
    }
    ate_sum += cm.ate;
    ave_sum += cm.ave;
    ++s.evaluated_classes;
    s.per_class[c] = std::move(cm);
  }

  if (s.evaluated_classes > 0) {
    s.map = ap_sum / ap_terms;
    s.mate = ate_sum / s.evaluated_classes;
    s.mave = ave_sum / s.evaluated_classes;
  }
  s.ds = detection_score(s.map, s.mate, s.mave);
  return s;
}

nlohmann::json to_json(const EvalSummary& summary, const EvalConfig& config) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!summary.per_class[c]) continue;
    const ClassMetrics& cm = *summary.per_class[c];
    nlohmann::json ap = nlohmann::json::object();
    for (std::size_t t = 0; t < config.thresholds.size() && t < cm.ap.size(); ++t) {
      ap[threshold_key(config.thresholds[t])] = cm.ap[t];
    }
    per_class[std::string(to_string(kAllClasses[c]))] = {
        {"gt_count", cm.gt_count}, {"tp_count", cm.tp_count}, {"ap", ap}, {"ate", cm.ate}, {"ave", cm.ave}};
  }
  return {{"summary",
           {{"mAP", summary.map},
            {"mATE", summary.mate},
            {"mAVE", summary.mave},
            {"DS", summary.ds},
            {"evaluated_classes", summary.evaluated_classes},
            {"errors_worst_case", summary.no_true_positives}}},
          {"per_class", per_class},
          {"config",
           {{"thresholds_m", config.thresholds},
            {"tp_threshold_m", config.tp_threshold},
            {"min_recall", config.min_recall}}}};
}

}  // namespace viewsched
