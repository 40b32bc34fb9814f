#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "viewsched/branches.hpp"
#include "viewsched/core_types.hpp"
#include "viewsched/predictors.hpp"
#include "viewsched/tracker.hpp"

namespace viewsched {

// Latencies are compared in whole 0.1 ms units: branch costs round up and
// the budget rounds down, so a feasible decision never exceeds the real budget.
inline constexpr double kLatencyUnitsPerMs = 10.0;
std::int64_t latency_units_ceil(double ms);
std::int64_t latency_units_floor(double ms);

using ScoreMatrix = std::vector<std::vector<double>>;  // [row][view]

// One branch per view, maximize the summed score within the latency budget.
// Rows are candidate branches; at least one row must have zero latency.
struct ScheduleProblem {
  ScoreMatrix scores;
  std::vector<double> latencies_ms;  // per-view marginal cost of each row
  double t_max_ms = 0.0;
  double alpha = 1.0;  // batching factor, see batched_latency

  int rows() const { return static_cast<int>(latencies_ms.size()); }
  int views() const { return scores.empty() ? 0 : static_cast<int>(scores.front().size()); }
};

struct ScheduleDecision {
  std::vector<int> assignment;  // row per view
  double objective = 0.0;
  double latency_ms = 0.0;  // sum of (batched) marginals
  std::int64_t latency_units = 0;
  bool alpha_forced = false;  // batching ignored because the instance was too wide
};

// Quantized cost of a full assignment under the problem's batching rule.
std::int64_t assignment_units(const ScheduleProblem& problem, std::span<const int> assignment);
double assignment_latency(const ScheduleProblem& problem, std::span<const int> assignment);
// Left fold over views, the summation order every solver uses.
double assignment_score(const ScheduleProblem& problem, std::span<const int> assignment);

// Largest view count for which batching (alpha != 1) is solved exactly.
inline constexpr int kMaxBatchedViews = 8;

// Exact optimum. Ties: lower latency units, then lexicographically smallest
// assignment.
ScheduleDecision solve(const ScheduleProblem& problem);
// Exhaustive oracle with the same tie-breaking. Throws ConfigError when
// rows^views exceeds 10^6.
ScheduleDecision solve_bruteforce(const ScheduleProblem& problem);
// Best assignment that gives every view the same row.
ScheduleDecision solve_uniform(const ScheduleProblem& problem);

struct NormalizedScores {
  ScoreMatrix scores;
  int reference_row = -1;
  std::vector<int> unscaled_views;  // reference score was not positive
};

// Divides each view's column by the score of the heaviest row (largest
// latency, ties to the later row).
NormalizedScores normalize_scores(const ScoreMatrix& scores, std::span<const double> latencies_ms);

struct EffectiveBudget {
  double t_max_ms = 0.0;
  bool clamped = false;
};
EffectiveBudget effective_budget(double target_ms, double predicted_update_ms, double fixed_ms);

struct SchedContext {
  const CameraRig* rig = nullptr;
  std::vector<int> branches;  // surviving branch indices; must contain the tracker
  const PredictorBundle* predictors = nullptr;
  const DeviceProfile* device = nullptr;
  double target_ms = 0.0;
};

struct SchedResult {
  ScheduleDecision decision;      // assignment holds rows into context.branches
  std::vector<int> branch_per_view;  // global branch indices
  ScheduleProblem problem;        // normalized scores, latencies, T_MAX
  std::vector<DistributionVector> distributions;
  std::vector<double> mean_confidence;  // per view, 0 when empty
  int track_count = 0;
  double predicted_update_ms = 0.0;
  double fixed_ms = 0.0;
  bool budget_clamped = false;
  double predicted_frame_latency_ms = 0.0;
};

// Scheduling from forecast states expressed in the current ego frame.
SchedResult sched_predicted(std::span<const Box3D> predicted_ego, const SchedContext& ctx);
// Full SCHED step: forecast the tracks (global frame) by dt, move them into
// the ego frame at `pose` and schedule. Forecast boxes carry the reported
// confidence of their track.
SchedResult sched(std::span<const TrackState> tracks, double dt, const EgoPose& pose, const SchedContext& ctx,
                  const TrackerConfig& tracker = {});

}  // namespace viewsched
