#include "viewsched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "viewsched/errors.hpp"

namespace viewsched {

namespace {

constexpr double kQuantEps = 1e-9;

void validate(const ScheduleProblem& p) {
  if (p.rows() == 0) throw ConfigError("schedule problem has no branches");
  if (static_cast<int>(p.scores.size()) != p.rows()) {
    throw ConfigError("schedule problem: score rows do not match latency entries");
  }
  const int n = p.views();
  bool has_free = false;
  for (int i = 0; i < p.rows(); ++i) {
    if (static_cast<int>(p.scores[i].size()) != n) throw ConfigError("schedule problem: ragged score matrix");
    for (double s : p.scores[i]) {
      if (!std::isfinite(s)) throw ConfigError("schedule problem: non-finite score");
    }
    if (!(p.latencies_ms[i] >= 0.0)) throw ConfigError("schedule problem: negative latency");
    if (p.latencies_ms[i] == 0.0) has_free = true;
  }
  if (!has_free) throw InvariantError("schedule problem: no zero-latency branch, feasibility not guaranteed");
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw ConfigError("schedule problem: alpha must lie in [0, 1]");
}

bool separable(const ScheduleProblem& p) { return p.alpha == 1.0; }

ScheduleDecision finish(const ScheduleProblem& p, std::vector<int> assignment) {
  ScheduleDecision d;
  d.objective = assignment_score(p, assignment);
  d.latency_ms = assignment_latency(p, assignment);
  d.latency_units = assignment_units(p, assignment);
  d.assignment = std::move(assignment);
  return d;
}

// Multiple-choice knapsack over integer latency units. Each (layer, weight)
// state keeps its best prefix under (score desc, prefix lexicographic asc).
ScheduleDecision solve_separable(const ScheduleProblem& p) {
  const int m = p.rows();
  const int n = p.views();
  std::vector<std::int64_t> unit(m);
  for (int i = 0; i < m; ++i) unit[i] = latency_units_ceil(p.latencies_ms[i]);

  std::int64_t cap = 0;
  for (int j = 0; j < n; ++j) cap += *std::max_element(unit.begin(), unit.end());
  const std::int64_t budget = latency_units_floor(p.t_max_ms);
  const int w_max = static_cast<int>(std::max<std::int64_t>(0, std::min(cap, budget)));
  const int width = w_max + 1;

  std::vector<char> valid(width, 0), next_valid(width);
  std::vector<double> score(width, 0.0), next_score(width);
  std::vector<int> prefix, next_prefix;  // width x layer, row-major
  valid[0] = 1;

  for (int j = 0; j < n; ++j) {
    const int len = j + 1;
    std::fill(next_valid.begin(), next_valid.end(), 0);
    next_prefix.assign(static_cast<std::size_t>(width) * len, 0);
    for (int w = 0; w < width; ++w) {
      if (!valid[w]) continue;
      const int* pre = prefix.data() + static_cast<std::size_t>(w) * j;
      for (int i = 0; i < m; ++i) {
        const std::int64_t nw64 = w + unit[i];
        if (nw64 > w_max) continue;
        const int nw = static_cast<int>(nw64);
        const double cand = score[w] + p.scores[i][j];
        int* dst = next_prefix.data() + static_cast<std::size_t>(nw) * len;
        bool take = !next_valid[nw] || cand > next_score[nw];
        if (!take && cand == next_score[nw]) {
          const auto mis = std::mismatch(pre, pre + j, dst);
          take = mis.first != pre + j ? *mis.first < *mis.second : i < dst[j];
        }
        if (!take) continue;
        next_valid[nw] = 1;
        next_score[nw] = cand;
        std::copy(pre, pre + j, dst);
        dst[j] = i;
      }
    }
    valid.swap(next_valid);
    score.swap(next_score);
    prefix.swap(next_prefix);
  }

  // Ascending weight with a strict comparison: equal scores keep the lighter state.
  int best = -1;
  for (int w = 0; w < width; ++w) {
    if (valid[w] && (best < 0 || score[w] > score[best])) best = w;
  }
  if (best < 0) throw InvariantError("schedule problem infeasible");
  std::vector<int> assignment(prefix.begin() + static_cast<std::ptrdiff_t>(best) * n,
                              prefix.begin() + static_cast<std::ptrdiff_t>(best + 1) * n);
  return finish(p, std::move(assignment));
}

// Depth-first search in lexicographic order with score and latency bounds.
class BatchedSearch {
 public:
  explicit BatchedSearch(const ScheduleProblem& p) : p_(p), n_(p.views()), m_(p.rows()) {
    budget_ = latency_units_floor(p.t_max_ms);
    remaining_max_.assign(n_ + 1, 0.0);
    for (int j = n_ - 1; j >= 0; --j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) mx = std::max(mx, p.scores[i][j]);
      remaining_max_[j] = remaining_max_[j + 1] + mx;
    }
    count_.assign(m_, 0);
    current_.assign(n_, 0);
  }

  std::vector<int> run() {
    dfs(0, 0.0, 0);
    if (best_.empty()) throw InvariantError("schedule problem infeasible");
    return best_;
  }

 private:
  std::int64_t group_units(int row, int k) const {
    return latency_units_ceil(batched_latency(p_.latencies_ms[row], k, p_.alpha));
  }

  void dfs(int j, double score, std::int64_t units) {
    if (j == n_) {
      if (best_.empty() || score > best_score_ || (score == best_score_ && units < best_units_)) {
        best_ = current_;
        best_score_ = score;
        best_units_ = units;
      }
      return;
    }
    if (!best_.empty()) {
      const double bound = score + remaining_max_[j];
      if (bound < best_score_ - 1e-9 * (1.0 + std::abs(best_score_))) return;
    }
    for (int i = 0; i < m_; ++i) {
      const std::int64_t added = group_units(i, count_[i] + 1) - group_units(i, count_[i]);
      if (units + added > budget_) continue;
      ++count_[i];
      current_[j] = i;
      dfs(j + 1, score + p_.scores[i][j], units + added);
      --count_[i];
    }
  }

  const ScheduleProblem& p_;
  int n_, m_;
  std::int64_t budget_ = 0;
  std::vector<double> remaining_max_;
  std::vector<int> count_, current_, best_;
  double best_score_ = 0.0;
  std::int64_t best_units_ = 0;
};

}  // namespace

std::int64_t latency_units_ceil(double ms) {
  return static_cast<std::int64_t>(std::ceil(ms * kLatencyUnitsPerMs - kQuantEps));
}

std::int64_t latency_units_floor(double ms) {
  return static_cast<std::int64_t>(std::floor(ms * kLatencyUnitsPerMs + kQuantEps));
}

std::int64_t assignment_units(const ScheduleProblem& p, std::span<const int> assignment) {
  std::int64_t total = 0;
  if (separable(p)) {
    for (int row : assignment) total += latency_units_ceil(p.latencies_ms[row]);
    return total;
  }
  std::vector<int> count(p.rows(), 0);
  for (int row : assignment) ++count[row];
  for (int i = 0; i < p.rows(); ++i) {
    total += latency_units_ceil(batched_latency(p.latencies_ms[i], count[i], p.alpha));
  }
  return total;
}

double assignment_latency(const ScheduleProblem& p, std::span<const int> assignment) {
  std::vector<int> count(p.rows(), 0);
  for (int row : assignment) ++count[row];
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i) total += batched_latency(p.latencies_ms[i], count[i], p.alpha);
  return total;
}

double assignment_score(const ScheduleProblem& p, std::span<const int> assignment) {
  double s = 0.0;
  for (std::size_t j = 0; j < assignment.size(); ++j) s += p.scores[assignment[j]][j];
  return s;
}

ScheduleDecision solve(const ScheduleProblem& problem) {
  validate(problem);
  if (problem.views() == 0) return finish(problem, {});
  if (separable(problem)) return solve_separable(problem);
  if (problem.views() > kMaxBatchedViews) {
    spdlog::warn("solve: {} views exceed the batched solver limit; scheduling with alpha = 1", problem.views());
    ScheduleProblem flat = problem;
    flat.alpha = 1.0;
    ScheduleDecision d = solve_separable(flat);
    d.alpha_forced = true;
    return d;
  }
  return finish(problem, BatchedSearch(problem).run());
}

ScheduleDecision solve_bruteforce(const ScheduleProblem& problem) {
  validate(problem);
  const int m = problem.rows();
  const int n = problem.views();
  double combos = 1.0;
  for (int j = 0; j < n; ++j) combos *= m;
  if (combos > 1e6) throw ConfigError("solve_bruteforce: instance too large (" + std::to_string(combos) + ")");

  const std::int64_t budget = latency_units_floor(problem.t_max_ms);
  std::vector<int> current(n, 0), best;
  double best_score = 0.0;
  std::int64_t best_units = 0;
  while (true) {
    const std::int64_t units = assignment_units(problem, current);
    if (units <= budget) {
      const double s = assignment_score(problem, current);
      if (best.empty() || s > best_score || (s == best_score && units < best_units)) {
        best = current;
        best_score = s;
        best_units = units;
      }
    }
    int j = n - 1;
    while (j >= 0 && ++current[j] == m) current[j--] = 0;
    if (j < 0) break;
  }
  if (best.empty()) throw InvariantError("schedule problem infeasible");
  return finish(problem, std::move(best));
}

ScheduleDecision solve_uniform(const ScheduleProblem& problem) {
  validate(problem);
  const std::int64_t budget = latency_units_floor(problem.t_max_ms);
  std::vector<int> best;
  double best_score = 0.0;
  std::int64_t best_units = 0;
  for (int i = 0; i < problem.rows(); ++i) {
    const std::vector<int> a(problem.views(), i);
    const std::int64_t units = assignment_units(problem, a);
    if (units > budget) continue;
    const double s = assignment_score(problem, a);
    if (best.empty() || s > best_score || (s == best_score && units < best_units)) {
      best = a;
      best_score = s;
      best_units = units;
    }
  }
  if (best.empty()) throw InvariantError("schedule problem infeasible");
  return finish(problem, std::move(best));
}

NormalizedScores normalize_scores(const ScoreMatrix& scores, std::span<const double> latencies_ms) {
  NormalizedScores out;
  out.scores = scores;
  if (scores.empty()) return out;
  int ref = 0;
  for (int i = 1; i < static_cast<int>(latencies_ms.size()); ++i) {
    if (latencies_ms[i] >= latencies_ms[ref]) ref = i;
  }
  out.reference_row = ref;
  const std::size_t n = scores.front().size();
  for (std::size_t j = 0; j < n; ++j) {
    const double denom = scores[ref][j];
    if (!(denom > 0.0)) {
      out.unscaled_views.push_back(static_cast<int>(j));
      spdlog::debug("normalize_scores: reference score {} in view {}, column left unscaled", denom, j);
      continue;
    }
    for (auto& row : out.scores) row[j] /= denom;
  }
  return out;
}

EffectiveBudget effective_budget(double target_ms, double predicted_update_ms, double fixed_ms) {
  if (!(target_ms > 0.0)) throw ConfigError("effective_budget: target latency must be positive");
  const double raw = target_ms - predicted_update_ms - fixed_ms;
  if (raw <= 0.0) {
    spdlog::warn("effective budget exhausted (target {} ms, update {} ms, fixed {} ms); tracker only", target_ms,
                 predicted_update_ms, fixed_ms);
    return {0.0, true};
  }
  return {raw, false};
}

SchedResult sched_predicted(std::span<const Box3D> predicted_ego, const SchedContext& ctx) {
  if (!ctx.rig || !ctx.predictors || !ctx.device) throw ConfigError("sched: incomplete context");
  if (std::find(ctx.branches.begin(), ctx.branches.end(), kTrackerBranch) == ctx.branches.end()) {
    throw ConfigError("sched: branch set must contain the tracker branch");
  }
  const int n = ctx.rig->view_count();
  const int m = static_cast<int>(ctx.branches.size());

  SchedResult r;
  r.track_count = static_cast<int>(predicted_ego.size());
  r.distributions = distribution(predicted_ego, *ctx.rig);
  r.mean_confidence.assign(n, 0.0);
  std::vector<int> per_view(n, 0);
  for (const Box3D& b : predicted_ego) {
    const int v = ctx.rig->view_of(b.center);
    r.mean_confidence[v] += b.confidence;
    ++per_view[v];
  }
  for (int j = 0; j < n; ++j) {
    if (per_view[j] > 0) r.mean_confidence[j] /= per_view[j];
  }

  ScoreMatrix raw(m, std::vector<double>(n));
  std::vector<double> lat(m);
  for (int i = 0; i < m; ++i) {
    lat[i] = branch_latency(ctx.branches[i], *ctx.device);
    for (int j = 0; j < n; ++j) {
      const FeatureRow f = make_features(r.distributions[j], ctx.branches[i], r.mean_confidence[j]);
      raw[i][j] = predict_accuracy(ctx.predictors->accuracy, f);
    }
  }
  NormalizedScores norm = normalize_scores(raw, lat);

  r.predicted_update_ms = ctx.predictors->update.predict(r.track_count);
  r.fixed_ms = fixed_latency(*ctx.device);
  const EffectiveBudget budget = effective_budget(ctx.target_ms, r.predicted_update_ms, r.fixed_ms);
  r.budget_clamped = budget.clamped;

  r.problem.scores = std::move(norm.scores);
  r.problem.latencies_ms = std::move(lat);
  r.problem.t_max_ms = budget.t_max_ms;
  r.problem.alpha = ctx.device->batching_alpha;
  r.decision = solve(r.problem);
  r.branch_per_view.resize(n);
  for (int j = 0; j < n; ++j) r.branch_per_view[j] = ctx.branches[r.decision.assignment[j]];
  r.predicted_frame_latency_ms = r.decision.latency_ms + r.fixed_ms + r.predicted_update_ms;
  return r;
}

SchedResult sched(std::span<const TrackState> tracks, double dt, const EgoPose& pose, const SchedContext& ctx,
                  const TrackerConfig& tracker) {
  std::vector<Box3D> ego;
  ego.reserve(tracks.size());
  for (const TrackState& t : forecast_all(tracks, dt, tracker.model)) {
    Box3D b = to_ego(t.as_box(), pose);
    b.confidence = reported_confidence(t, tracker);
    ego.push_back(b);
  }
  return sched_predicted(ego, ctx);
}

}  // namespace viewsched
