#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "viewsched/errors.hpp"
#include "viewsched/simulator.hpp"

namespace viewsched {

namespace {

constexpr double kComplianceToleranceMs = 1e-6;

double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Multiplicative lognormal factors placed so the profiled value sits at the
// configured quantile of the realised latency.
class NoiseSource {
 public:
  NoiseSource(const LatencyNoise& noise, std::uint64_t seed, int frame)
      : sigma_(noise.sigma), rng_(make_stream(seed, StreamKind::LatencyNoise, {static_cast<std::uint64_t>(frame)})) {
    if (sigma_ > 0.0) shift_ = -normal_quantile(noise.profile_quantile) * sigma_;
  }
  double factor() {
    if (!(sigma_ > 0.0)) return 1.0;
    return std::exp(shift_ + sigma_ * standard_normal(rng_));
  }

 private:
  double sigma_;
  double shift_ = 0.0;
  Rng rng_;
};

std::vector<std::vector<Box3D>> split_by_view(std::span<const Box3D> boxes, const CameraRig& rig) {
  std::vector<std::vector<Box3D>> out(rig.view_count());
  for (const Box3D& b : boxes) out[rig.view_of(b.center)].push_back(b);
  return out;
}

// Distinct branches of an assignment with their view counts, ascending by index.
std::map<int, int> branch_groups(std::span<const int> branch_per_view) {
  std::map<int, int> g;
  for (int b : branch_per_view) ++g[b];
  return g;
}

double planned_latency(std::span<const int> branch_per_view, const DeviceProfile& device) {
  double total = 0.0;
  for (const auto& [b, k] : branch_groups(branch_per_view)) {
    total += batched_latency(branch_latency(b, device), k, device.batching_alpha);
  }
  return total;
}

double per_view_ds(std::span<const Box3D> predictions, std::span<const Box3D> ground_truth) {
  const EvalFrame frame{{predictions.begin(), predictions.end()}, {ground_truth.begin(), ground_truth.end()}};
  return summarize(std::span<const EvalFrame>(&frame, 1)).ds;
}

void check_system(const SystemConfig& s) {
  if (std::find(s.branches.begin(), s.branches.end(), kTrackerBranch) == s.branches.end()) {
    throw ConfigError("episode: branch set must contain the tracker branch");
  }
  for (int b : s.branches) {
    if (b < 0 || b >= kNumBranches) throw ConfigError("episode: branch index " + std::to_string(b) + " out of range");
  }
  const bool needs_predictors = s.policy.kind == PolicyKind::Adaptive || s.policy.kind == PolicyKind::PerFrame;
  if (needs_predictors && !s.predictors) throw ConfigError("episode: policy " + s.policy.name() + " needs predictors");
  if (s.policy.kind == PolicyKind::Fixed && (s.policy.fixed_branch < 0 || s.policy.fixed_branch >= kNumBranches)) {
    throw ConfigError("episode: fixed policy needs a valid branch");
  }
  if (s.noise.sigma < 0.0 || !(s.noise.profile_quantile > 0.0 && s.noise.profile_quantile < 1.0)) {
    throw ConfigError("episode: latency noise needs sigma >= 0 and a quantile in (0, 1)");
  }
  s.device.validate();
}

// Lightest detection branch of the set if six views of it fit the target,
// otherwise the tracker.
int warmup_branch(const SystemConfig& s) {
  int best = kTrackerBranch;
  double best_ms = 0.0;
  for (int b : s.branches) {
    if (b == kTrackerBranch) continue;
    const double ms = branch_latency(b, s.device);
    if (best == kTrackerBranch || ms < best_ms) {
      best = b;
      best_ms = ms;
    }
  }
  if (best == kTrackerBranch) return best;
  const std::vector<int> uniform(s.rig.view_count(), best);
  const double ms = planned_latency(uniform, s.device) + fixed_latency(s.device) + s.device.update_cost.at(0);
  return ms <= s.target_ms ? best : kTrackerBranch;
}

nlohmann::json vec3(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json boxes_json(std::span<const Box3D> boxes) {
  nlohmann::json a = nlohmann::json::array();
  for (const Box3D& b : boxes) a.push_back(to_json(b));
  return a;
}

}  // namespace

std::string Policy::name() const {
  switch (kind) {
    case PolicyKind::Adaptive: return "adaptive";
    case PolicyKind::PerFrame: return "per_frame";
    case PolicyKind::Fixed: return "fixed:" + BranchConfig::from_index(fixed_branch).name();
    case PolicyKind::ForcedTracker: return "forced_tracker";
    case PolicyKind::Explore: return "explore";
  }
  return "unknown";
}

EpisodeLog run_episode(std::span<const GroundTruthFrame> scenario, const SystemConfig& system) {
  check_system(system);
  const CameraRig& rig = system.rig;
  const int n_views = rig.view_count();
  const bool exemption = system.miss_exemption && system.policy.kind != PolicyKind::ForcedTracker;

  SchedContext ctx;
  ctx.rig = &rig;
  ctx.branches = system.branches;
  ctx.predictors = system.predictors ? &*system.predictors : nullptr;
  ctx.device = &system.device;
  ctx.target_ms = system.target_ms;

  EpisodeLog log;
  TrackSet tracks;
  std::vector<EvalFrame> eval;
  const int warmup = warmup_branch(system);

  for (std::size_t f = 0; f < scenario.size(); ++f) {
    const GroundTruthFrame& gt = scenario[f];
    const int frame_no = gt.index;
    double dt = 0.0;
    if (f > 0) {
      dt = gt.timestamp - scenario[f - 1].timestamp;
    } else if (scenario.size() > 1) {
      dt = scenario[1].timestamp - scenario[0].timestamp;
    }

    FrameRecord rec;
    rec.frame = frame_no;
    rec.timestamp = gt.timestamp;
    rec.ego = gt.ego;
    rec.ground_truth = gt.boxes;
    rec.scheduled_tracks = static_cast<int>(tracks.tracks.size());

    std::vector<Box3D> forecast_ego;
    forecast_ego.reserve(tracks.tracks.size());
    for (const TrackState& t : forecast_all(tracks.tracks, dt, system.tracker.model)) {
      Box3D b = to_ego(t.as_box(), gt.ego);
      b.confidence = reported_confidence(t, system.tracker);
      forecast_ego.push_back(b);
    }

    const bool warm = f == 0 && system.policy.kind != PolicyKind::Fixed && system.policy.kind != PolicyKind::Explore;
    std::optional<SchedResult> planned;
    if (!warm && (system.policy.kind == PolicyKind::Adaptive || system.policy.kind == PolicyKind::PerFrame)) {
      planned = sched_predicted(forecast_ego, ctx);
      rec.t_max_ms = planned->problem.t_max_ms;
      const ScheduleDecision uniform = solve_uniform(planned->problem);
      rec.uniform_objective = uniform.objective;
      if (system.policy.kind == PolicyKind::Adaptive) {
        rec.branch_per_view = planned->branch_per_view;
        rec.predicted_objective = planned->decision.objective;
      } else {
        rec.branch_per_view.resize(n_views);
        for (int j = 0; j < n_views; ++j) rec.branch_per_view[j] = system.branches[uniform.assignment[j]];
        rec.predicted_objective = uniform.objective;
      }
    } else if (warm) {
      rec.branch_per_view.assign(n_views, warmup);
    } else if (system.policy.kind == PolicyKind::Explore) {
      // Tracker half the time so that multi-frame tracker streaks show up in
      // the training data; otherwise a uniformly drawn detection branch.
      std::vector<int> detectors;
      for (int b : system.branches) {
        if (b != kTrackerBranch) detectors.push_back(b);
      }
      Rng rng = make_stream(system.seed, StreamKind::Training, {static_cast<std::uint64_t>(frame_no)});
      for (int j = 0; j < n_views; ++j) {
        const double u = uniform01(rng);
        const std::size_t pick = std::min(detectors.size() - 1, static_cast<std::size_t>(uniform01(rng) * detectors.size()));
        rec.branch_per_view.push_back(u < 0.5 || detectors.empty() ? kTrackerBranch : detectors[pick]);
      }
    } else if (system.policy.kind == PolicyKind::Fixed) {
      rec.branch_per_view.assign(n_views, system.policy.fixed_branch);
    } else {
      rec.branch_per_view.assign(n_views, kTrackerBranch);
    }

    const double predicted_update =
        system.predictors ? system.predictors->update.predict(rec.scheduled_tracks)
                          : system.device.update_cost.at(rec.scheduled_tracks);
    if (!planned) {
      rec.t_max_ms = effective_budget(system.target_ms, predicted_update, fixed_latency(system.device)).t_max_ms;
    }
    rec.predicted_latency_ms =
        planned_latency(rec.branch_per_view, system.device) + fixed_latency(system.device) + predicted_update;

    // Detection on the views that run a detector.
    const std::vector<std::vector<Box3D>> gt_by_view = split_by_view(gt.boxes, rig);
    const std::vector<std::vector<Box3D>> forecast_by_view = split_by_view(forecast_ego, rig);
    for (int j = 0; j < n_views; ++j) {
      const int b = rec.branch_per_view[j];
      if (b == kTrackerBranch) {
        rec.outputs.insert(rec.outputs.end(), forecast_by_view[j].begin(), forecast_by_view[j].end());
        continue;
      }
      Rng rng = make_stream(system.seed, StreamKind::Detection,
                            {static_cast<std::uint64_t>(frame_no), static_cast<std::uint64_t>(j)});
      const std::vector<Box3D> dets = synth_detect(b, gt_by_view[j], rig.sectors()[j],
                                                   system.false_positive_range, system.capability, rng);
      rec.detections.insert(rec.detections.end(), dets.begin(), dets.end());
      rec.outputs.insert(rec.outputs.end(), dets.begin(), dets.end());
    }

    // Realised latency.
    NoiseSource noise(system.noise, system.seed, frame_no);
    double actual = 0.0;
    for (const auto& [b, k] : branch_groups(rec.branch_per_view)) {
      actual += batched_latency(branch_latency(b, system.device), k, system.device.batching_alpha) * noise.factor();
    }
    actual += fixed_latency(system.device) * noise.factor();
    rec.actual_update_ms = system.device.update_cost.at(rec.scheduled_tracks) * noise.factor();
    rec.actual_latency_ms = actual + rec.actual_update_ms;
    if (rec.actual_latency_ms > system.target_ms + kComplianceToleranceMs) ++log.budget_violations;

    if (system.collect_training) {
      const std::vector<DistributionVector> dist = distribution(forecast_ego, rig);
      for (int j = 0; j < n_views; ++j) {
        if (gt_by_view[j].empty()) continue;
        TrainingView tv;
        tv.view = j;
        tv.distribution = dist[j];
        for (const Box3D& b : forecast_by_view[j]) tv.mean_confidence += b.confidence;
        if (!forecast_by_view[j].empty()) tv.mean_confidence /= static_cast<double>(forecast_by_view[j].size());
        for (int b : system.branches) {
          if (b == kTrackerBranch) {
            tv.scores.emplace_back(b, per_view_ds(forecast_by_view[j], gt_by_view[j]));
            continue;
          }
          Rng rng = make_stream(system.seed, StreamKind::Training,
                                {static_cast<std::uint64_t>(frame_no), static_cast<std::uint64_t>(j),
                                 static_cast<std::uint64_t>(b)});
          const std::vector<Box3D> dets = synth_detect(b, gt_by_view[j], rig.sectors()[j],
                                                       system.false_positive_range, system.capability, rng);
          tv.scores.emplace_back(b, per_view_ds(dets, gt_by_view[j]));
        }
        rec.training.push_back(std::move(tv));
      }
    }

    // Tracker update in the global frame.
    std::vector<Box3D> global_dets;
    global_dets.reserve(rec.detections.size());
    for (const Box3D& d : rec.detections) global_dets.push_back(to_global(d, gt.ego));
    MissPolicy penalize;
    if (exemption) {
      penalize = [&](const TrackState& predicted) {
        const int v = rig.view_of(to_ego(predicted.as_box(), gt.ego).center);
        return rec.branch_per_view[v] != kTrackerBranch;
      };
    }
    const StepReport report = step(tracks, global_dets, dt, system.tracker, penalize);
    if (report.covariance_repairs > 0) {
      spdlog::debug("frame {}: {} covariance repairs", frame_no, report.covariance_repairs);
    }
    rec.tracks = tracks.tracks;

    eval.push_back({rec.outputs, rec.ground_truth});
    log.frames.push_back(std::move(rec));
  }
  log.summary = summarize(eval);
  return log;
}

nlohmann::json to_json(const Box3D& b) {
  nlohmann::json j = {{"cls", std::string(to_string(b.cls))},
                      {"center", vec3(b.center)},
                      {"size", vec3(b.size)},
                      {"velocity", vec3(b.velocity)},
                      {"yaw", b.yaw},
                      {"confidence", b.confidence}};
  if (b.id >= 0) j["id"] = b.id;
  return j;
}

Box3D box_from_json(const nlohmann::json& j) {
  Box3D b;
  b.cls = class_from_string(j.at("cls").get<std::string>());
  b.center = vec3_from(j.at("center"));
  b.size = vec3_from(j.at("size"));
  b.velocity = vec3_from(j.at("velocity"));
  b.yaw = j.at("yaw").get<double>();
  b.confidence = j.at("confidence").get<double>();
  b.id = j.value("id", std::int64_t{-1});
  return b;
}

nlohmann::json frame_record_to_json(const FrameRecord& r) {
  nlohmann::json branches = nlohmann::json::array();
  for (int b : r.branch_per_view) branches.push_back(BranchConfig::from_index(b).name());
  nlohmann::json tracks = nlohmann::json::array();
  for (const TrackState& t : r.tracks) {
    tracks.push_back({{"id", t.id},
                      {"cls", std::string(to_string(t.cls))},
                      {"confidence", t.confidence},
                      {"misses", t.misses},
                      {"age", t.age},
                      {"state", std::vector<double>(t.mean.data(), t.mean.data() + kStateDim)}});
  }
  nlohmann::json training = nlohmann::json::array();
  for (const TrainingView& tv : r.training) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [b, ds] : tv.scores) scores.push_back({{"branch", BranchConfig::from_index(b).name()}, {"ds", ds}});
    training.push_back({{"view", tv.view},
                        {"distribution", tv.distribution},
                        {"mean_confidence", tv.mean_confidence},
                        {"scores", scores}});
  }
  return {{"frame", r.frame},
          {"timestamp", r.timestamp},
          {"ego", {{"x", r.ego.x}, {"y", r.ego.y}, {"yaw", r.ego.yaw}}},
          {"branch_per_view", branches},
          {"predicted_objective", r.predicted_objective},
          {"uniform_objective", r.uniform_objective},
          {"t_max_ms", r.t_max_ms},
          {"predicted_latency_ms", r.predicted_latency_ms},
          {"actual_latency_ms", r.actual_latency_ms},
          {"actual_update_ms", r.actual_update_ms},
          {"scheduled_tracks", r.scheduled_tracks},
          {"ground_truth", boxes_json(r.ground_truth)},
          {"detections", boxes_json(r.detections)},
          {"outputs", boxes_json(r.outputs)},
          {"tracks", tracks},
          {"training", training}};
}

FrameRecord frame_record_from_json(const nlohmann::json& j) {
  FrameRecord r;
  try {
    r.frame = j.at("frame").get<int>();
    r.timestamp = j.value("timestamp", 0.0);
    r.scheduled_tracks = j.at("scheduled_tracks").get<int>();
    r.actual_update_ms = j.at("actual_update_ms").get<double>();
    for (const auto& b : j.at("branch_per_view")) r.branch_per_view.push_back(branch_index_from_name(b.get<std::string>()));
    for (const auto& t : j.at("training")) {
      TrainingView tv;
      tv.view = t.at("view").get<int>();
      const auto dist = t.at("distribution").get<std::vector<double>>();
      if (dist.size() != tv.distribution.size()) throw ConfigError("episode log: distribution needs 80 entries");
      std::copy(dist.begin(), dist.end(), tv.distribution.begin());
      tv.mean_confidence = t.at("mean_confidence").get<double>();
      for (const auto& s : t.at("scores")) {
        tv.scores.emplace_back(branch_index_from_name(s.at("branch").get<std::string>()), s.at("ds").get<double>());
      }
      r.training.push_back(std::move(tv));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("episode log: ") + e.what());
  }
  return r;
}

}  // namespace viewsched
