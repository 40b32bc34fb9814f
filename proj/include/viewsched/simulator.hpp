#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "viewsched/branches.hpp"
#include "viewsched/core_types.hpp"
#include "viewsched/metrics.hpp"
#include "viewsched/predictors.hpp"
#include "viewsched/rng.hpp"
#include "viewsched/scheduler.hpp"
#include "viewsched/tracker.hpp"

namespace viewsched {

// ---------------------------------------------------------------------------
// Scenario generation

struct ClassSpec {
  double weight = 0.0;
  double speed_min = 0.0;  // m/s
  double speed_max = 0.0;
  double static_fraction = 0.0;  // share of spawned objects that never move
};

struct EgoPath {
  enum class Kind { Straight, Circular, Waypoints };
  Kind kind = Kind::Straight;
  double speed = 0.0;   // m/s
  double radius = 0.0;  // circular only
  std::vector<Eigen::Vector2d> waypoints;

  EgoPose at(double t) const;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  double duration_s = 10.0;
  double fps = 10.0;
  double world_radius = 60.0;
  double despawn_radius = 70.0;
  double spawn_rate = 1.0;  // objects per second, arriving at the world edge
  int initial_objects = 20;
  // Share of objects placed on a road band along the global x axis.
  double road_fraction = 0.0;
  double road_half_width = 6.0;
  double heading_sigma = 0.02;  // rad per frame, truncated at 3 sigma
  double speed_sigma = 0.05;    // m/s per frame, truncated at 3 sigma
  std::array<ClassSpec, kNumClasses> classes{};
  EgoPath ego;

  int frame_count() const;
  double dt() const { return 1.0 / fps; }
  void validate() const;
};

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& c);

struct GroundTruthFrame {
  int index = 0;
  double timestamp = 0.0;
  EgoPose ego;
  std::vector<Box3D> boxes;  // ego frame, within the world radius, stable ids
};

Eigen::Vector3d nominal_size(ObjectClass cls);

std::vector<GroundTruthFrame> generate_scenario(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Detection capability

struct BranchCapability {
  std::array<double, kNumCategories> recall{};
  std::array<double, kNumCategories> sigma_pos{};   // m, per planar axis
  std::array<double, kNumCategories> sigma_vel{};   // m/s, per planar axis
  std::array<double, kNumCategories> sigma_size{};  // relative
  double fp_rate = 0.0;  // false positives per view per frame
  double tp_conf_mean = 0.6;
  double tp_conf_sd = 0.0;
  double tp_conf_distance_slope = 0.0;  // subtracted per distance level
  double fp_conf_mean = 0.3;
  double fp_conf_sd = 0.0;
};

inline constexpr int kNumDetectionBranches = kNumBranches - 1;
inline constexpr int kCapabilityFormatVersion = 1;

struct CapabilityProfile {
  std::array<BranchCapability, kNumDetectionBranches> branches{};
  bool synthetic = true;

  const BranchCapability& of(int branch_index) const;
  BranchCapability& of(int branch_index);
  // Throws ConfigError when a value is out of range or an ordering
  // constraint of the detector family does not hold.
  void validate() const;
};

// Recall and noise tables shaped after the published capability trends:
// recall falls with distance and rises with backbone size, dense depth
// lowers position noise, fusion plus dense depth cuts velocity noise 2.4x.
CapabilityProfile default_capability();
// Recall 1, zero noise, no false positives, confidence 1.
CapabilityProfile perfect_capability();

CapabilityProfile capability_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CapabilityProfile& p);

// Detections for the ground-truth boxes of one view (ego frame). False
// positives land uniformly in the view's sector out to `max_range`.
std::vector<Box3D> synth_detect(int branch_index, std::span<const Box3D> view_ground_truth,
                                const CameraRig::Sector& sector, double max_range,
                                const CapabilityProfile& capability, Rng& rng);

// ---------------------------------------------------------------------------
// Closed-loop episodes

// Explore draws a random branch per view and frame; it is used to collect
// predictor training data across varied track ages.
enum class PolicyKind { Adaptive, PerFrame, Fixed, ForcedTracker, Explore };

struct Policy {
  PolicyKind kind = PolicyKind::Adaptive;
  int fixed_branch = -1;
  static Policy adaptive() { return {PolicyKind::Adaptive, -1}; }
  static Policy per_frame() { return {PolicyKind::PerFrame, -1}; }
  static Policy fixed(int branch) { return {PolicyKind::Fixed, branch}; }
  static Policy forced_tracker() { return {PolicyKind::ForcedTracker, -1}; }
  static Policy explore() { return {PolicyKind::Explore, -1}; }
  std::string name() const;
};

struct LatencyNoise {
  double sigma = 0.0;  // lognormal shape; 0 disables noise
  // Profiled latency is taken as this quantile of the realised distribution.
  double profile_quantile = 0.95;
};

struct SystemConfig {
  CameraRig rig = CameraRig::uniform(6);
  std::vector<int> branches;  // adapted branch set, must contain the tracker
  TrackerConfig tracker;
  std::optional<PredictorBundle> predictors;  // required by adaptive and per-frame policies
  DeviceProfile device;
  double target_ms = 33.0;
  CapabilityProfile capability;
  Policy policy;
  LatencyNoise noise;
  bool miss_exemption = true;     // tracker-served views do not penalise their tracks
  bool collect_training = false;  // log per-(view, branch) scores for predictor training
  double false_positive_range = 60.0;  // m, outer radius for false-positive placement
  std::uint64_t seed = 0;
};

struct TrainingView {
  int view = 0;
  DistributionVector distribution{};
  double mean_confidence = 0.0;
  std::vector<std::pair<int, double>> scores;  // (branch index, per-view DS)
};

struct FrameRecord {
  int frame = 0;
  double timestamp = 0.0;
  EgoPose ego;
  std::vector<Box3D> ground_truth;  // ego frame
  std::vector<Box3D> detections;    // ego frame, detection views only
  std::vector<Box3D> outputs;       // detections plus forecasts of tracker views
  std::vector<int> branch_per_view;
  double predicted_objective = 0.0;
  double uniform_objective = 0.0;  // best same-branch assignment on the same scores
  double t_max_ms = 0.0;
  double predicted_latency_ms = 0.0;
  double actual_latency_ms = 0.0;
  double actual_update_ms = 0.0;
  int scheduled_tracks = 0;  // tracks the schedule and update latency saw
  std::vector<TrackState> tracks;  // after the update, global frame
  std::vector<TrainingView> training;
};

struct EpisodeLog {
  std::vector<FrameRecord> frames;
  EvalSummary summary;
  int budget_violations = 0;  // realised latency above the target
};

EpisodeLog run_episode(std::span<const GroundTruthFrame> scenario, const SystemConfig& system);

nlohmann::json to_json(const Box3D& b);
Box3D box_from_json(const nlohmann::json& j);
nlohmann::json frame_record_to_json(const FrameRecord& r);
// Only the fields needed to train predictors are restored.
FrameRecord frame_record_from_json(const nlohmann::json& j);

}  // namespace viewsched
