#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "viewsched/core_types.hpp"

namespace viewsched {

inline constexpr int kStateDim = 9;
using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

// Constant-velocity model over (x, y, z, vx, vy, vz, w, h, l). The full
// state is measured directly (H = I).
struct KalmanModel {
  StateVector process_noise = (StateVector() << 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.01, 0.01, 0.01).finished();
  StateVector measurement_noise =
      (StateVector() << 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.04, 0.04, 0.04).finished();

  static StateMatrix transition(double dt);
};

struct TrackState {
  std::int64_t id = 0;
  StateVector mean = StateVector::Zero();
  StateMatrix covariance = StateMatrix::Identity();
  ObjectClass cls = ObjectClass::Car;
  double confidence = 0.0;
  int misses = 0;
  int unobserved = 0;  // unmatched frames since the last update, exempt ones included
  int age = 0;
  double yaw = 0.0;  // carried, not filtered

  Eigen::Vector3d position() const { return mean.segment<3>(0); }
  Eigen::Vector3d velocity() const { return mean.segment<3>(3); }
  Eigen::Vector3d size() const { return mean.segment<3>(6); }
  Box3D as_box() const;
};

struct TrackerConfig {
  KalmanModel model;
  // Association gate is gate_base + |v_track| * dt (planar metres).
  double gate_base = 2.0;
  double confidence_threshold = 0.10;
  double halving_factor = 0.5;
};

TrackState forecast(const TrackState& track, double dt, const KalmanModel& model = {});
std::vector<TrackState> forecast_all(std::span<const TrackState> tracks, double dt,
                                     const KalmanModel& model = {});

struct Association {
  std::vector<std::pair<int, int>> pairs;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

// Minimum-cost one-to-one assignment for a rectangular cost matrix
// (rows x cols, row-major). Returns the column assigned to each row, or -1.
std::vector<int> solve_assignment(std::span<const double> cost, int rows, int cols);

// Optimal planar-distance matching; pairs across classes or outside the gate
// are rejected.
Association associate(std::span<const TrackState> predicted, std::span<const Box3D> detections,
                      double dt, const TrackerConfig& config);

struct UpdateResult {
  TrackState track;
  bool covariance_repaired = false;
};

UpdateResult update(const TrackState& track, const Box3D& detection, const KalmanModel& model = {});

// Track set owned by one episode. Ids are never reused.
struct TrackSet {
  std::vector<TrackState> tracks;
  std::int64_t next_id = 0;
};

struct StepReport {
  int matched = 0;
  int born = 0;
  int removed = 0;
  int covariance_repairs = 0;
};

// Decides whether an unmatched track is penalised this frame. Tracks in views
// that ran no detector are exempt.
using MissPolicy = std::function<bool(const TrackState& predicted)>;

// Forecasts `set` by dt, associates with `detections` (same frame as the
// tracks), updates, applies the miss penalty and spawns new tracks.
// Confidence as if every unmatched frame since the last update had been
// penalised. Forecast outputs and the accuracy predictor see this value, so a
// view served by the tracker for several frames reports its growing staleness
// while its tracks stay alive.
double reported_confidence(const TrackState& track, const TrackerConfig& config);

StepReport step(TrackSet& set, std::span<const Box3D> detections, double dt, const TrackerConfig& config,
                const MissPolicy& penalize = {});

TrackState birth(const Box3D& detection, std::int64_t id, const KalmanModel& model = {});

}  // namespace viewsched
