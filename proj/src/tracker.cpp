#include "viewsched/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

namespace viewsched {

namespace {

constexpr double kMinSize = 1e-3;
// Cost of a forbidden pair; exceeds any sum of gated distances.
constexpr double kForbidden = 1e6;

void symmetrize(StateMatrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Projects onto the PSD cone. Returns true when a repair was needed.
bool repair_psd(StateMatrix& m) {
  Eigen::SelfAdjointEigenSolver<StateMatrix> eig(m);
  if (eig.eigenvalues().minCoeff() >= -1e-9) return false;
  const StateVector clamped = eig.eigenvalues().cwiseMax(0.0);
  m = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  symmetrize(m);
  return true;
}

}  // namespace

StateMatrix KalmanModel::transition(double dt) {
  StateMatrix a = StateMatrix::Identity();
  a.block<3, 3>(0, 3) = dt * Eigen::Matrix3d::Identity();
  return a;
}

Box3D TrackState::as_box() const {
  Box3D b;
  b.center = position();
  b.velocity = velocity();
  b.size = size().cwiseMax(kMinSize);
  b.yaw = yaw;
  b.cls = cls;
  b.confidence = confidence;
  b.id = id;
  return b;
}

TrackState forecast(const TrackState& track, double dt, const KalmanModel& model) {
  const StateMatrix a = KalmanModel::transition(dt);
  TrackState out = track;
  out.mean = a * track.mean;
  out.covariance = a * track.covariance * a.transpose();
  out.covariance.diagonal() += model.process_noise * dt;
  symmetrize(out.covariance);
  return out;
}

std::vector<TrackState> forecast_all(std::span<const TrackState> tracks, double dt, const KalmanModel& model) {
  std::vector<TrackState> out;
  out.reserve(tracks.size());
  for (const TrackState& t : tracks) out.push_back(forecast(t, dt, model));
  return out;
}

// Shortest augmenting path with potentials (Kuhn-Munkres), O(n^2 m) for n <= m.
std::vector<int> solve_assignment(std::span<const double> cost, int rows, int cols) {
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  auto at = [&](int i, int j) {  // 1-based, i over the short side
    return transposed ? cost[static_cast<std::size_t>(j - 1) * cols + (i - 1)]
                      : cost[static_cast<std::size_t>(i - 1) * cols + (j - 1)];
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> result(rows, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      result[j - 1] = p[j] - 1;
    } else {
      result[p[j] - 1] = j - 1;
    }
  }
  return result;
}

Association associate(std::span<const TrackState> predicted, std::span<const Box3D> detections, double dt,
                      const TrackerConfig& config) {
  const int rows = static_cast<int>(predicted.size());
  const int cols = static_cast<int>(detections.size());
  std::vector<double> cost(static_cast<std::size_t>(rows) * cols, kForbidden);
  std::vector<double> gate(rows);
  for (int i = 0; i < rows; ++i) {
    gate[i] = config.gate_base + predicted[i].velocity().head<2>().norm() * dt;
    for (int j = 0; j < cols; ++j) {
      if (predicted[i].cls != detections[j].cls) continue;
      const double d = (predicted[i].position().head<2>() - detections[j].center.head<2>()).norm();
      if (d <= gate[i]) cost[static_cast<std::size_t>(i) * cols + j] = d;
    }
  }

  const std::vector<int> assignment = solve_assignment(cost, rows, cols);
  Association out;
  std::vector<char> det_used(cols, 0);
  for (int i = 0; i < rows; ++i) {
    const int j = assignment[i];
    if (j >= 0 && cost[static_cast<std::size_t>(i) * cols + j] < kForbidden) {
      out.pairs.emplace_back(i, j);
      det_used[j] = 1;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (int j = 0; j < cols; ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

UpdateResult update(const TrackState& track, const Box3D& detection, const KalmanModel& model) {
  StateVector z;
  z << detection.center, detection.velocity, detection.size;
  const StateMatrix r = model.measurement_noise.asDiagonal();
  const StateMatrix& p = track.covariance;
  const StateMatrix s = p + r;
  const StateMatrix k = s.ldlt().solve(p).transpose();  // P S^-1, both symmetric
  const StateMatrix i_k = StateMatrix::Identity() - k;

  UpdateResult res{track, false};
  TrackState& out = res.track;
  out.mean = track.mean + k * (z - track.mean);
  out.mean.segment<3>(6) = out.mean.segment<3>(6).cwiseMax(kMinSize);
  // Joseph form keeps the covariance PSD under round-off.
  out.covariance = i_k * p * i_k.transpose() + k * r * k.transpose();
  symmetrize(out.covariance);
  if (repair_psd(out.covariance)) {
    res.covariance_repaired = true;
    spdlog::debug("track {}: covariance repaired after update", track.id);
  }
  out.confidence = std::max(track.confidence, detection.confidence);
  out.misses = 0;
  out.unobserved = 0;
  out.yaw = detection.yaw;
  return res;
}

TrackState birth(const Box3D& detection, std::int64_t id, const KalmanModel& model) {
  TrackState t;
  t.id = id;
  t.mean << detection.center, detection.velocity, detection.size;
  t.covariance = model.measurement_noise.asDiagonal();
  t.cls = detection.cls;
  t.confidence = detection.confidence;
  t.yaw = detection.yaw;
  return t;
}

double reported_confidence(const TrackState& track, const TrackerConfig& config) {
  return track.confidence * std::pow(config.halving_factor, track.unobserved - track.misses);
}

StepReport step(TrackSet& set, std::span<const Box3D> detections, double dt, const TrackerConfig& config,
                const MissPolicy& penalize) {
  StepReport report;
  std::vector<TrackState> predicted = forecast_all(set.tracks, dt, config.model);
  const Association assoc = associate(predicted, detections, dt, config);

  std::vector<char> keep(predicted.size(), 1);
  for (auto [ti, di] : assoc.pairs) {
    UpdateResult r = update(predicted[ti], detections[di], config.model);
    report.covariance_repairs += r.covariance_repaired ? 1 : 0;
    predicted[ti] = std::move(r.track);
    ++report.matched;
  }
  for (int ti : assoc.unmatched_tracks) {
    TrackState& t = predicted[ti];
    ++t.unobserved;
    if (penalize && !penalize(t)) continue;
    t.confidence *= config.halving_factor;
    ++t.misses;
    if (t.confidence < config.confidence_threshold) keep[ti] = 0;
  }

  std::vector<TrackState> next;
  next.reserve(predicted.size() + assoc.unmatched_detections.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!keep[i]) {
      ++report.removed;
      continue;
    }
    ++predicted[i].age;
    next.push_back(std::move(predicted[i]));
  }
  for (int di : assoc.unmatched_detections) {
    next.push_back(birth(detections[di], set.next_id++, config.model));
    ++report.born;
  }
  set.tracks = std::move(next);
  return report;
}

}  // namespace viewsched
