#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "viewsched/rng.hpp"
#include "viewsched/tracker.hpp"

using namespace viewsched;

namespace {

TrackState random_track(Rng& rng) {
  TrackState t;
  for (int i = 0; i < 6; ++i) t.mean[i] = 20 * uniform01(rng) - 10;
  for (int i = 6; i < 9; ++i) t.mean[i] = 0.5 + 3 * uniform01(rng);
  t.confidence = 0.5;
  return t;
}

Box3D detection_at(double x, double y, double conf = 0.8, ObjectClass cls = ObjectClass::Car) {
  Box3D b;
  b.center = {x, y, 0.8};
  b.size = {1.9, 1.6, 4.6};
  b.cls = cls;
  b.confidence = conf;
  return b;
}

double min_eigenvalue(const StateMatrix& m) {
  Eigen::SelfAdjointEigenSolver<StateMatrix> es(m);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("transition matrix") {
  CHECK(KalmanModel::transition(0.0).isIdentity());
  const StateMatrix a = KalmanModel::transition(0.5);
  CHECK(a(0, 3) == 0.5);
  CHECK(a(1, 4) == 0.5);
  CHECK(a(2, 5) == 0.5);
  CHECK(a(3, 3) == 1.0);
  CHECK(a(6, 6) == 1.0);
  CHECK((a - StateMatrix::Identity()).cwiseAbs().sum() == doctest::Approx(1.5));
}

TEST_CASE("forecast examples") {
  TrackState t;
  t.mean.setZero();
  t.mean[3] = 1.0;
  t.mean.tail<3>().setOnes();
  t.confidence = 0.7;
  t.id = 4;
  const TrackState f = forecast(t, 0.5);
  CHECK(f.position().isApprox(Eigen::Vector3d(0.5, 0, 0)));
  CHECK(f.id == 4);
  CHECK(f.confidence == 0.7);

  const TrackState same = forecast(t, 0.0);
  CHECK(same.mean == t.mean);
  CHECK((same.covariance - t.covariance).cwiseAbs().maxCoeff() == 0.0);

  // Covariance follows A P A^T + Q dt.
  const KalmanModel model;
  const StateMatrix a = KalmanModel::transition(0.5);
  const StateMatrix expected = a * t.covariance * a.transpose() + StateMatrix(model.process_noise.asDiagonal()) * 0.5;
  CHECK((f.covariance - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forecast mean is a semigroup") {
  Rng rng = make_stream(21, StreamKind::Test);
  for (int trial = 0; trial < 50; ++trial) {
    const TrackState t = random_track(rng);
    TrackState stepped = t;
    for (int i = 0; i < 10; ++i) stepped = forecast(stepped, 0.1);
    const TrackState once = forecast(t, 1.0);
    CHECK((stepped.mean - once.mean).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("forecast_all maps forecast") {
  Rng rng = make_stream(22, StreamKind::Test);
  std::vector<TrackState> tracks;
  for (int i = 0; i < 3; ++i) tracks.push_back(random_track(rng));
  const auto all = forecast_all(tracks, 0.3);
  REQUIRE(all.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(all[i].mean == forecast(tracks[i], 0.3).mean);
}

TEST_CASE("associate examples") {
  const TrackerConfig config;
  std::vector<TrackState> tracks = {birth(detection_at(0, 0), 0)};
  {
    const std::vector<Box3D> dets = {detection_at(0.5, 0)};
    const Association a = associate(tracks, dets, 0.1, config);
    REQUIRE(a.pairs.size() == 1);
    CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  }
  {
    const std::vector<Box3D> dets = {detection_at(10, 0)};
    const Association a = associate(tracks, dets, 0.1, config);
    CHECK(a.pairs.empty());
    CHECK(a.unmatched_tracks == std::vector<int>{0});
    CHECK(a.unmatched_detections == std::vector<int>{0});
  }
  {
    const std::vector<Box3D> dets = {detection_at(0.5, 0, 0.8, ObjectClass::Pedestrian)};
    const Association a = associate(tracks, dets, 0.1, config);
    CHECK(a.pairs.empty());
  }
  {
    const std::vector<Box3D> none;
    const Association a = associate(std::span<const TrackState>{}, none, 0.1, config);
    CHECK(a.pairs.empty());
    CHECK(a.unmatched_tracks.empty());
  }
}

TEST_CASE("associate is optimal against a permutation brute force") {
  const TrackerConfig config;
  Rng rng = make_stream(23, StreamKind::Test);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TrackState> tracks;
    std::vector<Box3D> dets;
    for (int i = 0; i < 5; ++i) {
      tracks.push_back(birth(detection_at(0.9 * uniform01(rng), 0.9 * uniform01(rng)), i));
      dets.push_back(detection_at(0.9 * uniform01(rng), 0.9 * uniform01(rng)));
    }
    auto dist = [&](int i, int j) { return (tracks[i].position() - dets[j].center).head<2>().norm(); };
    std::array<int, 5> perm = {0, 1, 2, 3, 4};
    double best = 1e300;
    do {
      double c = 0;
      for (int i = 0; i < 5; ++i) c += dist(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const Association a = associate(tracks, dets, 0.1, config);
    REQUIRE(a.pairs.size() == 5);
    double cost = 0;
    for (auto [i, j] : a.pairs) cost += dist(i, j);
    CHECK(cost == doctest::Approx(best).epsilon(1e-12));

    // Permuting the detections permutes the matching and keeps the cost.
    std::vector<int> order = {3, 0, 4, 1, 2};
    std::vector<Box3D> shuffled;
    for (int k : order) shuffled.push_back(dets[k]);
    const Association b = associate(tracks, shuffled, 0.1, config);
    double cost_b = 0;
    for (auto [i, j] : b.pairs) cost_b += dist(i, order[j]);
    CHECK(cost_b == doctest::Approx(cost).epsilon(1e-12));
  }
}

TEST_CASE("solve_assignment handles rectangular matrices") {
  // 2 rows, 3 cols.
  const std::vector<double> cost = {5, 1, 9, 2, 8, 7};
  const auto cols = solve_assignment(cost, 2, 3);
  CHECK(cols == std::vector<int>{1, 0});
  // 3 rows, 2 cols: {row0->1, row2->0} costs 1.5 and beats {row0->1, row1->0} at 2.
  const std::vector<double> tall = {4, 1, 1, 4, 0.5, 0.6};
  const auto rows = solve_assignment(tall, 3, 2);
  CHECK(rows == std::vector<int>{1, -1, 0});
}

TEST_CASE("update examples") {
  const KalmanModel model;
  TrackState t = birth(detection_at(3, 4, 0.4), 1);
  t = forecast(t, 0.1);
  Box3D same = t.as_box();
  same.confidence = 0.9;
  const UpdateResult r = update(t, same, model);
  CHECK((r.track.mean - t.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.track.covariance.trace() < t.covariance.trace());
  CHECK(r.track.confidence == 0.9);
  CHECK(r.track.misses == 0);

  KalmanModel vague = model;
  vague.measurement_noise *= 1e12;
  Box3D far = t.as_box();
  far.center.x() += 5.0;
  const UpdateResult v = update(t, far, vague);
  CHECK((v.track.mean - t.mean).norm() < 1e-6);
}

TEST_CASE("covariance stays symmetric PSD over random update sequences") {
  Rng rng = make_stream(24, StreamKind::Test);
  for (int trial = 0; trial < 20; ++trial) {
    TrackState t = birth(detection_at(20 * uniform01(rng), 20 * uniform01(rng)), 0);
    for (int k = 0; k < 50; ++k) {
      t = forecast(t, 0.05 + 0.2 * uniform01(rng));
      Box3D d = t.as_box();
      d.center += Eigen::Vector3d(standard_normal(rng), standard_normal(rng), 0.1 * standard_normal(rng));
      d.velocity += Eigen::Vector3d(standard_normal(rng), standard_normal(rng), 0);
      t = update(t, d).track;
      CHECK((t.covariance - t.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(min_eigenvalue(t.covariance) >= -1e-9);
      CHECK((t.size().array() > 0).all());
    }
  }
}

TEST_CASE("step: confidence halving and removal") {
  const TrackerConfig config;
  TrackSet set;
  set.tracks.push_back(birth(detection_at(0, 0, 0.3), 0));
  set.next_id = 1;
  const std::vector<Box3D> none;
  step(set, none, 0.1, config);
  REQUIRE(set.tracks.size() == 1);
  CHECK(set.tracks[0].confidence == doctest::Approx(0.15));
  CHECK(set.tracks[0].misses == 1);
  const StepReport r = step(set, none, 0.1, config);
  CHECK(set.tracks.empty());
  CHECK(r.removed == 1);

  TrackSet empty;
  step(empty, none, 0.1, config);
  CHECK(empty.tracks.empty());
}

TEST_CASE("step: exempt tracks keep confidence but report decay") {
  const TrackerConfig config;
  TrackSet set;
  set.tracks.push_back(birth(detection_at(0, 0, 0.8), 0));
  set.next_id = 1;
  const std::vector<Box3D> none;
  for (int k = 0; k < 6; ++k) step(set, none, 0.1, config, [](const TrackState&) { return false; });
  REQUIRE(set.tracks.size() == 1);
  CHECK(set.tracks[0].confidence == 0.8);
  CHECK(set.tracks[0].misses == 0);
  CHECK(set.tracks[0].unobserved == 6);
  CHECK(reported_confidence(set.tracks[0], config) == doctest::Approx(0.8 / 64));
}

TEST_CASE("step: ids are stable and never reused") {
  const TrackerConfig config;
  TrackSet set;
  std::vector<std::int64_t> seen;
  for (int frame = 0; frame < 40; ++frame) {
    std::vector<Box3D> dets;
    if (frame % 10 < 5) dets.push_back(detection_at(frame * 0.1, 0, 0.9));
    dets.push_back(detection_at(30 + frame * 0.1, 5, 0.9));
    step(set, dets, 0.1, config);
    for (const TrackState& t : set.tracks) {
      if (std::find(seen.begin(), seen.end(), t.id) == seen.end()) seen.push_back(t.id);
    }
  }
  std::vector<std::int64_t> sorted = seen;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(seen.size() >= 3);  // the intermittent object is reborn with fresh ids
}

TEST_CASE("velocity error shrinks every frame after a zero-velocity birth") {
  const TrackerConfig config;
  const Eigen::Vector3d velocity(4.0, -1.5, 0.0);
  Eigen::Vector3d position(5.0, 2.0, 0.8);
  TrackSet set;
  step(set, std::vector<Box3D>{detection_at(position.x(), position.y(), 1.0)}, 0.1, config);
  double previous = velocity.norm();
  for (int frame = 1; frame < 30; ++frame) {
    position += velocity * 0.1;
    Box3D d = detection_at(position.x(), position.y(), 1.0);
    d.velocity = velocity;
    step(set, std::vector<Box3D>{d}, 0.1, config);
    const double err = (set.tracks[0].velocity() - velocity).norm();
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 0.01);
}

TEST_CASE("closed loop: convergence, stable id and prompt removal") {
  const TrackerConfig config;
  const double dt = 0.1;
  const Eigen::Vector3d velocity(4.0, -1.5, 0.0);
  Eigen::Vector3d position(5.0, 2.0, 0.8);
  TrackSet set;
  std::int64_t id = -1;
  for (int frame = 0; frame < 30; ++frame) {
    Box3D d = detection_at(position.x(), position.y(), 1.0);
    d.velocity = velocity;
    step(set, std::vector<Box3D>{d}, dt, config);
    REQUIRE(set.tracks.size() == 1);
    if (frame == 0) id = set.tracks[0].id;
    CHECK(set.tracks[0].id == id);
    if (frame == 10) CHECK((set.tracks[0].velocity() - velocity).norm() < 0.1);
    if (frame == 19) CHECK((set.tracks[0].position() - position).norm() < 0.05);
    position += velocity * dt;
  }
  int removed_after = 0;
  const std::vector<Box3D> none;
  while (!set.tracks.empty()) {
    step(set, none, dt, config);
    ++removed_after;
    REQUIRE(removed_after < 10);
  }
  // Confidence 1.0 survives three halvings (0.125) and goes on the fourth,
  // i.e. three frames after the first empty frame.
  CHECK(removed_after - 1 <= 3);
}
