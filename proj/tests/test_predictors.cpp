#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "viewsched/errors.hpp"
#include "viewsched/experiment.hpp"
#include "viewsched/predictors.hpp"
#include "viewsched/rng.hpp"

using namespace viewsched;

namespace {

// Sparse distribution: a handful of objects dropped into random bins.
DistributionVector random_distribution(Rng& rng, int objects) {
  DistributionVector d{};
  for (int i = 0; i < objects; ++i) d[static_cast<std::size_t>(uniform01(rng) * kNumCategories)] += 1.0;
  for (double& v : d) v /= objects;
  return d;
}

double mse(const GbrtModel& m, const std::vector<FeatureRow>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = m.raw_predict(x[i]) - y[i];
    s += e * e;
  }
  return s / static_cast<double>(x.size());
}

DeviceProfile toy_device(double alpha = 1.0) {
  DeviceProfile d;
  d.name = "toy";
  d.memory_limit_mb = 1000;
  d.modules = {{"m5", 5, 1, false, true}, {"m9", 9, 1, false, true}, {"head", 4, 1, true, true}};
  d.branch_modules.assign(kNumBranches, {"m5"});
  d.branch_modules[0].clear();
  d.branch_modules[2] = {"m5", "m9"};
  d.batching_alpha = alpha;
  return d;
}

}  // namespace

TEST_CASE("feature layout") {
  DistributionVector d{};
  d[26] = 1.0;
  const FeatureRow tracker = make_features(d, 0, 0.7);
  REQUIRE(tracker.size() == 98);
  CHECK(tracker[26] == 1.0);
  CHECK(tracker[80] == 1.0);
  CHECK(tracker[97] == 0.7);
  const FeatureRow det = make_features(d, 5, 0.7);
  CHECK(std::accumulate(det.begin() + 80, det.begin() + 97, 0.0) == 1.0);
  CHECK(det[85] == 1.0);
  CHECK(det[97] == 0.0);
}

TEST_CASE("constant targets are reproduced exactly") {
  Rng rng = make_stream(31, StreamKind::Test);
  std::vector<FeatureRow> x;
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    x.push_back(make_features(random_distribution(rng, 5), i % kNumBranches, uniform01(rng)));
    y.push_back(0.37);
  }
  GbrtParams p;
  p.rounds = 1;
  const GbrtModel m = train_gbrt(x, y, p);
  Rng probe = make_stream(32, StreamKind::Test);
  for (int i = 0; i < 50; ++i) {
    CHECK(std::abs(predict_accuracy(m, make_features(random_distribution(probe, 3), i % 17, 0.5)) - 0.37) < 1e-9);
  }
}

TEST_CASE("linear target in one feature is recovered") {
  Rng rng = make_stream(33, StreamKind::Test);
  std::vector<FeatureRow> x;
  std::vector<double> y;
  for (int i = 0; i < 500; ++i) {
    DistributionVector d = random_distribution(rng, 4);
    const double share = uniform01(rng);
    for (double& v : d) v *= 1.0 - share;
    d[0] += share;
    x.push_back(make_features(d, i % kNumBranches, 0.0));
    y.push_back(d[0]);
  }
  GbrtParams p;
  p.rounds = 100;
  p.max_depth = 3;
  TrainingTrace trace;
  const GbrtModel m = train_gbrt(x, y, p, &trace);
  std::vector<double> fitted;
  for (const FeatureRow& f : x) fitted.push_back(predict_accuracy(m, f));
  CHECK(r_squared(y, fitted) >= 0.95);
  for (const auto& tree : m.trees) CHECK(tree.depth() <= 3);
  CHECK(trace.mse_per_round.size() == 101);
}

TEST_CASE("step function on near-range mass is recovered on held-out data") {
  Rng rng = make_stream(34, StreamKind::Test);
  std::vector<FeatureRow> x;
  std::vector<double> y;
  for (int i = 0; i < 1000; ++i) {
    // Part of the mass sits in one near-range bin, the rest beyond 20 m.
    DistributionVector d{};
    const double near = uniform01(rng);
    const int near_bin = 5 * static_cast<int>(uniform01(rng) * 16);  // distance level 0
    d[near_bin] = near;
    int far_bin = static_cast<int>(uniform01(rng) * kNumCategories);
    while (far_bin % 5 < 2) far_bin = static_cast<int>(uniform01(rng) * kNumCategories);
    d[far_bin] += 1.0 - near;
    double d0 = 0;
    for (int k = 0; k < kNumCategories; k += 5) d0 += d[k];
    x.push_back(make_features(d, 1 + i % 16, 0.0));
    y.push_back(d0 > 0.5 ? 0.9 : 0.3);
  }
  const std::size_t split = 800;
  const std::vector<FeatureRow> train_x(x.begin(), x.begin() + split);
  const std::vector<double> train_y(y.begin(), y.begin() + split);
  GbrtParams params;
  params.rounds = 300;
  params.learning_rate = 0.2;
  const GbrtModel m = train_gbrt(train_x, train_y, params);
  int close = 0;
  for (std::size_t i = split; i < x.size(); ++i) close += std::abs(predict_accuracy(m, x[i]) - y[i]) <= 0.05;
  CHECK(close >= 0.9 * static_cast<double>(x.size() - split));
}

TEST_CASE("training loss never increases across rounds") {
  for (int dataset = 0; dataset < 20; ++dataset) {
    Rng rng = make_stream(35, StreamKind::Test, {static_cast<std::uint64_t>(dataset)});
    std::vector<FeatureRow> x;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
      x.push_back(make_features(random_distribution(rng, 6), static_cast<int>(uniform01(rng) * 17), uniform01(rng)));
      y.push_back(uniform01(rng));
    }
    GbrtParams p;
    p.rounds = 30;
    p.min_samples_leaf = 1 + dataset % 4;
    TrainingTrace trace;
    const GbrtModel m = train_gbrt(x, y, p, &trace);
    REQUIRE(trace.mse_per_round.size() == 31);
    for (std::size_t r = 1; r < trace.mse_per_round.size(); ++r) {
      CHECK(trace.mse_per_round[r] <= trace.mse_per_round[r - 1] + 1e-12);
    }
    CHECK(trace.mse_per_round.back() == doctest::Approx(mse(m, x, y)).epsilon(1e-9));
    // Same data, same order: identical model.
    CHECK(to_json(train_gbrt(x, y, p)) == to_json(m));
  }
}

TEST_CASE("prediction is clamped and validated") {
  std::vector<FeatureRow> x = {make_features({}, 0, 0), make_features({}, 1, 0)};
  std::vector<double> y = {-3.0, 4.0};
  const GbrtModel m = train_gbrt(x, y, GbrtParams{});
  CHECK(predict_accuracy(m, x[0]) == 0.0);
  CHECK(predict_accuracy(m, x[1]) == 1.0);
  CHECK_THROWS_AS(predict_accuracy(m, std::vector<double>(10, 0.0)), ConfigError);
  CHECK_THROWS_AS(train_gbrt({}, std::vector<double>{}, GbrtParams{}), ConfigError);
}

TEST_CASE("model json round trip") {
  Rng rng = make_stream(36, StreamKind::Test);
  std::vector<FeatureRow> x;
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    x.push_back(make_features(random_distribution(rng, 3), i % 17, uniform01(rng)));
    y.push_back(uniform01(rng));
  }
  PredictorBundle b{train_gbrt(x, y, GbrtParams{}), {0.03, 0.7}};
  const nlohmann::json j = to_json(b);
  CHECK(j.at("version") == kModelFormatVersion);
  const PredictorBundle back = bundle_from_json(nlohmann::json::parse(j.dump()));
  for (const FeatureRow& f : x) CHECK(predict_accuracy(back.accuracy, f) == predict_accuracy(b.accuracy, f));
  CHECK(back.update.slope_ms == 0.03);
  nlohmann::json unversioned = j;
  unversioned.erase("version");
  CHECK_THROWS_AS(bundle_from_json(unversioned), ConfigError);
  nlohmann::json future = j;
  future["version"] = 99;
  CHECK_THROWS_AS(bundle_from_json(future), ConfigError);
}

TEST_CASE("update latency regression") {
  std::vector<std::pair<int, double>> exact;
  for (int n = 0; n < 30; n += 3) exact.emplace_back(n, 0.05 * n + 1.0);
  const LinearLatencyModel m = fit_update_latency(exact);
  CHECK(std::abs(m.slope_ms - 0.05) < 1e-9);
  CHECK(std::abs(m.intercept_ms - 1.0) < 1e-9);
  CHECK(m.predict(0) == m.intercept_ms);

  Rng rng = make_stream(37, StreamKind::Test);
  std::vector<std::pair<int, double>> noisy;
  for (int i = 0; i < 100; ++i) {
    const int n = static_cast<int>(uniform01(rng) * 60);
    noisy.emplace_back(n, 0.05 * n + 1.0 + 0.1 * standard_normal(rng));
  }
  CHECK(std::abs(fit_update_latency(noisy).slope_ms - 0.05) < 0.01);

  const std::vector<std::pair<int, double>> degenerate = {{10, 2.0}, {10, 2.0}};
  CHECK_THROWS_AS(fit_update_latency(degenerate), ConfigError);

  const std::vector<std::pair<int, double>> falling = {{0, 5.0}, {10, 1.0}, {20, -3.0}};
  const LinearLatencyModel clamped = fit_update_latency(falling);
  CHECK(clamped.slope_ms >= 0.0);
  CHECK(clamped.intercept_ms >= 0.0);
}

TEST_CASE("frame latency prediction") {
  const DeviceProfile d = toy_device();
  const LinearLatencyModel update{0.1, 2.0};
  const std::vector<int> trackers(6, 0);
  CHECK(predict_frame_latency(trackers, d, update, 10) == doctest::Approx(4 + 3.0));
  const std::vector<int> all5(6, 1);
  CHECK(predict_frame_latency(all5, d, update, 10) == doctest::Approx(30 + 4 + 3.0));

  const DeviceProfile batched = toy_device(0.5);
  CHECK(predict_frame_latency(all5, batched, update, 0) == doctest::Approx(5 * 3.5 + 4 + 2.0));

  // Upgrading any single view never lowers the prediction. Under strong
  // batching (alpha near 0) it can: moving a branch's only view onto an
  // already-running branch frees the whole marginal.
  Rng rng = make_stream(38, StreamKind::Test);
  for (double alpha : {1.0, 0.5}) {
    const DeviceProfile dev = toy_device(alpha);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<int> a(6);
      for (int& v : a) v = static_cast<int>(uniform01(rng) * 3);  // 0 ms, 5 ms, 14 ms
      const int view = static_cast<int>(uniform01(rng) * 6);
      if (a[view] == 2) continue;
      std::vector<int> up = a;
      up[view] += 1;
      CHECK(predict_frame_latency(up, dev, update, 5) >= predict_frame_latency(a, dev, update, 5) - 1e-12);
    }
  }
}

TEST_CASE("replayed episode: predicted frame latency tracks the realised one") {
  ScenarioConfig sc = bundled_scenario("quickstart");
  sc.duration_s = 6.0;
  SystemConfig sys;
  sys.device = bundled_device_profile("orin");
  sys.capability = default_capability();
  sys.target_ms = 100.0;
  sys.branches = adapt(sys.device, sys.target_ms).branches;
  sys.seed = 5;
  const TrainingOutcome trained = train_from_simulation(sc, sys, 1);
  sys.predictors = trained.bundle;
  sys.policy = Policy::adaptive();
  sc.seed = 77;
  const auto frames = generate_scenario(sc);
  const EpisodeLog log = run_episode(frames, sys);
  double abs_err = 0;
  double total = 0;
  for (const FrameRecord& r : log.frames) {
    abs_err += std::abs(r.predicted_latency_ms - r.actual_latency_ms);
    total += r.actual_latency_ms;
  }
  CHECK(abs_err / total < 0.05);
}
