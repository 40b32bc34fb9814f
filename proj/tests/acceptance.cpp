// Acceptance run: one PASS/FAIL line per criterion, exit code 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "viewsched/cli.hpp"
#include "viewsched/experiment.hpp"
#include "viewsched/metrics.hpp"
#include "viewsched/scheduler.hpp"
#include "viewsched/tracker.hpp"

using namespace viewsched;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kData = VIEWSCHED_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome solver_exactness() {
  const auto t0 = Clock::now();
  Rng rng = make_stream(2024, StreamKind::Test);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    ScheduleProblem p;
    const int m = 1 + static_cast<int>(uniform01(rng) * 6);
    const int n = 1 + static_cast<int>(uniform01(rng) * 4);
    p.t_max_ms = std::floor(uniform01(rng) * 121);
    p.latencies_ms.push_back(0.0);
    for (int r = 1; r < m; ++r) p.latencies_ms.push_back(std::floor(uniform01(rng) * 51));
    p.scores.assign(m, std::vector<double>(n));
    for (auto& row : p.scores) {
      for (double& s : row) s = std::round(uniform01(rng) * 20) / 20;
    }
    const ScheduleDecision a = solve(p);
    const ScheduleDecision b = solve_bruteforce(p);
    if (a.objective != b.objective || a.assignment != b.assignment) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0, fmt("%d mismatches on 200 instances in %.3f s", mismatches, secs)};
}

LoadedRun load_bundled(const char* manifest) {
  LoadedRun run = load_run(load_manifest(kData / "manifests" / manifest));
  bool trained = false;
  obtain_predictors(run, trained);
  return run;
}

Outcome budget_compliance(const LoadedRun& run) {
  int frames = 0;
  int det_violations = 0;
  int noisy_ok = 0;
  int noisy_frames = 0;
  for (int i = 0; noisy_frames < 1000; ++i) {
    const std::uint64_t seed = derived_seed(run.manifest.seed, kEvaluationPurpose, static_cast<std::uint64_t>(i));
    ScenarioConfig sc = run.scenario;
    sc.seed = seed;
    const auto gt = generate_scenario(sc);
    SystemConfig sys = make_system(run, Policy::adaptive(), seed);
    sys.noise.sigma = 0.0;
    const EpisodeLog det = run_episode(gt, sys);
    frames += static_cast<int>(det.frames.size());
    det_violations += det.budget_violations;
    sys.noise.sigma = 0.05;
    const EpisodeLog noisy = run_episode(gt, sys);
    for (const FrameRecord& r : noisy.frames) {
      noisy_ok += r.actual_latency_ms <= sys.target_ms + 1e-6;
      ++noisy_frames;
    }
  }
  const double compliance = static_cast<double>(noisy_ok) / noisy_frames;
  return {det_violations == 0 && compliance >= 0.90,
          fmt("deterministic: %d/%d frames within %.0f ms; sigma 0.05: %.1f%% of %d frames", frames - det_violations,
              frames, run.manifest.target_ms, 100 * compliance, noisy_frames)};
}

Outcome per_view_dominance(const LoadedRun& run) {
  const auto episodes = run_comparison(run, 10, false);
  int frames = 0, violations = 0, wins = 0;
  for (const ComparisonEpisode& ep : episodes) {
    frames += ep.dominance_frames;
    violations += ep.dominance_violations;
    wins += ep.policies[0].summary.ds >= ep.policies[1].summary.ds;
  }
  return {violations == 0 && wins >= 8,
          fmt("%d objective violations over %d frames; adaptive DS >= per-frame DS on %d of 10 episodes", violations,
              frames, wins)};
}

Outcome capability_trends() {
  const CapabilityProfile cap = capability_from_json(read_json_file(kData / "capability/default.json"));
  const CameraRig rig = CameraRig::uniform(6);
  const CameraRig::Sector sector = rig.sectors()[0];
  Rng rng = make_stream(7, StreamKind::Test);
  auto spawn = [&](double dmin, double dmax, double vmin, double vmax) {
    Box3D b;
    b.cls = kAllClasses[static_cast<std::size_t>(uniform01(rng) * kNumClasses) % kNumClasses];
    b.size = nominal_size(b.cls);
    const double a = sector.lo + sector.width * uniform01(rng);
    const double r = dmin + (dmax - dmin) * uniform01(rng);
    b.center << r * std::cos(a), r * std::sin(a), b.size.y() / 2;
    const double h = 2 * kPi * uniform01(rng);
    const double s = vmin + (vmax - vmin) * uniform01(rng);
    b.velocity << s * std::cos(h), s * std::sin(h), 0;
    return b;
  };
  const int r34 = BranchConfig::detection(BackboneKind::R34, DepthNetKind::Sparse, false).index();
  const int r152 = BranchConfig::detection(BackboneKind::R152, DepthNetKind::Sparse, false).index();
  const int r50 = BranchConfig::detection(BackboneKind::R50, DepthNetKind::Sparse, false).index();
  const int r50fd = BranchConfig::detection(BackboneKind::R50, DepthNetKind::Dense, true).index();
  auto d3_only = [](std::vector<Box3D> v) {
    std::erase_if(v, [](const Box3D& b) { return categorize(b).distance != 3; });
    return v;
  };
  std::vector<EvalFrame> e34, e152, e50, e50fd;
  for (int f = 0; f < 10000; ++f) {
    std::vector<Box3D> far;
    for (int i = 0; i < 3; ++i) far.push_back(spawn(30, 40, 0, 10));
    e34.push_back({d3_only(synth_detect(r34, far, sector, 60, cap, rng)), far});
    e152.push_back({d3_only(synth_detect(r152, far, sector, 60, cap, rng)), far});
    std::vector<Box3D> fast;
    for (int i = 0; i < 3; ++i) fast.push_back(spawn(1, 40, 5, 12));  // velocity level 3
    e50.push_back({synth_detect(r50, fast, sector, 60, cap, rng), fast});
    e50fd.push_back({synth_detect(r50fd, fast, sector, 60, cap, rng), fast});
  }
  const double map_ratio = summarize(e152).map / summarize(e34).map;
  const double mave_ratio = summarize(e50).mave / summarize(e50fd).mave;
  return {std::abs(map_ratio - 2.7) <= 0.4 && std::abs(mave_ratio - 2.4) <= 0.4,
          fmt("D3 mAP r152:r34 = %.3f; V3 mAVE r50:r50_dense_fusion = %.3f", map_ratio, mave_ratio)};
}

Outcome tracker_correctness() {
  const TrackerConfig config;
  const Eigen::Vector3d velocity(3.0, 1.0, 0.0);
  Eigen::Vector3d position(10.0, -4.0, 0.8);
  TrackSet set;
  double pos_err = 1e9, vel_err = 1e9;
  for (int frame = 0; frame <= 10; ++frame) {
    Box3D d;
    d.center = position;
    d.velocity = velocity;
    d.size = {1.9, 1.6, 4.6};
    step(set, std::vector<Box3D>{d}, 0.1, config);
    pos_err = (set.tracks.at(0).position() - position).norm();
    vel_err = (set.tracks.at(0).velocity() - velocity).norm();
    position += velocity * 0.1;
  }

  Rng rng = make_stream(5, StreamKind::Test);
  double min_eig = 1e9;
  Box3D seed_box;
  seed_box.size = {2, 2, 2};
  TrackState t = birth(seed_box, 0);
  for (int k = 0; k < 100000; ++k) {
    if (k % 200 == 0) t = birth(seed_box, k);
    t = forecast(t, 0.02 + 0.3 * uniform01(rng));
    Box3D m = t.as_box();
    m.center += Eigen::Vector3d(standard_normal(rng), standard_normal(rng), 0.2 * standard_normal(rng));
    m.velocity += Eigen::Vector3d(standard_normal(rng), standard_normal(rng), 0.0);
    m.size = m.size.cwiseMax(0.1);
    t = update(t, m).track;
    if (k % 10 == 0) {
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<StateMatrix>(t.covariance).eigenvalues().minCoeff());
    }
  }

  bool halving_exact = true;
  for (double initial : {1.0, 0.9, 0.64}) {
    Box3D b;
    b.confidence = initial;
    TrackSet s;
    s.tracks.push_back(birth(b, 0));
    for (int k = 1; !s.tracks.empty(); ++k) {
      step(s, std::vector<Box3D>{}, 0.1, config);
      const double expected = initial * std::pow(0.5, k);
      if (expected >= config.confidence_threshold) {
        halving_exact = halving_exact && s.tracks.size() == 1 && s.tracks[0].confidence == expected;
      } else {
        halving_exact = halving_exact && s.tracks.empty();
      }
    }
  }
  return {pos_err < 0.05 && vel_err < 0.1 && min_eig >= -1e-9 && halving_exact,
          fmt("frame 10: position error %.2e m, velocity error %.2e m/s; min covariance eigenvalue %.3e over 1e5 "
              "updates; halving exact: %s",
              pos_err, vel_err, min_eig, halving_exact ? "yes" : "no")};
}

Outcome metrics_oracle() {
  auto car = [](double x, double conf) {
    Box3D b;
    b.center = {x, 0, 0.8};
    b.confidence = conf;
    return b;
  };
  // TP .9 .8 .7, FP .6, TP .5 .4 over 5 objects: interpolated precision is 1
  // up to recall .6 and 5/6 after, so 50 of the 90 grid points score 1.
  const std::vector<Box3D> gt = {car(0, 1), car(10, 1), car(20, 1), car(30, 1), car(40, 1)};
  const std::vector<Box3D> pred = {car(0, .9), car(10, .8), car(20, .7), car(50, .6), car(30, .5), car(40, .4)};
  const std::vector<EvalFrame> frames = {{pred, gt}};
  const double ap = average_precision(frames, ObjectClass::Car, 0.5).value();
  const double expected_ap = (50.0 + 40.0 * 5.0 / 6.0) / 90.0;
  const double ds = detection_score(0.5, 0.4, 0.3);
  return {std::abs(ap - expected_ap) <= 1e-9 && std::abs(ds - 0.56) <= 1e-12,
          fmt("AP %.12f vs %.12f; DS(0.5, 0.4, 0.3) = %.12f", ap, expected_ap, ds)};
}

Outcome predictor_quality() {
  Rng rng = make_stream(33, StreamKind::Test);
  std::vector<FeatureRow> x;
  std::vector<double> y;
  for (int i = 0; i < 500; ++i) {
    DistributionVector d{};
    const double share = uniform01(rng);
    d[0] = share;
    d[1 + static_cast<int>(uniform01(rng) * 79)] += 1.0 - share;
    x.push_back(make_features(d, i % kNumBranches, 0.0));
    y.push_back(d[0]);
  }
  GbrtParams params;
  params.rounds = 100;
  params.max_depth = 3;
  const GbrtModel model = train_gbrt(x, y, params);
  std::vector<double> fitted;
  for (const FeatureRow& f : x) fitted.push_back(predict_accuracy(model, f));
  const double r2 = r_squared(y, fitted);

  std::vector<std::pair<int, double>> line;
  for (int n = 0; n <= 40; n += 4) line.emplace_back(n, 0.05 * n + 1.0);
  const LinearLatencyModel lm = fit_update_latency(line);
  const double err = std::max(std::abs(lm.slope_ms - 0.05), std::abs(lm.intercept_ms - 1.0));
  return {r2 >= 0.95 && err <= 1e-9, fmt("GBRT train R2 %.4f; OLS max coefficient error %.2e", r2, err)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("viewsched_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const fs::path manifest = kData / "manifests/quickstart.json";
  const int a = cmd_simulate(manifest, {std::nullopt, std::nullopt, root / "a"});
  const int b = cmd_simulate(manifest, {std::nullopt, std::nullopt, root / "b"});
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    ++files;
    const fs::path other = root / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  fs::remove_all(root);
  return {a == 0 && b == 0 && files >= 3 && differing == 0,
          fmt("%d artifacts compared, %d differ (exit codes %d, %d)", files, differing, a, b)};
}

Outcome scheduling_overhead(const LoadedRun& run) {
  // Tracks and poses from a real episode so the predictor sees realistic inputs.
  ScenarioConfig sc = run.scenario;
  sc.seed = derived_seed(run.manifest.seed, kEvaluationPurpose, 99);
  const auto gt = generate_scenario(sc);
  const EpisodeLog log = run_episode(gt, make_system(run, Policy::adaptive(), sc.seed));

  const CameraRig rig = CameraRig::uniform(6);
  SchedContext ctx;
  ctx.rig = &rig;
  ctx.device = &run.device;
  ctx.predictors = &*run.model;
  ctx.target_ms = 1e6;
  for (int b = 0; b < kNumBranches; ++b) ctx.branches.push_back(b);  // M = 17

  std::vector<double> ms;
  std::size_t tracks = 0;
  for (int i = 0; i < 1000; ++i) {
    const FrameRecord& prev = log.frames[static_cast<std::size_t>(i) % (log.frames.size() - 1)];
    const FrameRecord& next = log.frames[static_cast<std::size_t>(i) % (log.frames.size() - 1) + 1];
    tracks += prev.tracks.size();
    const auto t0 = Clock::now();
    const SchedResult r = sched(prev.tracks, sc.dt(), next.ego, ctx);
    ms.push_back(1e3 * seconds_since(t0));
    if (r.branch_per_view.size() != 6) return {false, "sched returned a malformed decision"};
  }
  std::nth_element(ms.begin(), ms.begin() + 500, ms.end());
  const double median = ms[500];
  return {median < 10.0, fmt("median %.3f ms over 1000 calls (M=17, N=6, %.1f tracks on average)", median,
                             static_cast<double>(tracks) / 1000)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  const LoadedRun quickstart = load_bundled("quickstart.json");
  const LoadedRun compare = load_bundled("compare.json");

  report(1, "solver exactness", solver_exactness);
  report(2, "budget compliance", [&] { return budget_compliance(quickstart); });
  report(3, "per-view dominance", [&] { return per_view_dominance(compare); });
  report(4, "capability trends", capability_trends);
  report(5, "tracker correctness", tracker_correctness);
  report(6, "metrics oracle", metrics_oracle);
  report(7, "predictor quality", predictor_quality);
  report(8, "determinism", determinism);
  report(9, "scheduling overhead", [&] { return scheduling_overhead(quickstart); });
  return failures == 0 ? 0 : 1;
}
