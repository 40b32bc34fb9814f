#include "viewsched/experiment.hpp"

#include <spdlog/spdlog.h>

#include "viewsched/errors.hpp"

namespace viewsched {

void TrainingSet::append(const FrameRecord& record) {
  for (const TrainingView& tv : record.training) {
    for (const auto& [branch, ds] : tv.scores) {
      features.push_back(make_features(tv.distribution, branch, tv.mean_confidence));
      targets.push_back(ds);
    }
  }
  update_samples.emplace_back(record.scheduled_tracks, record.actual_update_ms);
}

TrainingOutcome train_predictors(const TrainingSet& set, const GbrtParams& params) {
  if (set.empty()) throw ConfigError("training: no accuracy samples in the episode logs");
  TrainingOutcome out;
  out.bundle.accuracy = train_gbrt(set.features, set.targets, params, &out.trace);
  out.bundle.update = fit_update_latency(set.update_samples);
  std::vector<double> fitted;
  fitted.reserve(set.features.size());
  for (const FeatureRow& f : set.features) fitted.push_back(predict_accuracy(out.bundle.accuracy, f));
  out.train_r2 = r_squared(set.targets, fitted);
  out.rows = set.targets.size();
  out.update_rows = set.update_samples.size();
  spdlog::info("trained accuracy predictor on {} rows, train R2 {:.4f}; update latency {:.4f} ms/track + {:.4f} ms",
               out.rows, out.train_r2, out.bundle.update.slope_ms, out.bundle.update.intercept_ms);
  return out;
}

ScenarioConfig bundled_scenario(std::string_view name) {
  ScenarioConfig c;
  c.fps = 10.0;
  c.world_radius = 60.0;
  c.despawn_radius = 70.0;
  c.road_half_width = 6.0;
  auto set = [&](ObjectClass cls, double weight, double lo, double hi, double stat) {
    c.classes[static_cast<int>(cls)] = {weight, lo, hi, stat};
  };
  set(ObjectClass::Car, 0.45, 0.0, 15.0, 0.3);
  set(ObjectClass::Truck, 0.10, 0.0, 12.0, 0.3);
  set(ObjectClass::Bus, 0.05, 0.0, 10.0, 0.3);
  set(ObjectClass::Pedestrian, 0.25, 0.5, 2.0, 0.2);
  set(ObjectClass::Motorcycle, 0.07, 2.0, 15.0, 0.1);
  set(ObjectClass::Bicycle, 0.08, 1.5, 7.0, 0.1);
  if (name == "quickstart") {
    c.seed = 1;
    c.duration_s = 20.0;
    c.initial_objects = 30;
    c.spawn_rate = 2.0;
    c.road_fraction = 0.5;
    c.ego.kind = EgoPath::Kind::Straight;
    c.ego.speed = 8.0;
  } else if (name == "compare") {
    c.seed = 11;
    c.duration_s = 30.0;
    c.initial_objects = 40;
    c.spawn_rate = 3.0;
    c.road_fraction = 0.4;
    c.ego.kind = EgoPath::Kind::Circular;
    c.ego.speed = 6.0;
    c.ego.radius = 80.0;
  } else {
    throw ConfigError("unknown bundled scenario '" + std::string(name) + "'");
  }
  c.validate();
  return c;
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  Rng rng = make_stream(seed, StreamKind::Training, {purpose, index, 0x5eedULL});
  return rng() >> 1;  // keep it representable as a signed JSON integer
}

TrainingOutcome train_from_simulation(const ScenarioConfig& scenario, SystemConfig system, int episodes) {
  if (episodes < 1) throw ConfigError("training: at least one training episode is required");
  system.policy = Policy::explore();
  system.collect_training = true;
  TrainingSet set;
  for (int i = 0; i < episodes; ++i) {
    ScenarioConfig sc = scenario;
    sc.seed = derived_seed(scenario.seed, kTrainingPurpose, static_cast<std::uint64_t>(i));
    system.seed = sc.seed;
    const std::vector<GroundTruthFrame> frames = generate_scenario(sc);
    const EpisodeLog log = run_episode(frames, system);
    for (const FrameRecord& r : log.frames) set.append(r);
  }
  return train_predictors(set);
}

}  // namespace viewsched
