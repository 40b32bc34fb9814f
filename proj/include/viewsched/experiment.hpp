#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "viewsched/predictors.hpp"
#include "viewsched/simulator.hpp"

namespace viewsched {

// Rows for the accuracy predictor plus (track count, update ms) samples.
struct TrainingSet {
  std::vector<FeatureRow> features;
  std::vector<double> targets;
  std::vector<std::pair<int, double>> update_samples;

  void append(const FrameRecord& record);
  bool empty() const { return targets.empty(); }
};

struct TrainingOutcome {
  PredictorBundle bundle;
  TrainingTrace trace;
  double train_r2 = 0.0;
  std::size_t rows = 0;
  std::size_t update_rows = 0;
};

// Throws ConfigError when the set has no accuracy rows.
TrainingOutcome train_predictors(const TrainingSet& set, const GbrtParams& params = {});

// Independent seed for the index-th run of some purpose, so training and
// evaluation episodes never share a scenario.
std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

inline constexpr std::uint64_t kTrainingPurpose = 1;
inline constexpr std::uint64_t kEvaluationPurpose = 2;

// Bundled scenarios: "quickstart" (short, straight ego path) and "compare"
// (longer, denser, circular ego path). Throws ConfigError for other names.
ScenarioConfig bundled_scenario(std::string_view name);
inline constexpr std::array<std::string_view, 2> kBundledScenarios = {"quickstart", "compare"};

// Runs `episodes` exploration episodes on reseeded copies of `scenario` with
// the given system (policy and training flags are overridden) and trains.
TrainingOutcome train_from_simulation(const ScenarioConfig& scenario, SystemConfig system, int episodes);

}  // namespace viewsched
