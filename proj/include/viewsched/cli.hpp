#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "viewsched/experiment.hpp"

namespace viewsched {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kManifestFormatVersion = 1;

// Run description. Input paths are resolved against the manifest's directory;
// the output directory is taken relative to the working directory.
struct RunManifest {
  std::filesystem::path source;  // the manifest file itself
  std::string sha256;            // hex digest of the manifest bytes
  std::filesystem::path scenario;
  std::filesystem::path device;
  std::filesystem::path capability;
  std::optional<std::filesystem::path> model;  // absent: train before running
  double target_ms = 33.0;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  double latency_noise_sigma = 0.0;
  int training_episodes = 3;
  int evaluation_episodes = 10;  // compare only
};

// Throws ConfigError naming the file and field on any problem, including
// referenced files that do not exist.
RunManifest load_manifest(const std::filesystem::path& path);

struct CommandOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> target_ms;
  std::optional<std::filesystem::path> output_dir;
};
void apply_overrides(RunManifest& manifest, const CommandOverrides& overrides);

std::string sha256_hex(std::string_view bytes);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Everything a run needs, loaded from a manifest.
struct LoadedRun {
  RunManifest manifest;
  ScenarioConfig scenario;
  DeviceProfile device;
  CapabilityProfile capability;
  AdaptResult adapted;
  std::optional<PredictorBundle> model;
};
LoadedRun load_run(const RunManifest& manifest);

// System configuration for an episode of the loaded run.
SystemConfig make_system(const LoadedRun& run, Policy policy, std::uint64_t seed);

// Uses the manifest's model or trains one from exploration episodes.
TrainingOutcome obtain_predictors(LoadedRun& run, bool& trained);

struct PolicyResult {
  std::string policy;
  bool feasible = true;
  EvalSummary summary;
  int frames = 0;
  int budget_violations = 0;
  double mean_predicted_latency_ms = 0.0;
  double mean_actual_latency_ms = 0.0;
};

struct ComparisonEpisode {
  std::uint64_t seed = 0;
  std::vector<PolicyResult> policies;  // adaptive, per_frame, then fixed branches
  int dominance_frames = 0;
  int dominance_violations = 0;  // adaptive objective below the best uniform one
};

// Adaptive and per-frame policies on `episodes` reseeded scenarios, and each
// detection branch as a fixed policy when `include_fixed` is set.
std::vector<ComparisonEpisode> run_comparison(const LoadedRun& run, int episodes, bool include_fixed);

// Commands. Each returns the process exit code and writes its artifacts to
// the manifest's output directory.
int cmd_simulate(const std::filesystem::path& manifest, const CommandOverrides& overrides);
int cmd_train_predictor(const std::filesystem::path& manifest, const std::string& episodes_glob,
                        const CommandOverrides& overrides);
int cmd_adapt(const std::string& device, double target_ms, const std::optional<std::filesystem::path>& model,
              const std::optional<std::filesystem::path>& output_dir);
int cmd_compare(const std::filesystem::path& manifest, const CommandOverrides& overrides);

// Bundled data files (device profiles, capability profile, scenarios and
// manifests) as (path relative to the data directory, file content).
std::vector<std::pair<std::string, std::string>> default_data_files();

// Runs `body`, mapping ConfigError to 2 and InvariantError to 3 after logging.
int guarded(const std::function<int()>& body);

}  // namespace viewsched
