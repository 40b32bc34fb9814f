#include <cstdlib>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "viewsched/cli.hpp"

namespace {

// Log verbosity comes from VIEWSCHED_LOG (trace, debug, info, warn, error, off).
void configure_logging() {
  auto logger = spdlog::stderr_color_mt("viewsched");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("VIEWSCHED_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  using namespace viewsched;

  CLI::App app{"Per-view branch scheduling for multi-camera 3D perception"};
  app.require_subcommand(1);

  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::optional<double> target_ms;
  std::optional<std::string> out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest, "Run manifest (JSON)")->required();
    sub->add_option("--seed", seed, "Override the manifest seed");
    sub->add_option("--target-ms", target_ms, "Override the frame latency target");
    sub->add_option("--out", out, "Override the output directory");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Run one adaptive episode and write logs and a report");
  add_common(simulate);

  CLI::App* train = app.add_subcommand("train", "Train predictors from episode logs");
  add_common(train);
  std::string episodes;
  train->add_option("--episodes", episodes, "Glob of episode.jsonl files")->required();

  CLI::App* adapt_cmd = app.add_subcommand("adapt", "Prune branches for a device and latency target");
  std::string profile = "orin";
  std::optional<std::string> model;
  double adapt_target = std::numeric_limits<double>::infinity();
  adapt_cmd->add_option("--profile", profile, "Device profile file or bundled name (orin, xavier, orin_nano)");
  adapt_cmd->add_option("--target-ms", adapt_target, "Frame latency target (inf keeps every branch that fits memory)");
  adapt_cmd->add_option("--model", model, "Predictor model for the predicted-score column");
  adapt_cmd->add_option("--out", out, "Directory for branches.json");

  CLI::App* compare = app.add_subcommand("compare", "Compare adaptive, per-frame and fixed-branch policies");
  add_common(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CommandOverrides overrides;
  overrides.seed = seed;
  overrides.target_ms = target_ms;
  if (out) overrides.output_dir = *out;

  return guarded([&]() -> int {
    if (*simulate) return cmd_simulate(manifest, overrides);
    if (*train) return cmd_train_predictor(manifest, episodes, overrides);
    if (*compare) return cmd_compare(manifest, overrides);
    std::optional<std::filesystem::path> model_path;
    if (model) model_path = *model;
    std::optional<std::filesystem::path> out_dir;
    if (out) out_dir = *out;
    return cmd_adapt(profile, adapt_target, model_path, out_dir);
  });
}
