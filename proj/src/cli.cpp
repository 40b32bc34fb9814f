#include "viewsched/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "viewsched/errors.hpp"

namespace viewsched {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(path.string() + ": cannot write file");
  out << content;
  if (!out) throw ConfigError(path.string() + ": write failed");
}

fs::path prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError(dir.string() + ": cannot create output directory (" + ec.message() + ")");
  return dir;
}

fs::path resolve_input(const fs::path& base, const nlohmann::json& j, const char* field, const fs::path& manifest) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw ConfigError(manifest.string() + ": field '" + field + "' must be a path string");
  }
  fs::path p = j[field].get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!fs::exists(p)) {
    throw ConfigError(manifest.string() + ": field '" + field + "' refers to missing file " + p.string());
  }
  return p.lexically_normal();
}

template <typename T>
T field_or(const nlohmann::json& j, const char* field, T fallback, const fs::path& manifest) {
  if (!j.contains(field) || j[field].is_null()) return fallback;
  try {
    return j[field].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(manifest.string() + ": field '" + field + "' has the wrong type");
  }
}

// Loader errors already carry a module prefix; add the file they came from.
template <typename F>
auto with_file(const fs::path& path, F&& load) {
  try {
    return load(read_json_file(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + msg);
  }
}

nlohmann::json header(const RunManifest& m, std::string_view kind) {
  return {{"type", "header"},
          {"kind", kind},
          {"tool_version", kToolVersion},
          {"manifest", m.source.filename().string()},
          {"manifest_sha256", m.sha256},
          {"seed", m.seed},
          {"target_ms", m.target_ms}};
}

nlohmann::json branch_names(std::span<const int> branches) {
  nlohmann::json a = nlohmann::json::array();
  for (int b : branches) a.push_back(BranchConfig::from_index(b).name());
  return a;
}

nlohmann::json training_json(const TrainingOutcome& t) {
  return {{"rows", t.rows},
          {"update_rows", t.update_rows},
          {"train_r2", t.train_r2},
          {"mse_initial", t.trace.mse_per_round.empty() ? 0.0 : t.trace.mse_per_round.front()},
          {"mse_final", t.trace.mse_per_round.empty() ? 0.0 : t.trace.mse_per_round.back()}};
}

nlohmann::json summary_row(const PolicyResult& r) {
  nlohmann::json j = {{"policy", r.policy}, {"feasible", r.feasible}};
  if (!r.feasible) return j;
  j["DS"] = r.summary.ds;
  j["mAP"] = r.summary.map;
  j["mATE"] = r.summary.mate;
  j["mAVE"] = r.summary.mave;
  j["frames"] = r.frames;
  j["budget_violations"] = r.budget_violations;
  j["mean_predicted_latency_ms"] = r.mean_predicted_latency_ms;
  j["mean_actual_latency_ms"] = r.mean_actual_latency_ms;
  return j;
}

PolicyResult policy_result(const std::string& name, const EpisodeLog& log) {
  PolicyResult r;
  r.policy = name;
  r.summary = log.summary;
  r.frames = static_cast<int>(log.frames.size());
  r.budget_violations = log.budget_violations;
  for (const FrameRecord& f : log.frames) {
    r.mean_predicted_latency_ms += f.predicted_latency_ms;
    r.mean_actual_latency_ms += f.actual_latency_ms;
  }
  if (r.frames > 0) {
    r.mean_predicted_latency_ms /= r.frames;
    r.mean_actual_latency_ms /= r.frames;
  }
  return r;
}

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw InvariantError("sha256: digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

nlohmann::json read_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

RunManifest load_manifest(const fs::path& path) {
  RunManifest m;
  m.source = path;
  const std::string text = read_file(path);
  m.sha256 = sha256_hex(text);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": manifest must be an object");
  const int version = field_or(j, "version", 0, path);
  if (version != kManifestFormatVersion) {
    throw ConfigError(path.string() + ": field 'version' must be " + std::to_string(kManifestFormatVersion));
  }
  const fs::path base = path.parent_path();
  m.scenario = resolve_input(base, j, "scenario", path);
  m.device = resolve_input(base, j, "device", path);
  m.capability = resolve_input(base, j, "capability", path);
  if (j.contains("model") && !j["model"].is_null()) m.model = resolve_input(base, j, "model", path);
  m.target_ms = field_or(j, "target_ms", m.target_ms, path);
  if (!(m.target_ms > 0.0)) throw ConfigError(path.string() + ": field 'target_ms' must be positive");
  if (j.contains("seed")) {
    m.seed = field_or<std::uint64_t>(j, "seed", 0, path);
  } else {
    m.seed = with_file(m.scenario, [](const nlohmann::json& s) { return s.value("seed", std::uint64_t{0}); });
  }
  m.output_dir = field_or<std::string>(j, "output_dir", m.output_dir.string(), path);
  m.latency_noise_sigma = field_or(j, "latency_noise_sigma", m.latency_noise_sigma, path);
  if (m.latency_noise_sigma < 0.0) throw ConfigError(path.string() + ": field 'latency_noise_sigma' must be >= 0");
  m.training_episodes = field_or(j, "training_episodes", m.training_episodes, path);
  if (m.training_episodes < 1) throw ConfigError(path.string() + ": field 'training_episodes' must be >= 1");
  m.evaluation_episodes = field_or(j, "evaluation_episodes", m.evaluation_episodes, path);
  if (m.evaluation_episodes < 1) throw ConfigError(path.string() + ": field 'evaluation_episodes' must be >= 1");
  return m;
}

void apply_overrides(RunManifest& m, const CommandOverrides& o) {
  if (o.seed) m.seed = *o.seed;
  if (o.target_ms) {
    if (!(*o.target_ms > 0.0)) throw ConfigError("--target-ms must be positive");
    m.target_ms = *o.target_ms;
  }
  if (o.output_dir) m.output_dir = *o.output_dir;
}

LoadedRun load_run(const RunManifest& manifest) {
  LoadedRun run;
  run.manifest = manifest;
  run.scenario = with_file(manifest.scenario, scenario_from_json);
  run.scenario.seed = manifest.seed;
  run.device = load_device_profile(manifest.device.string());
  run.capability = with_file(manifest.capability, capability_from_json);
  if (manifest.model) run.model = with_file(*manifest.model, bundle_from_json);
  run.adapted = adapt(run.device, manifest.target_ms);
  return run;
}

SystemConfig make_system(const LoadedRun& run, Policy policy, std::uint64_t seed) {
  SystemConfig s;
  s.rig = CameraRig::uniform(6);
  s.branches = run.adapted.branches;
  s.device = run.device;
  s.target_ms = run.manifest.target_ms;
  s.capability = run.capability;
  s.policy = policy;
  s.predictors = run.model;
  s.noise.sigma = run.manifest.latency_noise_sigma;
  s.false_positive_range = run.scenario.world_radius;
  s.seed = seed;
  return s;
}

TrainingOutcome obtain_predictors(LoadedRun& run, bool& trained) {
  trained = false;
  if (run.model) {
    TrainingOutcome out;
    out.bundle = *run.model;
    return out;
  }
  spdlog::info("no predictor model in the manifest; training on {} exploration episodes", run.manifest.training_episodes);
  TrainingOutcome out = train_from_simulation(run.scenario, make_system(run, Policy::explore(), run.manifest.seed),
                                              run.manifest.training_episodes);
  run.model = out.bundle;
  trained = true;
  return out;
}

std::vector<ComparisonEpisode> run_comparison(const LoadedRun& run, int episodes, bool include_fixed) {
  if (!run.model) throw ConfigError("compare: a trained predictor is required");
  std::vector<ComparisonEpisode> out;
  for (int i = 0; i < episodes; ++i) {
    ComparisonEpisode ep;
    ep.seed = derived_seed(run.manifest.seed, kEvaluationPurpose, static_cast<std::uint64_t>(i));
    ScenarioConfig sc = run.scenario;
    sc.seed = ep.seed;
    const std::vector<GroundTruthFrame> frames = generate_scenario(sc);

    const EpisodeLog adaptive = run_episode(frames, make_system(run, Policy::adaptive(), ep.seed));
    for (const FrameRecord& f : adaptive.frames) {
      if (f.frame == frames.front().index) continue;  // warm-up frame is not scheduled
      ++ep.dominance_frames;
      if (f.predicted_objective < f.uniform_objective) ++ep.dominance_violations;
    }
    ep.policies.push_back(policy_result("adaptive", adaptive));
    ep.policies.push_back(policy_result("per_frame", run_episode(frames, make_system(run, Policy::per_frame(), ep.seed))));

    if (include_fixed) {
      const double fixed = fixed_latency(run.device);
      const double update0 = run.model->update.predict(0);
      for (int b = 1; b < kNumBranches; ++b) {
        const Policy p = Policy::fixed(b);
        const bool deployable = std::find(run.adapted.branches.begin(), run.adapted.branches.end(), b) !=
                                run.adapted.branches.end();
        const double planned = batched_latency(branch_latency(b, run.device), 6, run.device.batching_alpha) + fixed +
                               update0;
        if (!deployable || planned > run.manifest.target_ms) {
          PolicyResult r;
          r.policy = p.name();
          r.feasible = false;
          ep.policies.push_back(r);
          continue;
        }
        ep.policies.push_back(policy_result(p.name(), run_episode(frames, make_system(run, p, ep.seed))));
      }
    }
    out.push_back(std::move(ep));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> default_data_files() {
  std::vector<std::pair<std::string, std::string>> files;
  auto add = [&](std::string path, const nlohmann::json& j) { files.emplace_back(std::move(path), j.dump(2) + "\n"); };
  for (std::string_view d : kBundledDevices) add("devices/" + std::string(d) + ".json", to_json(bundled_device_profile(d)));
  add("capability/default.json", to_json(default_capability()));
  for (std::string_view s : kBundledScenarios) add("scenarios/" + std::string(s) + ".json", to_json(bundled_scenario(s)));
  add("manifests/quickstart.json", {{"version", kManifestFormatVersion},
                                    {"scenario", "../scenarios/quickstart.json"},
                                    {"device", "../devices/orin.json"},
                                    {"capability", "../capability/default.json"},
                                    {"model", nullptr},
                                    {"target_ms", 33.0},
                                    {"seed", 1},
                                    {"latency_noise_sigma", 0.0},
                                    {"training_episodes", 3},
                                    {"output_dir", "out/quickstart"}});
  add("manifests/compare.json", {{"version", kManifestFormatVersion},
                                 {"scenario", "../scenarios/compare.json"},
                                 {"device", "../devices/orin.json"},
                                 {"capability", "../capability/default.json"},
                                 {"model", nullptr},
                                 {"target_ms", 100.0},
                                 {"seed", 11},
                                 {"latency_noise_sigma", 0.0},
                                 {"training_episodes", 3},
                                 {"evaluation_episodes", 10},
                                 {"output_dir", "out/compare"}});
  return files;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const InvariantError& e) {
    spdlog::error("invariant violation: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
}

int cmd_simulate(const fs::path& manifest_path, const CommandOverrides& overrides) {
  RunManifest m = load_manifest(manifest_path);
  apply_overrides(m, overrides);
  LoadedRun run = load_run(m);
  bool trained = false;
  const TrainingOutcome training = obtain_predictors(run, trained);

  SystemConfig system = make_system(run, Policy::adaptive(), m.seed);
  system.collect_training = true;
  const std::vector<GroundTruthFrame> frames = generate_scenario(run.scenario);
  const EpisodeLog log = run_episode(frames, system);

  const fs::path dir = prepare_output_dir(m.output_dir);
  std::string episode = header(m, "episode").dump() + "\n";
  std::string decisions = header(m, "decisions").dump() + "\n";
  std::map<std::string, int> usage;
  double abs_err = 0.0;
  for (const FrameRecord& r : log.frames) {
    nlohmann::json rec = frame_record_to_json(r);
    rec["type"] = "frame";
    episode += rec.dump() + "\n";
    decisions += nlohmann::json{{"type", "decision"},
                                {"frame", r.frame},
                                {"assignment", rec["branch_per_view"]},
                                {"predicted_objective", r.predicted_objective},
                                {"uniform_objective", r.uniform_objective},
                                {"t_max_ms", r.t_max_ms},
                                {"predicted_latency_ms", r.predicted_latency_ms},
                                {"actual_latency_ms", r.actual_latency_ms}}
                     .dump() +
                 "\n";
    for (int b : r.branch_per_view) ++usage[BranchConfig::from_index(b).name()];
    if (r.actual_latency_ms > 0.0) abs_err += std::abs(r.predicted_latency_ms - r.actual_latency_ms) / r.actual_latency_ms;
  }
  const int n = static_cast<int>(log.frames.size());
  double mean_pred = 0.0, mean_act = 0.0;
  for (const FrameRecord& r : log.frames) {
    mean_pred += r.predicted_latency_ms;
    mean_act += r.actual_latency_ms;
  }

  nlohmann::json report = {
      {"tool_version", kToolVersion},
      {"manifest", m.source.filename().string()},
      {"manifest_sha256", m.sha256},
      {"seed", m.seed},
      {"target_ms", m.target_ms},
      {"device", run.device.name},
      {"branch_set", branch_names(run.adapted.branches)},
      {"adapt",
       {{"removed_modules", run.adapted.removed_modules},
        {"removed_for_latency", branch_names(run.adapted.removed_for_latency)},
        {"degenerate", run.adapted.degenerate}}},
      {"predictor", {{"source", trained ? "trained" : "manifest"}}},
      {"evaluation", to_json(log.summary, EvalConfig{})},
      {"latency",
       {{"frames", n},
        {"budget_violations", log.budget_violations},
        {"compliance", n > 0 ? 1.0 - static_cast<double>(log.budget_violations) / n : 1.0},
        {"noise_sigma", m.latency_noise_sigma},
        {"mean_predicted_ms", n > 0 ? mean_pred / n : 0.0},
        {"mean_actual_ms", n > 0 ? mean_act / n : 0.0},
        {"mean_abs_error_fraction", n > 0 ? abs_err / n : 0.0}}},
      {"branch_usage", usage}};
  if (trained) report["predictor"]["training"] = training_json(training);

  write_file(dir / "episode.jsonl", episode);
  write_file(dir / "decisions.jsonl", decisions);
  write_file(dir / "report.json", report.dump(2) + "\n");
  if (trained) {
    nlohmann::json model = to_json(*run.model);
    model["tool_version"] = kToolVersion;
    model["manifest_sha256"] = m.sha256;
    model["training"] = training_json(training);
    write_file(dir / "model.json", model.dump(2) + "\n");
  }
  std::cout << "DS " << fixed3(log.summary.ds) << "  mAP " << fixed3(log.summary.map) << "  mATE "
            << fixed3(log.summary.mate) << "  mAVE " << fixed3(log.summary.mave) << "  frames " << n
            << "  budget violations " << log.budget_violations << "\n";
  std::cout << "artifacts written to " << dir.string() << "\n";
  return 0;
}

int cmd_train_predictor(const fs::path& manifest_path, const std::string& episodes_glob,
                        const CommandOverrides& overrides) {
  RunManifest m = load_manifest(manifest_path);
  apply_overrides(m, overrides);
  const std::vector<std::string> files = expand_glob(episodes_glob);
  if (files.empty()) throw ConfigError("train: no episode logs match '" + episodes_glob + "'");

  TrainingSet set;
  for (const std::string& file : files) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file + ": cannot open file");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(file + ":" + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
      }
      if (j.value("type", std::string("frame")) != "frame") continue;
      try {
        set.append(frame_record_from_json(j));
      } catch (const ConfigError& e) {
        throw ConfigError(file + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  const TrainingOutcome out = train_predictors(set);
  spdlog::info("train R2 {:.4f} over {} rows from {} episode logs", out.train_r2, out.rows, files.size());

  nlohmann::json model = to_json(out.bundle);
  model["tool_version"] = kToolVersion;
  model["manifest_sha256"] = m.sha256;
  nlohmann::json training = training_json(out);
  nlohmann::json names = nlohmann::json::array();
  for (const std::string& f : files) names.push_back(fs::path(f).filename().string());
  training["episode_logs"] = names;
  model["training"] = training;
  const fs::path dir = prepare_output_dir(m.output_dir);
  write_file(dir / "model.json", model.dump(2) + "\n");
  std::cout << "train R2 " << fixed3(out.train_r2) << " on " << out.rows << " rows; model written to "
            << (dir / "model.json").string() << "\n";
  return 0;
}

int cmd_adapt(const std::string& device_arg, double target_ms, const std::optional<fs::path>& model_path,
              const std::optional<fs::path>& output_dir) {
  if (!(target_ms > 0.0)) throw ConfigError("--target-ms must be positive");
  DeviceProfile device;
  std::string input_hash;
  const bool bundled = std::find(kBundledDevices.begin(), kBundledDevices.end(), device_arg) != kBundledDevices.end();
  if (bundled && !fs::exists(device_arg)) {
    device = bundled_device_profile(device_arg);
    input_hash = sha256_hex(to_json(device).dump());
  } else {
    input_hash = sha256_hex(read_file(device_arg));
    device = load_device_profile(device_arg);
  }
  std::optional<PredictorBundle> model;
  if (model_path) model = with_file(*model_path, bundle_from_json);

  const AdaptResult result = adapt(device, target_ms);
  const double fixed = fixed_latency(device);

  // Scores on a flat reference distribution; only meaningful relative to each other.
  DistributionVector reference;
  reference.fill(1.0 / kNumCategories);
  struct Row {
    int branch;
    double view_ms;
    double frame_ms;
    double score;
    bool pareto = false;
  };
  std::vector<Row> rows;
  for (int b : result.branches) {
    const double view_ms = branch_latency(b, device);
    const double frame_ms = batched_latency(view_ms, 6, device.batching_alpha) + fixed;
    const double score = model ? predict_accuracy(model->accuracy, make_features(reference, b, 1.0)) : 0.0;
    rows.push_back({b, view_ms, frame_ms, score});
  }
  if (model) {
    for (Row& r : rows) {
      r.pareto = std::none_of(rows.begin(), rows.end(), [&](const Row& o) {
        return (o.frame_ms <= r.frame_ms && o.score > r.score) || (o.frame_ms < r.frame_ms && o.score >= r.score);
      });
    }
  }

  std::cout << "device " << device.name << ", target " << target_ms << " ms, memory limit " << device.memory_limit_mb
            << " MB\n";
  for (const std::string& mod : result.removed_modules) std::cout << "removed for memory: " << mod << "\n";
  for (int b : result.removed_for_latency) {
    std::cout << "removed for latency: " << BranchConfig::from_index(b).name() << "\n";
  }
  std::cout << result.branches.size() << " branches survive" << (result.degenerate ? " (tracker only)" : "") << "\n";
  std::cout << std::left << std::setw(22) << "branch" << std::right << std::setw(10) << "view_ms" << std::setw(12)
            << "6view_ms";
  if (model) std::cout << std::setw(11) << "predicted" << std::setw(8) << "pareto";
  std::cout << "\n";
  nlohmann::json branches = nlohmann::json::array();
  for (const Row& r : rows) {
    const std::string name = BranchConfig::from_index(r.branch).name();
    std::cout << std::left << std::setw(22) << name << std::right << std::setw(10) << fixed3(r.view_ms)
              << std::setw(12) << fixed3(r.frame_ms);
    nlohmann::json row = {{"index", r.branch}, {"name", name}, {"view_latency_ms", r.view_ms},
                          {"six_view_latency_ms", r.frame_ms}};
    if (model) {
      std::cout << std::setw(11) << fixed3(r.score) << std::setw(8) << (r.pareto ? "*" : "");
      row["predicted_score"] = r.score;
      row["pareto"] = r.pareto;
    }
    std::cout << "\n";
    branches.push_back(row);
  }

  if (output_dir) {
    const fs::path dir = prepare_output_dir(*output_dir);
    nlohmann::json out = {{"tool_version", kToolVersion},
                          {"input_sha256", input_hash},
                          {"device", device.name},
                          {"target_ms", std::isfinite(target_ms) ? nlohmann::json(target_ms) : nlohmann::json("inf")},
                          {"branches", branches},
                          {"removed_modules", result.removed_modules},
                          {"removed_for_latency", branch_names(result.removed_for_latency)},
                          {"degenerate", result.degenerate}};
    write_file(dir / "branches.json", out.dump(2) + "\n");
  }
  return 0;
}

int cmd_compare(const fs::path& manifest_path, const CommandOverrides& overrides) {
  RunManifest m = load_manifest(manifest_path);
  apply_overrides(m, overrides);
  LoadedRun run = load_run(m);
  bool trained = false;
  const TrainingOutcome training = obtain_predictors(run, trained);
  const std::vector<ComparisonEpisode> episodes = run_comparison(run, m.evaluation_episodes, true);

  nlohmann::json per_episode = nlohmann::json::array();
  std::map<std::string, std::vector<const PolicyResult*>> by_policy;
  std::vector<std::string> order;
  int wins = 0, dom_frames = 0, dom_violations = 0;
  for (const ComparisonEpisode& ep : episodes) {
    nlohmann::json rows = nlohmann::json::array();
    for (const PolicyResult& r : ep.policies) {
      rows.push_back(summary_row(r));
      if (!by_policy.contains(r.policy)) order.push_back(r.policy);
      by_policy[r.policy].push_back(&r);
    }
    wins += ep.policies[0].summary.ds >= ep.policies[1].summary.ds ? 1 : 0;
    dom_frames += ep.dominance_frames;
    dom_violations += ep.dominance_violations;
    per_episode.push_back({{"seed", ep.seed},
                           {"dominance_frames", ep.dominance_frames},
                           {"dominance_violations", ep.dominance_violations},
                           {"policies", rows}});
  }

  nlohmann::json table = nlohmann::json::array();
  std::cout << std::left << std::setw(30) << "policy" << std::right << std::setw(8) << "DS" << std::setw(8) << "mAP"
            << std::setw(8) << "mATE" << std::setw(8) << "mAVE" << std::setw(12) << "latency_ms" << std::setw(12)
            << "violations" << "\n";
  for (const std::string& name : order) {
    const auto& rs = by_policy[name];
    const bool feasible = std::all_of(rs.begin(), rs.end(), [](const PolicyResult* r) { return r->feasible; });
    nlohmann::json row = {{"policy", name}, {"feasible", feasible}};
    std::cout << std::left << std::setw(30) << name << std::right;
    if (!feasible) {
      std::cout << std::setw(8) << "infeasible" << "\n";
      table.push_back(row);
      continue;
    }
    double ds = 0, map = 0, mate = 0, mave = 0, lat = 0;
    int viol = 0;
    for (const PolicyResult* r : rs) {
      ds += r->summary.ds;
      map += r->summary.map;
      mate += r->summary.mate;
      mave += r->summary.mave;
      lat += r->mean_actual_latency_ms;
      viol += r->budget_violations;
    }
    const double k = static_cast<double>(rs.size());
    row["mean_DS"] = ds / k;
    row["mean_mAP"] = map / k;
    row["mean_mATE"] = mate / k;
    row["mean_mAVE"] = mave / k;
    row["mean_latency_ms"] = lat / k;
    row["budget_violations"] = viol;
    table.push_back(row);
    std::cout << std::setw(8) << fixed3(ds / k) << std::setw(8) << fixed3(map / k) << std::setw(8) << fixed3(mate / k)
              << std::setw(8) << fixed3(mave / k) << std::setw(12) << fixed3(lat / k) << std::setw(12) << viol << "\n";
  }
  std::cout << "adaptive DS >= per-frame DS on " << wins << " of " << episodes.size() << " episodes; "
            << dom_violations << " dominance violations over " << dom_frames << " frames\n";

  nlohmann::json report = {{"tool_version", kToolVersion},
                           {"manifest", m.source.filename().string()},
                           {"manifest_sha256", m.sha256},
                           {"seed", m.seed},
                           {"target_ms", m.target_ms},
                           {"device", run.device.name},
                           {"branch_set", branch_names(run.adapted.branches)},
                           {"predictor", {{"source", trained ? "trained" : "manifest"}}},
                           {"policies", table},
                           {"adaptive_vs_per_frame", {{"episodes", episodes.size()}, {"adaptive_not_worse", wins}}},
                           {"dominance_audit", {{"frames", dom_frames}, {"violations", dom_violations}}},
                           {"episodes", per_episode}};
  if (trained) report["predictor"]["training"] = training_json(training);
  const fs::path dir = prepare_output_dir(m.output_dir);
  write_file(dir / "compare.json", report.dump(2) + "\n");
  std::cout << "report written to " << (dir / "compare.json").string() << "\n";
  return 0;
}

}  // namespace viewsched
