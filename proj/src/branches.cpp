#include "viewsched/branches.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "viewsched/errors.hpp"

namespace viewsched {

namespace {

constexpr std::array<std::string_view, kNumBackbones> kBackboneNames = {"r34", "r50", "r101", "r152"};
constexpr std::array<std::string_view, kNumBackbones> kResolutions = {"256x448", "400x704", "544x960",
                                                                      "720x1280"};

struct SyntheticTable {
  double backbone_ms[kNumBackbones];
  double sparse_ms[kNumBackbones];
  double dense_ms[kNumBackbones];
  double fusion_ms;
  double head_ms;
  double nms_ms;
};

// Orin-like per-view latencies. Anchors: R34+sparse gives 6*5+3 = 33 ms per
// frame and R152+sparse gives 6*124.5+3 = 750 ms per frame.
constexpr SyntheticTable kOrin = {{4.0, 8.0, 30.0, 120.0}, {1.0, 1.5, 2.5, 4.5}, {2.5, 4.0, 7.5, 14.0}, 1.5, 2.0,
                                  1.0};
constexpr double kBackboneMemory[kNumBackbones] = {900.0, 1400.0, 2300.0, 3600.0};
constexpr double kSparseMemory[kNumBackbones] = {60.0, 90.0, 140.0, 220.0};
constexpr double kDenseMemory[kNumBackbones] = {350.0, 480.0, 760.0, 1150.0};

DeviceProfile build_profile(std::string name, double memory_limit, double latency_scale, UpdateCost update,
                            bool anchored) {
  DeviceProfile p;
  p.name = std::move(name);
  p.memory_limit_mb = memory_limit;
  p.update_cost = update;
  for (int b = 0; b < kNumBackbones; ++b) {
    const auto bb = static_cast<BackboneKind>(b);
    const bool anchor = anchored && (bb == BackboneKind::R34 || bb == BackboneKind::R152);
    p.modules.push_back({"backbone_" + std::string(kBackboneNames[b]), kOrin.backbone_ms[b] * latency_scale,
                         kBackboneMemory[b], false, !anchor});
    p.modules.push_back({"depthnet_sparse_" + std::string(kBackboneNames[b]), kOrin.sparse_ms[b] * latency_scale,
                         kSparseMemory[b], false, !anchor});
    p.modules.push_back({"depthnet_dense_" + std::string(kBackboneNames[b]), kOrin.dense_ms[b] * latency_scale,
                         kDenseMemory[b], false, true});
  }
  p.modules.push_back({"temporal_fusion", kOrin.fusion_ms * latency_scale, 600.0, false, true});
  p.modules.push_back({"bev_head", kOrin.head_ms * latency_scale, 1500.0, true, !anchored});
  p.modules.push_back({"nms", kOrin.nms_ms * latency_scale, 50.0, true, !anchored});
  for (const BranchConfig& b : enumerate_branches()) p.branch_modules.push_back(b.modules());
  return p;
}

}  // namespace

std::string_view to_string(BackboneKind b) { return kBackboneNames[static_cast<int>(b)]; }
std::string_view to_string(DepthNetKind d) { return d == DepthNetKind::Sparse ? "sparse" : "dense"; }
std::string_view input_resolution(BackboneKind b) { return kResolutions[static_cast<int>(b)]; }

BranchConfig BranchConfig::from_index(int index) {
  if (index < 0 || index >= kNumBranches) {
    throw ConfigError("branch index " + std::to_string(index) + " out of range");
  }
  if (index == kTrackerBranch) return make_tracker();
  const int k = index - 1;
  return detection(static_cast<BackboneKind>(k / 4), static_cast<DepthNetKind>((k / 2) % 2), (k % 2) == 1);
}

int BranchConfig::index() const {
  if (tracker) return kTrackerBranch;
  return 1 + 4 * static_cast<int>(backbone) + 2 * static_cast<int>(depthnet) + (temporal_fusion ? 1 : 0);
}

std::string BranchConfig::name() const {
  if (tracker) return "tracker";
  std::string n = std::string(to_string(backbone)) + "_" + std::string(to_string(depthnet));
  if (temporal_fusion) n += "_fusion";
  return n;
}

std::vector<std::string> BranchConfig::modules() const {
  if (tracker) return {};
  const std::string bb(to_string(backbone));
  std::vector<std::string> m = {"backbone_" + bb, "depthnet_" + std::string(to_string(depthnet)) + "_" + bb};
  if (temporal_fusion) m.emplace_back("temporal_fusion");
  m.emplace_back("bev_head");
  m.emplace_back("nms");
  return m;
}

std::array<BranchConfig, kNumBranches> enumerate_branches() {
  std::array<BranchConfig, kNumBranches> out;
  for (int i = 0; i < kNumBranches; ++i) out[i] = BranchConfig::from_index(i);
  return out;
}

int branch_index_from_name(std::string_view name) {
  for (const BranchConfig& b : enumerate_branches()) {
    if (b.name() == name) return b.index();
  }
  throw ConfigError("unknown branch '" + std::string(name) + "'");
}

const ModuleProfile* DeviceProfile::find_module(std::string_view module) const {
  for (const ModuleProfile& m : modules) {
    if (m.name == module) return &m;
  }
  return nullptr;
}

void DeviceProfile::validate() const {
  if (!(memory_limit_mb > 0.0)) throw ConfigError("device '" + name + "': memory_limit_mb must be positive");
  if (branch_modules.size() != static_cast<std::size_t>(kNumBranches)) {
    throw ConfigError("device '" + name + "': expected " + std::to_string(kNumBranches) + " branches, got " +
                      std::to_string(branch_modules.size()));
  }
  if (!branch_modules[kTrackerBranch].empty()) {
    throw ConfigError("device '" + name + "': tracker branch must not reference modules");
  }
  std::set<std::string> seen;
  for (const ModuleProfile& m : modules) {
    if (!seen.insert(m.name).second) throw ConfigError("device '" + name + "': duplicate module '" + m.name + "'");
    if (!(m.latency_ms >= 0.0) || !(m.memory_mb >= 0.0)) {
      throw ConfigError("device '" + name + "': module '" + m.name + "' has negative latency or memory");
    }
  }
  for (int i = 0; i < kNumBranches; ++i) {
    for (const std::string& mod : branch_modules[i]) {
      if (!find_module(mod)) {
        throw ConfigError("device '" + name + "': branch " + std::to_string(i) + " references unprofiled module '" +
                          mod + "'");
      }
    }
  }
  if (!(batching_alpha >= 0.0 && batching_alpha <= 1.0)) {
    throw ConfigError("device '" + name + "': batching_alpha must lie in [0, 1]");
  }
  if (update_cost.intercept_ms < 0.0 || update_cost.per_track_ms < 0.0) {
    throw ConfigError("device '" + name + "': tracker_update costs must be non-negative");
  }
}

DeviceProfile device_profile_from_json(const nlohmann::json& j) {
  DeviceProfile p;
  try {
    p.name = j.at("name").get<std::string>();
    p.memory_limit_mb = j.at("memory_limit_mb").get<double>();
    for (const auto& m : j.at("modules")) {
      ModuleProfile mp;
      mp.name = m.at("name").get<std::string>();
      mp.latency_ms = m.at("latency_ms").get<double>();
      mp.memory_mb = m.at("memory_mb").get<double>();
      mp.fixed = m.value("fixed", false);
      mp.synthetic = m.value("synthetic", true);
      p.modules.push_back(std::move(mp));
    }
    p.branch_modules.assign(kNumBranches, {});
    std::vector<char> present(kNumBranches, 0);
    for (const auto& b : j.at("branches")) {
      const int idx = b.at("index").get<int>();
      if (idx < 0 || idx >= kNumBranches) throw ConfigError("branch index " + std::to_string(idx) + " out of range");
      if (present[idx]) throw ConfigError("branch index " + std::to_string(idx) + " listed twice");
      present[idx] = 1;
      p.branch_modules[idx] = b.at("modules").get<std::vector<std::string>>();
    }
    for (int i = 0; i < kNumBranches; ++i) {
      if (!present[i]) throw ConfigError("branch index " + std::to_string(i) + " missing");
    }
    p.batching_alpha = j.value("batching_alpha", 1.0);
    if (j.contains("tracker_update")) {
      p.update_cost.intercept_ms = j["tracker_update"].at("intercept_ms").get<double>();
      p.update_cost.per_track_ms = j["tracker_update"].at("per_track_ms").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("device profile: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const DeviceProfile& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["memory_limit_mb"] = p.memory_limit_mb;
  j["batching_alpha"] = p.batching_alpha;
  j["tracker_update"] = {{"intercept_ms", p.update_cost.intercept_ms},
                         {"per_track_ms", p.update_cost.per_track_ms},
                         {"synthetic", true}};
  auto& mods = j["modules"] = nlohmann::json::array();
  for (const ModuleProfile& m : p.modules) {
    mods.push_back({{"name", m.name},
                    {"latency_ms", m.latency_ms},
                    {"memory_mb", m.memory_mb},
                    {"fixed", m.fixed},
                    {"synthetic", m.synthetic}});
  }
  auto& br = j["branches"] = nlohmann::json::array();
  for (int i = 0; i < static_cast<int>(p.branch_modules.size()); ++i) {
    br.push_back({{"index", i}, {"name", BranchConfig::from_index(i).name()}, {"modules", p.branch_modules[i]}});
  }
  return j;
}

DeviceProfile load_device_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open device profile '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("device profile '" + path + "': " + e.what());
  }
  try {
    return device_profile_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

DeviceProfile bundled_device_profile(std::string_view name) {
  if (name == "orin") return build_profile("orin", 30000.0, 1.0, {0.5, 0.02}, true);
  if (name == "xavier") return build_profile("xavier", 12000.0, 2.0, {1.0, 0.05}, false);
  if (name == "orin_nano") return build_profile("orin_nano", 6300.0, 2.4, {0.8, 0.04}, false);
  throw ConfigError("no bundled device profile named '" + std::string(name) + "'");
}

double branch_latency(int branch_index, const DeviceProfile& device) {
  if (branch_index < 0 || branch_index >= static_cast<int>(device.branch_modules.size())) {
    throw ConfigError("branch index " + std::to_string(branch_index) + " not in device profile");
  }
  double total = 0.0;
  for (const std::string& mod : device.branch_modules[branch_index]) {
    const ModuleProfile* m = device.find_module(mod);
    if (!m) throw ConfigError("module '" + mod + "' has no latency profile on device '" + device.name + "'");
    if (!m->fixed) total += m->latency_ms;
  }
  return total;
}

double batched_latency(double marginal_ms, int views, double alpha) {
  if (views <= 0) return 0.0;
  return marginal_ms * (1.0 + alpha * (views - 1));
}

double fixed_latency(const DeviceProfile& device) {
  double total = 0.0;
  for (const ModuleProfile& m : device.modules) {
    if (m.fixed) total += m.latency_ms;
  }
  return total;
}

AdaptResult adapt(const DeviceProfile& device, double target_latency_ms) {
  if (!(target_latency_ms > 0.0)) throw ConfigError("adapt: target latency must be positive");
  std::vector<char> alive(kNumBranches, 1);

  auto resident_modules = [&] {
    std::set<std::string> mods;
    for (const ModuleProfile& m : device.modules) {
      if (m.fixed) mods.insert(m.name);
    }
    for (int i = 0; i < kNumBranches; ++i) {
      if (alive[i]) mods.insert(device.branch_modules[i].begin(), device.branch_modules[i].end());
    }
    return mods;
  };
  auto memory_of = [&](const std::set<std::string>& mods) {
    double total = 0.0;
    for (const std::string& n : mods) {
      if (const ModuleProfile* m = device.find_module(n)) total += m->memory_mb;
    }
    return total;
  };

  AdaptResult result;
  for (auto mods = resident_modules(); memory_of(mods) > device.memory_limit_mb; mods = resident_modules()) {
    const ModuleProfile* victim = nullptr;
    for (const std::string& n : mods) {
      const ModuleProfile* m = device.find_module(n);
      if (!m || m->fixed) continue;
      if (!victim || m->memory_mb > victim->memory_mb) victim = m;
    }
    if (!victim) break;
    result.removed_modules.push_back(victim->name);
    for (int i = 1; i < kNumBranches; ++i) {
      const auto& bm = device.branch_modules[i];
      if (std::find(bm.begin(), bm.end(), victim->name) != bm.end()) alive[i] = 0;
    }
  }

  const double fixed = fixed_latency(device);
  for (int i = 1; i < kNumBranches; ++i) {
    if (alive[i] && branch_latency(i, device) + fixed > target_latency_ms) {
      alive[i] = 0;
      result.removed_for_latency.push_back(i);
    }
  }
  for (int i = 0; i < kNumBranches; ++i) {
    if (alive[i]) result.branches.push_back(i);
  }
  result.degenerate = result.branches.size() == 1;
  if (result.degenerate) {
    spdlog::warn("adapt: only the tracker branch fits device '{}' at {} ms", device.name, target_latency_ms);
  }
  return result;
}

}  // namespace viewsched
