#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace viewsched {

enum class BackboneKind : std::uint8_t { R34, R50, R101, R152 };
enum class DepthNetKind : std::uint8_t { Sparse, Dense };

inline constexpr int kNumBackbones = 4;
inline constexpr int kNumBranches = 17;
inline constexpr int kTrackerBranch = 0;

std::string_view to_string(BackboneKind b);
std::string_view to_string(DepthNetKind d);
// Input resolution the backbone runs at, e.g. "256x448".
std::string_view input_resolution(BackboneKind b);

// One execution path for a camera view: the tracker shortcut or a
// (backbone, depth network, temporal fusion) combination.
struct BranchConfig {
  bool tracker = true;
  BackboneKind backbone = BackboneKind::R34;
  DepthNetKind depthnet = DepthNetKind::Sparse;
  bool temporal_fusion = false;

  static BranchConfig make_tracker() { return {}; }
  static BranchConfig detection(BackboneKind b, DepthNetKind d, bool fusion) { return {false, b, d, fusion}; }
  static BranchConfig from_index(int index);

  // 0 for the tracker, then 1 + 4*backbone + 2*depthnet + fusion.
  int index() const;
  std::string name() const;  // "tracker", "r50_dense_fusion", ...
  // Modules along the path, in pipeline order. Empty for the tracker.
  std::vector<std::string> modules() const;

  friend bool operator==(const BranchConfig&, const BranchConfig&) = default;
};

// Tracker first, then detection branches ordered by (backbone, depthnet, fusion).
std::array<BranchConfig, kNumBranches> enumerate_branches();
// Throws ConfigError for an unknown name.
int branch_index_from_name(std::string_view name);

struct ModuleProfile {
  std::string name;
  double latency_ms = 0.0;  // per view, or per frame when fixed
  double memory_mb = 0.0;
  bool fixed = false;
  bool synthetic = true;
};

// Ground-truth cost of the tracker's state update on the device; used by the
// simulator to produce "measured" update latencies.
struct UpdateCost {
  double intercept_ms = 0.5;
  double per_track_ms = 0.02;
  double at(int tracks) const { return intercept_ms + per_track_ms * tracks; }
};

struct DeviceProfile {
  std::string name;
  double memory_limit_mb = 0.0;
  std::vector<ModuleProfile> modules;
  // Module list per branch index; the tracker entry lists no modules.
  std::vector<std::vector<std::string>> branch_modules;
  double batching_alpha = 1.0;
  UpdateCost update_cost;

  const ModuleProfile* find_module(std::string_view name) const;
  // Throws ConfigError naming the first problem found.
  void validate() const;
};

DeviceProfile device_profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeviceProfile& p);
DeviceProfile load_device_profile(const std::string& path);

// Bundled profiles. Only the R34/sparse and R152/sparse paths of "orin" are
// anchored to published figures; everything else is synthetic.
DeviceProfile bundled_device_profile(std::string_view name);
inline constexpr std::array<std::string_view, 3> kBundledDevices = {"orin", "xavier", "orin_nano"};

// Per-view marginal latency: sum of the branch's non-fixed modules.
double branch_latency(int branch_index, const DeviceProfile& device);
// Cost of running k views through one branch: marginal * (1 + alpha (k - 1)).
double batched_latency(double marginal_ms, int views, double alpha);
double fixed_latency(const DeviceProfile& device);

struct AdaptResult {
  std::vector<int> branches;               // surviving branch indices, ascending
  std::vector<std::string> removed_modules;  // memory pass, in removal order
  std::vector<int> removed_for_latency;
  bool degenerate = false;                 // only the tracker survived
};

// Offline model adaptation: drop the largest detection modules until the
// resident set fits in memory, then drop branches whose single-view latency
// plus fixed latency exceeds the target. The tracker always survives.
AdaptResult adapt(const DeviceProfile& device, double target_latency_ms);

}  // namespace viewsched
