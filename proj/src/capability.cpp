#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "viewsched/errors.hpp"
#include "viewsched/simulator.hpp"

namespace viewsched {

namespace {

constexpr std::array<double, 4> kBackboneNoiseFactor = {1.4, 1.2, 1.0, 0.85};

// Plain recall by (backbone, distance level); flags do not change recall.
constexpr std::array<std::array<double, kDistanceLevels>, 4> kRecall = {{
    {0.80, 0.62, 0.42, 0.29, 0.12},
    {0.85, 0.70, 0.52, 0.36, 0.17},
    {0.90, 0.78, 0.62, 0.45, 0.23},
    {0.93, 0.84, 0.70, 0.54, 0.30},
}};
constexpr std::array<double, kDistanceLevels> kSigmaPos = {0.06, 0.09, 0.13, 0.18, 0.26};
constexpr std::array<double, kVelocityLevels> kSigmaVel = {0.15, 0.25, 0.45, 0.9};
constexpr double kDenseSigmaPosFactor = 0.75;
// Fusion and dense depth together give 0.5 * 5/6 = 1/2.4.
constexpr double kFusionSigmaVelFactor = 0.5;
constexpr double kDenseSigmaVelFactor = 5.0 / 6.0;
constexpr std::array<double, 4> kTpConfidence = {0.55, 0.60, 0.65, 0.70};
constexpr std::array<double, 4> kFpRate = {0.6, 0.5, 0.4, 0.3};

// Ratio targets checked on load. Recall ratios are compared after removing
// the 0.1 recall floor that average precision ignores.
constexpr double kFarRecallRatio = 2.7;
constexpr double kFarRecallTolerance = 0.4;
constexpr double kRecallFloor = 0.1;
constexpr int kFarLevel = 3;
constexpr double kVelocityRatio = 2.4;
constexpr double kVelocityRatioTolerance = 0.01;
constexpr int kFastLevel = 3;

int branch_slot(int branch_index) {
  if (branch_index <= kTrackerBranch || branch_index >= kNumBranches) {
    throw InvariantError("capability: branch " + std::to_string(branch_index) + " is not a detection branch");
  }
  return branch_index - 1;
}

nlohmann::json array_json(const std::array<double, kNumCategories>& a) { return nlohmann::json(a); }

void read_array(const nlohmann::json& j, const char* key, std::array<double, kNumCategories>& out,
                const std::string& where) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != out.size()) {
    throw ConfigError(where + ": field '" + key + "' needs " + std::to_string(out.size()) + " entries");
  }
  std::copy(v.begin(), v.end(), out.begin());
}

}  // namespace

const BranchCapability& CapabilityProfile::of(int branch_index) const { return branches[branch_slot(branch_index)]; }
BranchCapability& CapabilityProfile::of(int branch_index) { return branches[branch_slot(branch_index)]; }

void CapabilityProfile::validate() const {
  for (int b = 1; b < kNumBranches; ++b) {
    const BranchCapability& c = of(b);
    const std::string where = "capability: branch " + BranchConfig::from_index(b).name();
    for (int k = 0; k < kNumCategories; ++k) {
      if (!(c.recall[k] >= 0.0 && c.recall[k] <= 1.0)) throw ConfigError(where + ": recall outside [0, 1]");
      if (!(c.sigma_pos[k] >= 0.0 && c.sigma_vel[k] >= 0.0 && c.sigma_size[k] >= 0.0)) {
        throw ConfigError(where + ": negative noise sigma");
      }
    }
    if (!(c.fp_rate >= 0.0)) throw ConfigError(where + ": negative false-positive rate");
    if (!(c.tp_conf_sd >= 0.0 && c.fp_conf_sd >= 0.0)) throw ConfigError(where + ": negative confidence sd");
  }
  if (!synthetic) return;  // ordering constraints describe the bundled synthetic family

  for (int b = 1; b < kNumBranches; ++b) {
    const BranchCapability& c = of(b);
    const std::string name = BranchConfig::from_index(b).name();
    for (int v = 0; v < kVelocityLevels; ++v) {
      for (int s = 0; s < kSizeLevels; ++s) {
        for (int d = 1; d < kDistanceLevels; ++d) {
          if (c.recall[CategoryLevel{d, v, s}.index()] > c.recall[CategoryLevel{d - 1, v, s}.index()]) {
            throw ConfigError("capability: recall of " + name + " rises with distance at " +
                              CategoryLevel{d, v, s}.label());
          }
        }
      }
    }
  }

  for (int depth = 0; depth < 2; ++depth) {
    for (int fusion = 0; fusion < 2; ++fusion) {
      auto idx = [&](int backbone) {
        return BranchConfig::detection(static_cast<BackboneKind>(backbone), static_cast<DepthNetKind>(depth),
                                       fusion != 0)
            .index();
      };
      for (int k = 0; k < kNumCategories; ++k) {
        for (int bb = 1; bb < 4; ++bb) {
          if (of(idx(bb)).recall[k] < of(idx(bb - 1)).recall[k]) {
            throw ConfigError("capability: recall of " + BranchConfig::from_index(idx(bb)).name() + " is below " +
                              BranchConfig::from_index(idx(bb - 1)).name() + " at " +
                              CategoryLevel::from_index(k).label());
          }
        }
      }
      for (int v = 0; v < kVelocityLevels; ++v) {
        for (int s = 0; s < kSizeLevels; ++s) {
          const int k = CategoryLevel{kFarLevel, v, s}.index();
          const double heavy = of(idx(3)).recall[k] - kRecallFloor;
          const double light = of(idx(0)).recall[k] - kRecallFloor;
          if (!(light > 0.0) || std::abs(heavy / light - kFarRecallRatio) > kFarRecallTolerance) {
            throw ConfigError("capability: far-range recall ratio of the heaviest to lightest backbone is off at " +
                              CategoryLevel{kFarLevel, v, s}.label());
          }
        }
      }
    }
  }

  const int r50_plain = BranchConfig::detection(BackboneKind::R50, DepthNetKind::Sparse, false).index();
  for (int b = 1; b < kNumBranches; ++b) {
    const BranchConfig cfg = BranchConfig::from_index(b);
    if (cfg.depthnet == DepthNetKind::Dense && cfg.temporal_fusion) {
      for (int d = 0; d < kDistanceLevels; ++d) {
        for (int s = 0; s < kSizeLevels; ++s) {
          const int k = CategoryLevel{d, kFastLevel, s}.index();
          const double ratio = of(r50_plain).sigma_vel[k] / of(b).sigma_vel[k];
          if (!(std::abs(ratio - kVelocityRatio) <= kVelocityRatioTolerance)) {
            throw ConfigError("capability: velocity noise of " + cfg.name() + " is not 1/2.4 of r50_sparse at " +
                              CategoryLevel{d, kFastLevel, s}.label());
          }
        }
      }
    }
    if (cfg.depthnet == DepthNetKind::Dense) {
      BranchConfig sparse = cfg;
      sparse.depthnet = DepthNetKind::Sparse;
      for (int k = 0; k < kNumCategories; ++k) {
        if (!(of(b).sigma_pos[k] < of(sparse.index()).sigma_pos[k])) {
          throw ConfigError("capability: dense depth does not lower position noise of " + cfg.name() + " at " +
                            CategoryLevel::from_index(k).label());
        }
      }
    }
  }
}

CapabilityProfile default_capability() {
  CapabilityProfile p;
  p.synthetic = true;
  for (int b = 1; b < kNumBranches; ++b) {
    const BranchConfig cfg = BranchConfig::from_index(b);
    const int bb = static_cast<int>(cfg.backbone);
    const bool dense = cfg.depthnet == DepthNetKind::Dense;
    BranchCapability& c = p.of(b);
    for (int k = 0; k < kNumCategories; ++k) {
      const CategoryLevel cat = CategoryLevel::from_index(k);
      c.recall[k] = kRecall[bb][cat.distance];
      c.sigma_pos[k] = kSigmaPos[cat.distance] * kBackboneNoiseFactor[bb] * (dense ? kDenseSigmaPosFactor : 1.0);
      c.sigma_vel[k] = kSigmaVel[cat.velocity] * (cfg.temporal_fusion ? kFusionSigmaVelFactor : 1.0) *
                       (dense ? kDenseSigmaVelFactor : 1.0);
      c.sigma_size[k] = 0.05 * kBackboneNoiseFactor[bb];
    }
    c.fp_rate = kFpRate[bb];
    c.tp_conf_mean = kTpConfidence[bb] + (dense ? 0.03 : 0.0) + (cfg.temporal_fusion ? 0.03 : 0.0);
    c.tp_conf_sd = 0.12;
    c.tp_conf_distance_slope = 0.04;
    c.fp_conf_mean = 0.3;
    c.fp_conf_sd = 0.1;
  }
  return p;
}

CapabilityProfile perfect_capability() {
  CapabilityProfile p;
  p.synthetic = false;
  for (BranchCapability& c : p.branches) {
    c.recall.fill(1.0);
    c.sigma_pos.fill(0.0);
    c.sigma_vel.fill(0.0);
    c.sigma_size.fill(0.0);
    c.fp_rate = 0.0;
    c.tp_conf_mean = 1.0;
    c.tp_conf_sd = 0.0;
    c.tp_conf_distance_slope = 0.0;
  }
  return p;
}

CapabilityProfile capability_from_json(const nlohmann::json& j) {
  CapabilityProfile p;
  try {
    const int version = j.at("version").get<int>();
    if (version != kCapabilityFormatVersion) {
      throw ConfigError("capability: unsupported version " + std::to_string(version));
    }
    p.synthetic = j.at("synthetic").get<bool>();
    std::array<bool, kNumDetectionBranches> seen{};
    for (const auto& e : j.at("branches")) {
      const int b = branch_index_from_name(e.at("name").get<std::string>());
      if (b == kTrackerBranch) throw ConfigError("capability: the tracker branch has no detection capability");
      const std::string where = "capability: branch " + e.at("name").get<std::string>();
      if (seen[b - 1]) throw ConfigError(where + " listed twice");
      seen[b - 1] = true;
      BranchCapability& c = p.of(b);
      read_array(e, "recall", c.recall, where);
      read_array(e, "sigma_pos_m", c.sigma_pos, where);
      read_array(e, "sigma_vel_mps", c.sigma_vel, where);
      read_array(e, "sigma_size_rel", c.sigma_size, where);
      c.fp_rate = e.at("fp_rate_per_view").get<double>();
      const auto& conf = e.at("confidence");
      c.tp_conf_mean = conf.at("tp_mean").get<double>();
      c.tp_conf_sd = conf.at("tp_sd").get<double>();
      c.tp_conf_distance_slope = conf.at("tp_distance_slope").get<double>();
      c.fp_conf_mean = conf.at("fp_mean").get<double>();
      c.fp_conf_sd = conf.at("fp_sd").get<double>();
    }
    for (int b = 1; b < kNumBranches; ++b) {
      if (!seen[b - 1]) throw ConfigError("capability: missing branch " + BranchConfig::from_index(b).name());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("capability: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const CapabilityProfile& p) {
  nlohmann::json branches = nlohmann::json::array();
  for (int b = 1; b < kNumBranches; ++b) {
    const BranchCapability& c = p.of(b);
    branches.push_back({{"index", b},
                        {"name", BranchConfig::from_index(b).name()},
                        {"synthetic", p.synthetic},
                        {"recall", array_json(c.recall)},
                        {"sigma_pos_m", array_json(c.sigma_pos)},
                        {"sigma_vel_mps", array_json(c.sigma_vel)},
                        {"sigma_size_rel", array_json(c.sigma_size)},
                        {"fp_rate_per_view", c.fp_rate},
                        {"confidence",
                         {{"tp_mean", c.tp_conf_mean},
                          {"tp_sd", c.tp_conf_sd},
                          {"tp_distance_slope", c.tp_conf_distance_slope},
                          {"fp_mean", c.fp_conf_mean},
                          {"fp_sd", c.fp_conf_sd}}}});
  }
  return {{"version", kCapabilityFormatVersion},
          {"synthetic", p.synthetic},
          {"category_order", "index = distance + 5 * velocity + 20 * size"},
          {"branches", branches}};
}

std::vector<Box3D> synth_detect(int branch_index, std::span<const Box3D> view_ground_truth,
                                const CameraRig::Sector& sector, double max_range,
                                const CapabilityProfile& capability, Rng& rng) {
  const BranchCapability& c = capability.of(branch_index);
  std::vector<Box3D> out;
  for (const Box3D& gt : view_ground_truth) {
    const CategoryLevel cat = categorize(gt);
    const int k = cat.index();
    const double keep = uniform01(rng);
    const double nx = clamped_normal(rng), ny = clamped_normal(rng);
    const double nvx = clamped_normal(rng), nvy = clamped_normal(rng);
    const double ns = clamped_normal(rng);
    const double nc = clamped_normal(rng);
    if (!(keep < c.recall[k])) continue;
    Box3D d = gt;
    d.id = -1;
    d.center.x() += c.sigma_pos[k] * nx;
    d.center.y() += c.sigma_pos[k] * ny;
    d.velocity.x() += c.sigma_vel[k] * nvx;
    d.velocity.y() += c.sigma_vel[k] * nvy;
    d.size = (gt.size * std::max(0.1, 1.0 + c.sigma_size[k] * ns)).cwiseMax(1e-3);
    d.confidence =
        std::clamp(c.tp_conf_mean - c.tp_conf_distance_slope * cat.distance + c.tp_conf_sd * nc, 0.01, 1.0);
    out.push_back(d);
  }

  const int n_fp = c.fp_rate > 0.0 ? std::poisson_distribution<int>(c.fp_rate)(rng) : 0;
  for (int i = 0; i < n_fp; ++i) {
    const double angle = sector.lo + sector.width * uniform01(rng);
    const double range = max_range * std::sqrt(uniform01(rng));
    const ObjectClass cls = kAllClasses[std::min<std::size_t>(kNumClasses - 1, uniform01(rng) * kNumClasses)];
    const double heading = 2.0 * kPi * uniform01(rng);
    const double speed = 5.0 * uniform01(rng);
    Box3D f;
    f.size = nominal_size(cls);
    f.center << range * std::cos(angle), range * std::sin(angle), 0.5 * f.size.y();
    f.velocity << speed * std::cos(heading), speed * std::sin(heading), 0.0;
    f.yaw = wrap_angle(heading);
    f.cls = cls;
    f.confidence = std::clamp(c.fp_conf_mean + c.fp_conf_sd * clamped_normal(rng), 0.01, 1.0);
    f.id = -1;
    out.push_back(f);
  }
  return out;
}

}  // namespace viewsched
