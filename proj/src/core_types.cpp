#include "viewsched/core_types.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "viewsched/errors.hpp"

namespace viewsched {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
// Angles this close to a sector edge are treated as lying on it.
constexpr double kEdgeEps = 1e-12;

template <std::size_t N>
int level_of(double value, const std::array<double, N>& edges) {
  int level = 0;
  for (std::size_t i = 1; i < N; ++i) {
    if (value >= edges[i]) level = static_cast<int>(i);
  }
  return level;
}

double normalize_positive(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

}  // namespace

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::Car: return "car";
    case ObjectClass::Truck: return "truck";
    case ObjectClass::Bus: return "bus";
    case ObjectClass::Pedestrian: return "pedestrian";
    case ObjectClass::Motorcycle: return "motorcycle";
    case ObjectClass::Bicycle: return "bicycle";
  }
  return "unknown";
}

ObjectClass class_from_string(std::string_view name) {
  for (ObjectClass c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown object class '" + std::string(name) + "'");
}

bool Box3D::valid() const {
  return size.x() > 0.0 && size.y() > 0.0 && size.z() > 0.0 && confidence >= 0.0 &&
         confidence <= 1.0 && center.allFinite() && velocity.allFinite();
}

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - kPi;
}

CameraRig CameraRig::uniform(int view_count) {
  if (view_count <= 0) throw ConfigError("camera rig needs at least one view");
  const double width = kTwoPi / view_count;
  std::vector<Sector> sectors;
  sectors.reserve(view_count);
  for (int j = 0; j < view_count; ++j) {
    sectors.push_back({wrap_angle(-0.5 * width + j * width), width});
  }
  return CameraRig(std::move(sectors));
}

CameraRig::CameraRig(std::vector<Sector> sectors) : sectors_(std::move(sectors)) {
  if (sectors_.empty()) throw ConfigError("camera rig needs at least one view");
  double total = 0.0;
  for (std::size_t j = 0; j < sectors_.size(); ++j) {
    if (!(sectors_[j].width > 0.0)) throw ConfigError("camera sector width must be positive");
    total += sectors_[j].width;
    const Sector& next = sectors_[(j + 1) % sectors_.size()];
    const double gap = normalize_positive(next.lo - (sectors_[j].lo + sectors_[j].width));
    if (std::min(gap, kTwoPi - gap) > 1e-9) {
      throw ConfigError("camera sectors " + std::to_string(j) + " and " +
                        std::to_string((j + 1) % sectors_.size()) + " are not contiguous");
    }
  }
  if (std::abs(total - kTwoPi) > 1e-9) throw ConfigError("camera sectors do not cover 360 degrees");
}

int CameraRig::view_of_yaw(double yaw) const {
  for (std::size_t j = 0; j < sectors_.size(); ++j) {
    double d = normalize_positive(yaw - sectors_[j].lo);
    if (d >= kTwoPi - kEdgeEps) d = 0.0;
    if (d < sectors_[j].width - kEdgeEps) return static_cast<int>(j);
  }
  return static_cast<int>(sectors_.size()) - 1;  // unreachable for a valid partition
}

int CameraRig::view_of(const Eigen::Vector3d& point) const {
  return view_of_yaw(std::atan2(point.y(), point.x()));
}

CategoryLevel CategoryLevel::from_index(int index) {
  return {index % kDistanceLevels, (index / kDistanceLevels) % kVelocityLevels,
          index / (kDistanceLevels * kVelocityLevels)};
}

std::string CategoryLevel::label() const {
  return "D" + std::to_string(distance) + "V" + std::to_string(velocity) + "S" + std::to_string(size);
}

CategoryLevel categorize(const Box3D& box) {
  return {level_of(box.planar_distance(), kDistanceEdges), level_of(box.planar_speed(), kVelocityEdges),
          level_of(box.volume(), kSizeEdges)};
}

std::vector<DistributionVector> distribution(std::span<const Box3D> boxes, const CameraRig& rig) {
  std::vector<DistributionVector> out(rig.view_count());
  std::vector<int> totals(rig.view_count(), 0);
  for (auto& v : out) v.fill(0.0);
  for (const Box3D& b : boxes) {
    const int view = rig.view_of(b.center);
    out[view][categorize(b).index()] += 1.0;
    ++totals[view];
  }
  for (int j = 0; j < rig.view_count(); ++j) {
    if (totals[j] == 0) continue;
    for (double& x : out[j]) x /= totals[j];
  }
  return out;
}

Box3D ego_transform(const Box3D& box, const EgoPose& from, const EgoPose& to) {
  const Eigen::Rotation2Dd from_rot(from.yaw);
  const Eigen::Rotation2Dd to_inv(-to.yaw);
  const Eigen::Vector2d global = from_rot * box.center.head<2>() + Eigen::Vector2d(from.x, from.y);
  const Eigen::Vector2d local = to_inv * (global - Eigen::Vector2d(to.x, to.y));
  const Eigen::Rotation2Dd delta(from.yaw - to.yaw);

  Box3D out = box;
  out.center.head<2>() = local;
  out.velocity.head<2>() = delta * box.velocity.head<2>();
  out.yaw = wrap_angle(box.yaw + from.yaw - to.yaw);
  return out;
}

}  // namespace viewsched
