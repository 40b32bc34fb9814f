#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace viewsched {

inline constexpr double kPi = 3.14159265358979323846;

enum class ObjectClass : std::uint8_t { Car, Truck, Bus, Pedestrian, Motorcycle, Bicycle };
inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::array<ObjectClass, kNumClasses> kAllClasses = {
    ObjectClass::Car,        ObjectClass::Truck,      ObjectClass::Bus,
    ObjectClass::Pedestrian, ObjectClass::Motorcycle, ObjectClass::Bicycle};

std::string_view to_string(ObjectClass c);
// Throws ConfigError on an unknown name.
ObjectClass class_from_string(std::string_view name);

// 3D object hypothesis. Frame (ego or global) is implied by the container.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // (w, h, l), all > 0
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double yaw = 0.0;  // (-pi, pi]
  ObjectClass cls = ObjectClass::Car;
  double confidence = 1.0;
  // Ground-truth object id or track id; -1 for raw detections.
  std::int64_t id = -1;

  double volume() const { return size.prod(); }
  double planar_distance() const { return center.head<2>().norm(); }
  double planar_speed() const { return velocity.head<2>().norm(); }
  bool valid() const;
};

struct EgoPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double timestamp = 0.0;
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// Camera views as half-open yaw sectors [lo, lo + width) in the ego frame.
// Sectors must tile the full circle without gaps or overlap.
class CameraRig {
 public:
  struct Sector {
    double lo = 0.0;
    double width = 0.0;
  };

  // N equal sectors, view 0 centered on +x, numbered counter-clockwise.
  static CameraRig uniform(int view_count = 6);
  // Throws ConfigError unless the sectors partition the circle.
  explicit CameraRig(std::vector<Sector> sectors);

  int view_count() const { return static_cast<int>(sectors_.size()); }
  const std::vector<Sector>& sectors() const { return sectors_; }
  int view_of_yaw(double yaw) const;
  // Index of the sector containing atan2(y, x) of the point.
  int view_of(const Eigen::Vector3d& point) const;

 private:
  std::vector<Sector> sectors_;
};

inline constexpr int kDistanceLevels = 5;
inline constexpr int kVelocityLevels = 4;
inline constexpr int kSizeLevels = 4;
inline constexpr int kNumCategories = kDistanceLevels * kVelocityLevels * kSizeLevels;

// Lower edges of each level; ranges are half-open and the top level is unbounded.
inline constexpr std::array<double, kDistanceLevels> kDistanceEdges = {0.0, 10.0, 20.0, 30.0, 40.0};
inline constexpr std::array<double, kVelocityLevels> kVelocityEdges = {0.0, 0.2, 1.0, 5.0};
inline constexpr std::array<double, kSizeLevels> kSizeEdges = {0.0, 1.0, 5.0, 15.0};

struct CategoryLevel {
  int distance = 0;
  int velocity = 0;
  int size = 0;

  // Distance varies fastest: d + 5 v + 20 s.
  int index() const { return distance + kDistanceLevels * velocity +
                             kDistanceLevels * kVelocityLevels * size; }
  static CategoryLevel from_index(int index);
  std::string label() const;  // "D1V0S2"
  friend bool operator==(const CategoryLevel&, const CategoryLevel&) = default;
};

CategoryLevel categorize(const Box3D& box);

using DistributionVector = std::array<double, kNumCategories>;

// Per-view category ratios of the given (ego-frame) boxes. Empty views get
// the all-zero vector.
std::vector<DistributionVector> distribution(std::span<const Box3D> boxes, const CameraRig& rig);

// Re-expresses a box given in the ego frame of `from` in the ego frame of `to`.
// Velocity is ground velocity and is only rotated.
Box3D ego_transform(const Box3D& box, const EgoPose& from, const EgoPose& to);

inline Box3D to_global(const Box3D& box, const EgoPose& pose) {
  return ego_transform(box, pose, EgoPose{});
}
inline Box3D to_ego(const Box3D& box, const EgoPose& pose) {
  return ego_transform(box, EgoPose{}, pose);
}

}  // namespace viewsched
