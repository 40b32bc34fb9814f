#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "viewsched/errors.hpp"
#include "viewsched/simulator.hpp"

namespace viewsched {

namespace {

constexpr int kScenarioFormatVersion = 1;
// Edge spawns sit just inside the world radius so they are reported at once.
constexpr double kEdgeInset = 0.98;

struct SimObject {
  std::int64_t id = 0;
  ObjectClass cls = ObjectClass::Car;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double speed = 0.0;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  bool is_static = false;

  Box3D global_box() const {
    Box3D b;
    b.center << position, 0.5 * size.y();
    b.size = size;
    b.velocity << speed * std::cos(heading), speed * std::sin(heading), 0.0;
    b.yaw = wrap_angle(heading);
    b.cls = cls;
    b.confidence = 1.0;
    b.id = id;
    return b;
  }
};

class ObjectSpawner {
 public:
  ObjectSpawner(const ScenarioConfig& c, Rng& rng) : c_(c), rng_(rng) {
    std::vector<double> w;
    for (const ClassSpec& s : c.classes) w.push_back(s.weight);
    class_dist_ = std::discrete_distribution<int>(w.begin(), w.end());
  }

  SimObject spawn(const EgoPose& ego, bool at_edge) {
    SimObject o;
    o.id = next_id_++;
    o.cls = kAllClasses[class_dist_(rng_)];
    const ClassSpec& spec = c_.classes[static_cast<int>(o.cls)];
    o.is_static = uniform01(rng_) < spec.static_fraction;
    const double speed_u = uniform01(rng_);
    o.speed = o.is_static ? 0.0 : spec.speed_min + speed_u * (spec.speed_max - spec.speed_min);
    o.size = nominal_size(o.cls) * (0.9 + 0.2 * uniform01(rng_));

    const bool on_road = uniform01(rng_) < c_.road_fraction;
    const double u1 = uniform01(rng_);
    const double u2 = uniform01(rng_);
    const double u3 = uniform01(rng_);
    const double r_world = c_.world_radius;
    if (on_road) {
      const double lateral = (2.0 * u1 - 1.0) * c_.road_half_width;
      double along;
      if (at_edge) {
        const double sign = u2 < 0.5 ? -1.0 : 1.0;
        const double reach = std::sqrt(std::max(0.0, r_world * r_world * kEdgeInset * kEdgeInset -
                                                         (lateral - ego.y) * (lateral - ego.y)));
        along = ego.x + sign * reach;
        o.heading = sign > 0.0 ? kPi : 0.0;  // drive towards the ego
      } else {
        along = ego.x + (2.0 * u2 - 1.0) * r_world * 0.95;
        o.heading = u3 < 0.5 ? 0.0 : kPi;
      }
      o.position = {along, lateral};
    } else {
      const double phi = 2.0 * kPi * u1;
      const double r = at_edge ? kEdgeInset * r_world : r_world * std::sqrt(u2);
      o.position = Eigen::Vector2d(ego.x, ego.y) + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      o.heading = at_edge ? phi + kPi + (u3 - 0.5) * (2.0 * kPi / 3.0) : 2.0 * kPi * u3 - kPi;
    }
    return o;
  }

 private:
  const ScenarioConfig& c_;
  Rng& rng_;
  std::discrete_distribution<int> class_dist_;
  std::int64_t next_id_ = 0;
};

EgoPath::Kind path_kind(const std::string& s) {
  if (s == "straight") return EgoPath::Kind::Straight;
  if (s == "circular") return EgoPath::Kind::Circular;
  if (s == "waypoints") return EgoPath::Kind::Waypoints;
  throw ConfigError("scenario: unknown ego path '" + s + "'");
}

std::string path_name(EgoPath::Kind k) {
  switch (k) {
    case EgoPath::Kind::Straight: return "straight";
    case EgoPath::Kind::Circular: return "circular";
    case EgoPath::Kind::Waypoints: return "waypoints";
  }
  return "straight";
}

}  // namespace

Eigen::Vector3d nominal_size(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::Car: return {1.9, 1.6, 4.6};
    case ObjectClass::Truck: return {2.5, 3.0, 8.0};
    case ObjectClass::Bus: return {2.9, 3.4, 11.0};
    case ObjectClass::Pedestrian: return {0.65, 1.75, 0.7};
    case ObjectClass::Motorcycle: return {0.8, 1.4, 2.1};
    case ObjectClass::Bicycle: return {0.6, 1.3, 1.7};
  }
  return {1.0, 1.0, 1.0};
}

EgoPose EgoPath::at(double t) const {
  EgoPose p;
  p.timestamp = t;
  switch (kind) {
    case Kind::Straight:
      p.x = speed * t;
      break;
    case Kind::Circular: {
      const double theta = radius > 0.0 ? speed * t / radius : 0.0;
      p.x = radius * std::sin(theta);
      p.y = radius - radius * std::cos(theta);
      p.yaw = wrap_angle(theta);
      break;
    }
    case Kind::Waypoints: {
      if (waypoints.empty()) break;
      double remaining = speed * t;
      p.x = waypoints.front().x();
      p.y = waypoints.front().y();
      for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
        const Eigen::Vector2d seg = waypoints[i + 1] - waypoints[i];
        const double len = seg.norm();
        if (len <= 0.0) continue;
        p.yaw = std::atan2(seg.y(), seg.x());
        const double s = std::min(remaining, len);
        p.x = waypoints[i].x() + seg.x() * s / len;
        p.y = waypoints[i].y() + seg.y() * s / len;
        remaining -= s;
        if (remaining <= 0.0) break;
      }
      break;
    }
  }
  return p;
}

int ScenarioConfig::frame_count() const { return std::max(1, static_cast<int>(std::lround(duration_s * fps))); }

void ScenarioConfig::validate() const {
  if (!(fps > 0.0)) throw ConfigError("scenario: fps must be positive");
  if (!(duration_s > 0.0)) throw ConfigError("scenario: duration_s must be positive");
  if (!(world_radius > 0.0)) throw ConfigError("scenario: world_radius_m must be positive");
  if (!(despawn_radius >= world_radius)) throw ConfigError("scenario: despawn_radius_m must be >= world_radius_m");
  if (spawn_rate < 0.0 || initial_objects < 0) throw ConfigError("scenario: spawn counts must be non-negative");
  if (road_fraction < 0.0 || road_fraction > 1.0) throw ConfigError("scenario: road fraction must lie in [0, 1]");
  if (heading_sigma < 0.0 || speed_sigma < 0.0) throw ConfigError("scenario: perturbation sigmas must be >= 0");
  double total = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ClassSpec& s = classes[c];
    const std::string name(to_string(kAllClasses[c]));
    if (s.weight < 0.0) throw ConfigError("scenario: class '" + name + "' has a negative weight");
    if (s.speed_min < 0.0 || s.speed_max < s.speed_min) {
      throw ConfigError("scenario: class '" + name + "' has an invalid speed range");
    }
    if (s.static_fraction < 0.0 || s.static_fraction > 1.0) {
      throw ConfigError("scenario: class '" + name + "' static_fraction must lie in [0, 1]");
    }
    total += s.weight;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("scenario: class weights must sum to 1");
  if (ego.speed < 0.0) throw ConfigError("scenario: ego speed must be non-negative");
  if (ego.kind == EgoPath::Kind::Circular && !(ego.radius > 0.0)) {
    throw ConfigError("scenario: circular ego path needs a positive radius");
  }
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    const int version = j.at("version").get<int>();
    if (version != kScenarioFormatVersion) throw ConfigError("scenario: unsupported version " + std::to_string(version));
    c.seed = j.value("seed", std::uint64_t{0});
    c.duration_s = j.at("duration_s").get<double>();
    c.fps = j.value("fps", 10.0);
    c.world_radius = j.value("world_radius_m", 60.0);
    c.despawn_radius = j.value("despawn_radius_m", c.world_radius + 10.0);
    c.spawn_rate = j.value("spawn_rate_per_s", 1.0);
    c.initial_objects = j.value("initial_objects", 20);
    if (j.contains("road")) {
      c.road_fraction = j["road"].value("fraction", 0.0);
      c.road_half_width = j["road"].value("half_width_m", 6.0);
    }
    if (j.contains("perturbation")) {
      c.heading_sigma = j["perturbation"].value("heading_sigma_rad", c.heading_sigma);
      c.speed_sigma = j["perturbation"].value("speed_sigma_mps", c.speed_sigma);
    }
    const auto& classes = j.at("classes");
    for (auto it = classes.begin(); it != classes.end(); ++it) {
      const ObjectClass cls = class_from_string(it.key());
      ClassSpec& s = c.classes[static_cast<int>(cls)];
      s.weight = it->at("weight").get<double>();
      const auto speed = it->at("speed_mps").get<std::vector<double>>();
      if (speed.size() != 2) throw ConfigError("scenario: class '" + it.key() + "' speed_mps needs [min, max]");
      s.speed_min = speed[0];
      s.speed_max = speed[1];
      s.static_fraction = it->value("static_fraction", 0.0);
    }
    const auto& ego = j.at("ego");
    c.ego.kind = path_kind(ego.value("path", std::string("straight")));
    c.ego.speed = ego.value("speed_mps", 0.0);
    c.ego.radius = ego.value("radius_m", 0.0);
    if (ego.contains("waypoints")) {
      for (const auto& w : ego["waypoints"]) c.ego.waypoints.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const ClassSpec& s = c.classes[k];
    classes[std::string(to_string(kAllClasses[k]))] = {
        {"weight", s.weight}, {"speed_mps", {s.speed_min, s.speed_max}}, {"static_fraction", s.static_fraction}};
  }
  nlohmann::json ego = {{"path", path_name(c.ego.kind)}, {"speed_mps", c.ego.speed}};
  if (c.ego.kind == EgoPath::Kind::Circular) ego["radius_m"] = c.ego.radius;
  if (c.ego.kind == EgoPath::Kind::Waypoints) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& p : c.ego.waypoints) w.push_back({p.x(), p.y()});
    ego["waypoints"] = w;
  }
  return {{"version", kScenarioFormatVersion},
          {"synthetic", true},
          {"seed", c.seed},
          {"duration_s", c.duration_s},
          {"fps", c.fps},
          {"world_radius_m", c.world_radius},
          {"despawn_radius_m", c.despawn_radius},
          {"spawn_rate_per_s", c.spawn_rate},
          {"initial_objects", c.initial_objects},
          {"road", {{"fraction", c.road_fraction}, {"half_width_m", c.road_half_width}}},
          {"perturbation", {{"heading_sigma_rad", c.heading_sigma}, {"speed_sigma_mps", c.speed_sigma}}},
          {"classes", classes},
          {"ego", ego}};
}

std::vector<GroundTruthFrame> generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Rng rng = make_stream(config.seed, StreamKind::Scenario);
  ObjectSpawner spawner(config, rng);
  std::vector<SimObject> objects;
  std::vector<GroundTruthFrame> frames;
  const double dt = config.dt();
  const int count = config.frame_count();
  frames.reserve(count);

  for (int f = 0; f < count; ++f) {
    const double t = f * dt;
    const EgoPose ego = config.ego.at(t);
    if (f == 0) {
      for (int i = 0; i < config.initial_objects; ++i) objects.push_back(spawner.spawn(ego, false));
    } else {
      for (SimObject& o : objects) {
        if (o.is_static) continue;
        const ClassSpec& spec = config.classes[static_cast<int>(o.cls)];
        o.heading = wrap_angle(o.heading + config.heading_sigma * clamped_normal(rng));
        o.speed = std::clamp(o.speed + config.speed_sigma * clamped_normal(rng), spec.speed_min, spec.speed_max);
        o.position += o.speed * dt * Eigen::Vector2d(std::cos(o.heading), std::sin(o.heading));
      }
      std::poisson_distribution<int> arrivals(config.spawn_rate * dt);
      const int n_new = config.spawn_rate > 0.0 ? arrivals(rng) : 0;
      for (int i = 0; i < n_new; ++i) objects.push_back(spawner.spawn(ego, true));
    }
    const Eigen::Vector2d ego_xy(ego.x, ego.y);
    std::erase_if(objects, [&](const SimObject& o) { return (o.position - ego_xy).norm() > config.despawn_radius; });

    GroundTruthFrame frame;
    frame.index = f;
    frame.timestamp = t;
    frame.ego = ego;
    for (const SimObject& o : objects) {
      if ((o.position - ego_xy).norm() > config.world_radius) continue;
      frame.boxes.push_back(to_ego(o.global_box(), ego));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace viewsched
