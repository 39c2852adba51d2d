#pragma once

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajectotree/geometry.hpp"
#include "trajectotree/kinematics.hpp"

namespace tt {

inline constexpr int kNumFingers = 4;
inline constexpr int kNumJoints = 8;   // 2 per finger
inline constexpr int kPoseDof = 3;
inline constexpr int kNumForce = 8;    // (normal, tangential) per finger

struct JointConfig {
  std::array<double, kNumJoints> angles{};

  double q1(int finger) const { return angles[2 * finger]; }
  double q2(int finger) const { return angles[2 * finger + 1]; }
  void set(int finger, double a1, double a2) {
    angles[2 * finger] = a1;
    angles[2 * finger + 1] = a2;
  }
};

// Workspace description: the rectangular object, gravity, friction, and the
// four two-link fingers. All SI units; gravity acts along -y.
struct SceneConfig {
  Vec2 object_half_extents{0.10, 0.05};
  double object_mass = 0.05;
  double gravity = 9.81;
  double friction_mu = 0.7;
  std::array<Vec2, kNumFingers> finger_bases{
      Vec2(-0.18, 0.13), Vec2(0.18, 0.13), Vec2(-0.18, -0.13), Vec2(0.18, -0.13)};
  std::array<Vec2, kNumFingers> link_lengths{
      Vec2(0.15, 0.10), Vec2(0.15, 0.10), Vec2(0.15, 0.10), Vec2(0.15, 0.10)};
  std::array<double, kNumJoints> joint_lower{-kPi, -kPi, -kPi, -kPi, -kPi, -kPi, -kPi, -kPi};
  std::array<double, kNumJoints> joint_upper{kPi, kPi, kPi, kPi, kPi, kPi, kPi, kPi};
  double fingertip_radius = 0.01;
  double corner_margin = 0.01;
  // Elbow branch per finger; 0 = derive from the base quadrant so elbows
  // point away from the object.
  std::array<int, kNumFingers> elbow_signs{0, 0, 0, 0};
  // Initial grasp, as arc-length coordinates (two contacts per long face).
  std::array<double, kNumFingers> initial_contacts{0.25, 0.15, 0.45, 0.55};

  Rect rect() const { return Rect{object_half_extents.x(), object_half_extents.y()}; }

  double object_inertia() const {
    const double w = 2.0 * object_half_extents.x(), h = 2.0 * object_half_extents.y();
    return object_mass * (w * w + h * h) / 12.0;
  }

  int elbow_sign(int finger) const {
    if (elbow_signs[finger] != 0) return elbow_signs[finger];
    const Vec2& b = finger_bases[finger];
    return b.x() * b.y() >= 0.0 ? 1 : -1;
  }

  // Tip-center target for touching a surface point (offset by the tip radius
  // along the outward normal).
  Vec2 contact_tip_local(const ContactPoint& c) const {
    return c.local_pos - fingertip_radius * c.normal;
  }
  Vec2 contact_tip_world(const ObjectPose& pose, const ContactPoint& c) const {
    return pose.to_world(contact_tip_local(c));
  }

  std::optional<IkSolution> ik(int finger, const Vec2& target_world) const {
    return inverse_kinematics(finger_bases[finger], link_lengths[finger].x(),
                              link_lengths[finger].y(), target_world, elbow_sign(finger),
                              joint_lower[2 * finger], joint_upper[2 * finger],
                              joint_lower[2 * finger + 1], joint_upper[2 * finger + 1]);
  }

  Vec2 fk(int finger, const JointConfig& q) const {
    return forward_kinematics(finger_bases[finger], link_lengths[finger].x(),
                              link_lengths[finger].y(), q.q1(finger), q.q2(finger));
  }

  std::array<ContactPoint, kNumFingers> initial_contact_points() const {
    std::array<ContactPoint, kNumFingers> out;
    for (int f = 0; f < kNumFingers; ++f) out[f] = surface_point(rect(), initial_contacts[f]);
    return out;
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("scene: ") + what);
    };
    require(object_half_extents.x() > 0.0 && object_half_extents.y() > 0.0,
            "half extents must be positive");
    require(object_mass > 0.0, "object mass must be positive");
    require(friction_mu > 0.0, "friction_mu must be positive");
    require(fingertip_radius >= 0.0, "fingertip radius must be nonnegative");
    require(corner_margin > 0.0, "corner margin must be positive");
    for (int f = 0; f < kNumFingers; ++f)
      require(link_lengths[f].x() > 0.0 && link_lengths[f].y() > 0.0,
              "link lengths must be positive");
    for (int j = 0; j < kNumJoints; ++j)
      require(joint_lower[j] < joint_upper[j], "joint limit interval is empty");
    for (int f = 0; f < kNumFingers; ++f)
      require(corner_safe(rect(), initial_contacts[f], corner_margin),
              "initial contact violates the corner margin");
  }

  static SceneConfig default_scene() { return SceneConfig{}; }

  void save(const std::string& path) const;
  static SceneConfig load(const std::string& path);
};

// --- plain-text key/value persistence ---------------------------------------
//
// One `key = value ...` entry per line, '#' starts a comment. Vector-valued
// keys take whitespace-separated numbers. Keys match the field names below.

inline void SceneConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file: " + path);
  out.precision(17);
  out << "# planar manipulation scene, SI units\n";
  out << "object_half_extents = " << object_half_extents.x() << " " << object_half_extents.y()
      << "\n";
  out << "object_mass = " << object_mass << "\n";
  out << "gravity = " << gravity << "\n";
  out << "friction_mu = " << friction_mu << "\n";
  for (int f = 0; f < kNumFingers; ++f)
    out << "finger_base_" << f << " = " << finger_bases[f].x() << " " << finger_bases[f].y()
        << "\n";
  for (int f = 0; f < kNumFingers; ++f)
    out << "link_lengths_" << f << " = " << link_lengths[f].x() << " " << link_lengths[f].y()
        << "\n";
  out << "joint_lower =";
  for (double v : joint_lower) out << " " << v;
  out << "\njoint_upper =";
  for (double v : joint_upper) out << " " << v;
  out << "\nfingertip_radius = " << fingertip_radius << "\n";
  out << "corner_margin = " << corner_margin << "\n";
  out << "elbow_signs =";
  for (int v : elbow_signs) out << " " << v;
  out << "\ninitial_contacts =";
  for (double v : initial_contacts) out << " " << v;
  out << "\n";
}

inline SceneConfig SceneConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path);
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream vals(line.substr(eq + 1));
    std::vector<double> v;
    double x;
    while (vals >> x) v.push_back(x);
    if (!key.empty()) kv[key] = v;
  }

  SceneConfig s;
  auto get = [&](const std::string& key, size_t n) -> const std::vector<double>* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    if (it->second.size() != n)
      throw std::runtime_error("scene key '" + key + "' expects " + std::to_string(n) +
                               " values");
    return &it->second;
  };
  if (auto* v = get("object_half_extents", 2)) s.object_half_extents = Vec2((*v)[0], (*v)[1]);
  if (auto* v = get("object_mass", 1)) s.object_mass = (*v)[0];
  if (auto* v = get("gravity", 1)) s.gravity = (*v)[0];
  if (auto* v = get("friction_mu", 1)) s.friction_mu = (*v)[0];
  for (int f = 0; f < kNumFingers; ++f) {
    if (auto* v = get("finger_base_" + std::to_string(f), 2))
      s.finger_bases[f] = Vec2((*v)[0], (*v)[1]);
    if (auto* v = get("link_lengths_" + std::to_string(f), 2))
      s.link_lengths[f] = Vec2((*v)[0], (*v)[1]);
  }
  if (auto* v = get("joint_lower", kNumJoints))
    for (int j = 0; j < kNumJoints; ++j) s.joint_lower[j] = (*v)[j];
  if (auto* v = get("joint_upper", kNumJoints))
    for (int j = 0; j < kNumJoints; ++j) s.joint_upper[j] = (*v)[j];
  if (auto* v = get("fingertip_radius", 1)) s.fingertip_radius = (*v)[0];
  if (auto* v = get("corner_margin", 1)) s.corner_margin = (*v)[0];
  if (auto* v = get("elbow_signs", kNumFingers))
    for (int f = 0; f < kNumFingers; ++f) s.elbow_signs[f] = static_cast<int>((*v)[f]);
  if (auto* v = get("initial_contacts", kNumFingers))
    for (int f = 0; f < kNumFingers; ++f) s.initial_contacts[f] = (*v)[f];
  s.validate();
  return s;
}

}  // namespace tt
