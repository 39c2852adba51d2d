#pragma once

#include <algorithm>
#include <chrono>
#include <set>
#include <string>

#include "trajectotree/grasp_analysis.hpp"

namespace tt {

struct SearchParams {
  int sequence_length = 10;           // N: nodes in the returned path
  std::vector<double> displacements;  // D_cp; must contain 0
  long max_expansions = 100000;
  // Expand only the lowest-indexed free finger instead of all of them
  // (alternative reading of the neighbor rule; off by default).
  bool single_free_finger = false;
  // Rank zero-displacement children ahead of contact switches at equal depth,
  // so fingers only reposition when holding on stops being feasible.
  bool prefer_hold = true;

  // 17 offsets: zero plus +-k * 2 cm for k = 1..8.
  static std::vector<double> default_displacements() {
    std::vector<double> d{0.0};
    for (int k = 1; k <= 8; ++k) {
      d.push_back(0.02 * k);
      d.push_back(-0.02 * k);
    }
    return d;
  }

  static SearchParams defaults() {
    SearchParams p;
    p.displacements = default_displacements();
    return p;
  }
};

struct PlanNode {
  int depth = 0;
  ObjectPose pose;
  std::array<ContactPoint, kNumFingers> contacts;
  JointConfig joints;  // valid only when ik_ok
  bool ik_ok = false;
  bool switched = false;  // contacts differ from the parent node
  double heuristic = 0.0;
  int parent = -1;
};

struct ContactSequence {
  std::vector<PlanNode> nodes;       // root to leaf; nodes[n].depth == n
  std::vector<int> switch_schedule;  // per segment: switching finger index, or -1
};

struct SearchStats {
  bool success = false;
  long expanded = 0;
  int max_depth_reached = 0;
  double seconds = 0.0;
  std::string failure;
};

struct PlanResult {
  std::optional<ContactSequence> sequence;
  SearchStats stats;
};

inline std::vector<ObjectPose> interpolate_object_trajectory(const ObjectPose& start,
                                                             const ObjectPose& goal, int n) {
  std::vector<ObjectPose> out(n);
  for (int i = 0; i < n; ++i) {
    const double a = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out[i] = {start.x + a * (goal.x - start.x), start.y + a * (goal.y - start.y),
              start.theta + a * (goal.theta - start.theta)};
  }
  return out;
}

// Deviation of each distal joint from its nominal 45 degree bend (absolute
// angle, so mirrored elbow branches share the same nominal posture).
inline double node_heuristic(const JointConfig& q) {
  double h = 0.0;
  for (int f = 0; f < kNumFingers; ++f) h += std::abs(std::abs(q.q2(f)) - kPi / 4.0);
  return h;
}

namespace detail {

inline bool segment_hits_box(const Vec2& p0, const Vec2& p1, double hx, double hy) {
  const Vec2 d = p1 - p0;
  double t0 = 0.0, t1 = 1.0;
  const double lim[2] = {hx, hy};
  for (int ax = 0; ax < 2; ++ax) {
    const double p = p0[ax], dd = d[ax], h = lim[ax];
    if (std::abs(dd) < 1e-15) {
      if (p < -h || p > h) return false;
    } else {
      double ta = (-h - p) / dd, tb = (h - p) / dd;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
  }
  return true;
}

}  // namespace detail

// True when any finger link segment crosses the object rectangle. The box is
// shrunk by a hair so fingertips resting on the surface do not count.
inline bool links_collide_object(const SceneConfig& scene, const ObjectPose& pose,
                                 const JointConfig& q) {
  const Rect r = scene.rect();
  const double hx = r.hx - 1e-9, hy = r.hy - 1e-9;
  for (int f = 0; f < kNumFingers; ++f) {
    const auto e = fk_elbow(scene.finger_bases[f], scene.link_lengths[f].x(), q.q1(f));
    const Vec2 elbow(e.x, e.y);
    const Vec2 tip = scene.fk(f, q);
    const Vec2 b = pose.to_local(scene.finger_bases[f]);
    const Vec2 el = pose.to_local(elbow);
    const Vec2 tp = pose.to_local(tip);
    if (detail::segment_hits_box(b, el, hx, hy) || detail::segment_hits_box(el, tp, hx, hy))
      return true;
  }
  return false;
}

// IK for all four fingers against their assigned contact points.
inline std::optional<JointConfig> contacts_ik(const SceneConfig& scene, const ObjectPose& pose,
                                              const std::array<ContactPoint, kNumFingers>& cps) {
  JointConfig q;
  for (int f = 0; f < kNumFingers; ++f) {
    const auto sol = scene.ik(f, scene.contact_tip_world(pose, cps[f]));
    if (!sol) return std::nullopt;
    q.set(f, sol->q1, sol->q2);
  }
  return q;
}

// Node validity: form closure, reachable contacts, and no link/object overlap.
inline bool is_feasible(const SceneConfig& scene, const PlanNode& z) {
  if (!z.ik_ok) return false;
  if (links_collide_object(scene, z.pose, z.joints)) return false;
  return form_closure(scene, z.pose, z.contacts, scene.friction_mu).is_closed;
}

// Open set ordered deepest-first, then lowest heuristic, then insertion
// order. With prefer_hold, nodes that kept their parent's contacts rank ahead
// of contact switches at the same depth.
class OpenSet {
 public:
  explicit OpenSet(bool prefer_hold = false) : prefer_hold_(prefer_hold) {}

  struct Entry {
    int depth;
    int switched;
    double heuristic;
    long seq;
    int node;
    bool prefer_hold;
    bool operator<(const Entry& o) const {
      if (depth != o.depth) return depth > o.depth;
      if (prefer_hold && switched != o.switched) return switched < o.switched;
      if (heuristic != o.heuristic) return heuristic < o.heuristic;
      return seq < o.seq;
    }
  };

  void insert(int node, int depth, double heuristic, bool switched = false) {
    entries_.insert(Entry{depth, switched ? 1 : 0, heuristic, next_seq_++, node, prefer_hold_});
  }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  int pop_best() {
    auto it = entries_.begin();
    const int node = it->node;
    entries_.erase(it);
    return node;
  }

 private:
  std::set<Entry> entries_;
  long next_seq_ = 0;
  bool prefer_hold_ = false;
};

namespace detail {

inline std::array<long, 5> node_key(int depth, const std::array<ContactPoint, kNumFingers>& c) {
  std::array<long, 5> k;
  k[0] = depth;
  for (int f = 0; f < kNumFingers; ++f) k[f + 1] = std::lround(c[f].s / 1e-6);
  return k;
}

}  // namespace detail

// Children of a feasible node: every free finger displaced by every entry of
// D_cp at the next trajectory pose (corner-margin violations dropped), the
// other contacts unchanged. Sorted by heuristic, then by displacement
// magnitude; parent links are left for the caller.
inline std::vector<PlanNode> get_neighbors(const SceneConfig& scene, const PlanNode& z,
                                           const ObjectPose& next_pose,
                                           const SearchParams& params) {
  auto free = free_fingers(scene, z.pose, z.contacts, scene.friction_mu);
  if (params.single_free_finger && free.size() > 1) free.resize(1);
  struct Child {
    PlanNode node;
    double abs_d;
  };
  std::vector<Child> children;
  for (int f : free) {
    for (double d : params.displacements) {
      const auto moved = displace_contact(scene.rect(), z.contacts[f], d, scene.corner_margin);
      if (!moved) continue;
      PlanNode c;
      c.depth = z.depth + 1;
      c.pose = next_pose;
      c.contacts = z.contacts;
      c.contacts[f] = *moved;
      c.switched = std::abs(d) > 1e-12;
      if (auto q = contacts_ik(scene, next_pose, c.contacts)) {
        c.joints = *q;
        c.ik_ok = true;
        c.heuristic = node_heuristic(c.joints);
      } else {
        c.heuristic = 1e9;
      }
      children.push_back({std::move(c), std::abs(d)});
    }
  }
  const bool hold_first = params.prefer_hold;
  std::stable_sort(children.begin(), children.end(), [hold_first](const Child& a, const Child& b) {
    if (hold_first && a.node.switched != b.node.switched) return !a.node.switched;
    if (a.node.heuristic != b.node.heuristic) return a.node.heuristic < b.node.heuristic;
    return a.abs_d < b.abs_d;
  });
  std::vector<PlanNode> out;
  out.reserve(children.size());
  for (auto& c : children) out.push_back(std::move(c.node));
  return out;
}

// Depth-first heuristic tree search over single-finger contact switches; the
// input trajectory provides the pose of every depth level.
inline PlanResult plan_contact_sequence(const SceneConfig& scene,
                                        const std::vector<ObjectPose>& trajectory,
                                        const std::array<ContactPoint, kNumFingers>& initial,
                                        const SearchParams& params) {
  const auto t_start = std::chrono::steady_clock::now();
  PlanResult result;
  auto finish = [&](bool ok, const std::string& why) {
    result.stats.success = ok;
    result.stats.failure = why;
    result.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
  };

  const int n = params.sequence_length;
  if (static_cast<int>(trajectory.size()) != n || n < 2)
    return finish(false, "trajectory length must equal sequence_length >= 2");
  bool has_zero = false;
  for (double d : params.displacements) has_zero = has_zero || d == 0.0;
  if (!has_zero) return finish(false, "displacement set must contain 0");

  std::vector<PlanNode> arena;
  OpenSet open(params.prefer_hold);
  std::set<std::array<long, 5>> seen;
  {
    PlanNode root;
    root.depth = 0;
    root.pose = trajectory[0];
    root.contacts = initial;
    if (auto q = contacts_ik(scene, root.pose, initial)) {
      root.joints = *q;
      root.ik_ok = true;
      root.heuristic = node_heuristic(root.joints);
    }
    if (!is_feasible(scene, root))
      return finish(false, root.ik_ok ? "initial grasp infeasible (closure or collision)"
                                      : "initial grasp unreachable (IK)");
    arena.push_back(std::move(root));
  }
  seen.insert(detail::node_key(0, initial));
  open.insert(0, 0, arena[0].heuristic);

  while (!open.empty()) {
    if (result.stats.expanded >= params.max_expansions)
      return finish(false, "expansion budget exhausted");
    const int zi = open.pop_best();
    ++result.stats.expanded;
    const PlanNode z = arena[zi];  // copy: arena may grow below
    if (!is_feasible(scene, z)) continue;
    result.stats.max_depth_reached = std::max(result.stats.max_depth_reached, z.depth);

    if (z.depth == n - 1) {
      ContactSequence seq;
      for (int i = zi; i >= 0; i = arena[i].parent) seq.nodes.push_back(arena[i]);
      std::reverse(seq.nodes.begin(), seq.nodes.end());
      seq.switch_schedule.assign(n - 1, -1);
      for (int s = 0; s + 1 < n; ++s) {
        for (int f = 0; f < kNumFingers; ++f) {
          const double ds = std::abs(seq.nodes[s].contacts[f].s - seq.nodes[s + 1].contacts[f].s);
          if (ds > 1e-9) seq.switch_schedule[s] = f;
        }
      }
      result.sequence = std::move(seq);
      return finish(true, "");
    }

    for (auto& child : get_neighbors(scene, z, trajectory[z.depth + 1], params)) {
      const auto key = detail::node_key(child.depth, child.contacts);
      if (!seen.insert(key).second) continue;
      child.parent = zi;
      arena.push_back(std::move(child));
      open.insert(static_cast<int>(arena.size()) - 1, arena.back().depth,
                  arena.back().heuristic, arena.back().switched);
    }
  }
  return finish(false, "open set exhausted");
}

// --- sequence file format ----------------------------------------------------
//
// Line-oriented text: '#' comments, then one node per line with
//   depth x y theta s0 s1 s2 s3 q0 ... q7

inline void write_sequence(const ContactSequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sequence file: " + path);
  out << "# contact sequence\n# depth x y theta s0 s1 s2 s3 q0 q1 q2 q3 q4 q5 q6 q7\n";
  out.precision(17);
  for (const auto& z : seq.nodes) {
    out << z.depth << " " << z.pose.x << " " << z.pose.y << " " << z.pose.theta;
    for (int f = 0; f < kNumFingers; ++f) out << " " << z.contacts[f].s;
    for (double a : z.joints.angles) out << " " << a;
    out << "\n";
  }
}

inline ContactSequence read_sequence(const SceneConfig& scene, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sequence file: " + path);
  ContactSequence seq;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    PlanNode z;
    row >> z.depth >> z.pose.x >> z.pose.y >> z.pose.theta;
    for (int f = 0; f < kNumFingers; ++f) {
      double s;
      row >> s;
      z.contacts[f] = surface_point(scene.rect(), s);
    }
    for (double& a : z.joints.angles) row >> a;
    if (!row) throw std::runtime_error("malformed sequence line: " + line);
    z.ik_ok = true;
    z.heuristic = node_heuristic(z.joints);
    z.parent = static_cast<int>(seq.nodes.size()) - 1;
    seq.nodes.push_back(z);
  }
  const int n = static_cast<int>(seq.nodes.size());
  if (n < 2) throw std::runtime_error("sequence file has fewer than two nodes");
  seq.switch_schedule.assign(n - 1, -1);
  for (int s = 0; s + 1 < n; ++s)
    for (int f = 0; f < kNumFingers; ++f)
      if (std::abs(seq.nodes[s].contacts[f].s - seq.nodes[s + 1].contacts[f].s) > 1e-9)
        seq.switch_schedule[s] = f;
  return seq;
}

}  // namespace tt
