#pragma once

#include "hcg/geometry.hpp"
#include "hcg/scene.hpp"
#include "hcg/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

namespace hcg {

inline constexpr int kPlanLength = 30;      // fixed waypoint count per plan
inline constexpr int kMaxGraspGoals = 16;   // evenly spaced approach angles
inline constexpr double kApproachStandoff = 0.10;  // docking leg length

struct GraspGoal {
  Pose pose;
  double approach_angle = 0.0;
};

// Canonical grasp pose for an approach angle: the gripper stands off the
// target center along -u(angle) and points at it, so the grasp reference
// point lands exactly on the center.
inline Pose grasp_goal_pose(const Disk& target, double approach_angle) {
  const Vec2 u(std::cos(approach_angle), std::sin(approach_angle));
  const Vec2 pos = target.center - kGraspStandoff * u;
  return planar_pose(pos.x(), pos.y(), approach_angle);
}

// Candidate goals at 16 evenly spaced approach angles, filtered by the grasp
// predicate and a static whole-body collision check. Deterministic.
inline std::vector<GraspGoal> sample_grasp_goals(const Scene& scene) {
  std::vector<GraspGoal> goals;
  for (int k = 0; k < kMaxGraspGoals; ++k) {
    const double angle = 2.0 * M_PI * k / kMaxGraspGoals;
    const Pose pose = grasp_goal_pose(scene.target, angle);
    if (!check_grasp_success(scene, GripperState{pose})) continue;
    if (body_collides(scene, pose)) continue;
    goals.push_back({pose, angle});
  }
  return goals;
}

// Visibility graph over disks inflated by the gripper bounding radius.
// Disks are approximated by circumscribed regular polygons so that polygon
// edges never cut into the inflated region. Built once per scene; start and
// goal nodes are connected per query.
class VisibilityGraph {
 public:
  VisibilityGraph(const Scene& scene, double inflation) {
    // Planning is confined to the workspace plus a small margin, so a wall of
    // obstacles spanning the workspace genuinely separates it.
    bounds_min_ = scene.workspace.min - Vec2(0.05, 0.05);
    bounds_max_ = scene.workspace.max + Vec2(0.05, 0.05);
    disks_.push_back({scene.target.center, scene.target.radius + inflation});
    for (const Disk& o : scene.obstacles) {
      disks_.push_back({o.center, o.radius + inflation});
    }
    constexpr int kVerts = 24;
    const double circum = 1.0 / std::cos(M_PI / kVerts);
    for (const Disk& d : disks_) {
      for (int k = 0; k < kVerts; ++k) {
        const double a = 2.0 * M_PI * (k + 0.5) / kVerts;
        const Vec2 v = d.center + d.radius * circum * Vec2(std::cos(a), std::sin(a));
        if (in_bounds(v) && !inside_any(v)) nodes_.push_back(v);
      }
    }
    edges_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes_.size(); ++j) {
        if (segment_clear(nodes_[i], nodes_[j])) {
          const double w = (nodes_[i] - nodes_[j]).norm();
          edges_[i].push_back({j, w});
          edges_[j].push_back({i, w});
        }
      }
    }
  }

  bool in_bounds(const Vec2& p) const {
    return p.x() >= bounds_min_.x() && p.x() <= bounds_max_.x() &&
           p.y() >= bounds_min_.y() && p.y() <= bounds_max_.y();
  }

  bool inside_any(const Vec2& p) const {
    for (const Disk& d : disks_) {
      if (point_in_disk(p, d)) return true;
    }
    return false;
  }

  bool segment_clear(const Vec2& a, const Vec2& b) const {
    for (const Disk& d : disks_) {
      if (segment_crosses_disk(a, b, d)) return false;
    }
    return true;
  }

  // Shortest polyline from start to goal, or empty when disconnected.
  std::vector<Vec2> shortest_path(const Vec2& start, const Vec2& goal) const {
    if (!in_bounds(start) || !in_bounds(goal)) return {};
    if (inside_any(start) || inside_any(goal)) return {};
    if (segment_clear(start, goal)) return {start, goal};

    const std::size_t n = nodes_.size();
    const std::size_t s = n, g = n + 1;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n + 2);
    for (std::size_t i = 0; i < n; ++i) adj[i] = edges_[i];
    for (std::size_t i = 0; i < n; ++i) {
      if (segment_clear(start, nodes_[i])) {
        const double w = (start - nodes_[i]).norm();
        adj[s].push_back({i, w});
      }
      if (segment_clear(goal, nodes_[i])) {
        const double w = (goal - nodes_[i]).norm();
        adj[i].push_back({g, w});
      }
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n + 2, kInf);
    std::vector<std::size_t> prev(n + 2, SIZE_MAX);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[s] = 0.0;
    pq.push({0.0, s});
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      if (u == g) break;
      for (const auto& [v, w] : adj[u]) {
        if (dist[u] + w < dist[v]) {
          dist[v] = dist[u] + w;
          prev[v] = u;
          pq.push({dist[v], v});
        }
      }
    }
    if (dist[g] == kInf) return {};

    std::vector<Vec2> path;
    for (std::size_t u = g; u != SIZE_MAX; u = prev[u]) {
      path.push_back(u == s ? start : (u == g ? goal : nodes_[u]));
      if (u == s) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  // Greedy shortcutting: replace waypoint subchains by straight segments.
  std::vector<Vec2> shortcut(std::vector<Vec2> path) const {
    std::vector<Vec2> out;
    std::size_t i = 0;
    out.push_back(path.front());
    while (i + 1 < path.size()) {
      std::size_t best = i + 1;
      for (std::size_t j = path.size() - 1; j > i + 1; --j) {
        if (segment_clear(path[i], path[j])) {
          best = j;
          break;
        }
      }
      out.push_back(path[best]);
      i = best;
    }
    return out;
  }

 private:
  Vec2 bounds_min_, bounds_max_;
  std::vector<Disk> disks_;
  std::vector<Vec2> nodes_;
  std::vector<std::vector<std::pair<std::size_t, double>>> edges_;
};

// Expert trajectory: visibility-graph shortest path over inflated disks
// (target included, so transit routes around it), shortcut smoothing, a
// straight docking leg onto the grasp pose, then arc-length resampling into
// exactly kPlanLength waypoints with yaw interpolated linearly toward the
// approach angle. The returned plan is re-validated waypoint by waypoint with
// the simulator's swept collision test; any violation fails the query.
inline std::optional<std::vector<Pose>> plan_trajectory(const Scene& scene,
                                                        const Pose& start,
                                                        const GraspGoal& goal,
                                                        const SimParams& params = {}) {
  const VisibilityGraph graph(scene, gripper_bounding_radius() + 0.005);
  const Vec2 goal_pos = pose_position2(goal.pose);
  const Vec2 u(std::cos(goal.approach_angle), std::sin(goal.approach_angle));
  const Vec2 dock_entry = goal_pos - kApproachStandoff * u;

  std::vector<Vec2> transit = graph.shortest_path(pose_position2(start), dock_entry);
  if (transit.empty()) return std::nullopt;
  if (transit.size() > 2) transit = graph.shortcut(std::move(transit));
  transit.push_back(goal_pos);

  double length = 0.0;
  for (std::size_t i = 1; i < transit.size(); ++i) {
    length += (transit[i] - transit[i - 1]).norm();
  }
  if (length > (kPlanLength - 1) * params.step_translation_limit) return std::nullopt;

  const std::vector<Vec2> pts = resample_polyline(transit, kPlanLength);
  const double yaw0 = pose_yaw(start);
  const double dyaw = wrap_angle(goal.approach_angle - yaw0);
  std::vector<Pose> plan;
  plan.reserve(kPlanLength);
  for (int k = 0; k < kPlanLength; ++k) {
    const double t = static_cast<double>(k) / (kPlanLength - 1);
    plan.push_back(planar_pose(pts[k].x(), pts[k].y(), yaw0 + t * dyaw));
  }

  for (int k = 0; k + 1 < kPlanLength; ++k) {
    if (swept_body_collides(scene, plan[k], plan[k + 1])) return std::nullopt;
  }
  if (swept_body_collides(scene, plan[0], plan[0])) return std::nullopt;
  return plan;
}

// Feasibility oracle used by scene sampling: at least one goal is reachable
// by a validated plan from the scene's start pose.
inline bool expert_feasible(const Scene& scene, const SimParams& params = {}) {
  Pose start;
  try {
    start = scene_start_pose(scene);
  } catch (const InfeasibleSceneError&) {
    return false;
  }
  for (const GraspGoal& goal : sample_grasp_goals(scene)) {
    if (plan_trajectory(scene, start, goal, params)) return true;
  }
  return false;
}

inline Scene sample_scene(std::uint64_t seed, int n_obstacles) {
  return sample_scene_with(seed, n_obstacles,
                           [](const Scene& s) { return expert_feasible(s); });
}

}  // namespace hcg
