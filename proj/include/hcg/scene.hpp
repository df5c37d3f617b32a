#pragma once

#include "hcg/geometry.hpp"
#include "hcg/rng.hpp"
#include "hcg/shapes.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace hcg {

// --- gripper body ---------------------------------------------------------
// Planar gripper model. The approach axis (the gripper frame's z, along
// which the fingers extend) lies in the table plane pointing along the yaw
// direction; the gripper frame's x is lateral in-plane. The collision body
// is three capsules: two fingers and the palm crossbar connecting the
// knuckles, all derived from the predefined gripper points.

inline constexpr double kFingerLateral = 0.04;
inline constexpr double kFingerTipForward = 0.10;
inline constexpr double kKnuckleForward = 0.06;
inline constexpr double kGripperCapsuleRadius = 0.01;
// Grasp reference point: middle of the finger span on the approach axis.
inline constexpr double kGraspStandoff = 0.08;

inline Vec2 pose_position2(const Pose& p) {
  return Vec2(p.translation.x(), p.translation.y());
}

// Embeds a gripper-frame (lateral, forward) offset into the plane.
inline Vec2 gripper_local_to_plane(const Pose& pose, double lateral, double forward) {
  const double yaw = pose_yaw(pose);
  const Vec2 f(std::cos(yaw), std::sin(yaw));
  const Vec2 l(-std::sin(yaw), std::cos(yaw));
  return pose_position2(pose) + forward * f + lateral * l;
}

inline Vec2 grasp_center(const Pose& pose) {
  return gripper_local_to_plane(pose, 0.0, kGraspStandoff);
}

// Finger capsules only (used by the grasp predicate).
inline std::array<Segment2, 2> finger_segments(const Pose& pose) {
  return {Segment2{gripper_local_to_plane(pose, -kFingerLateral, kKnuckleForward),
                   gripper_local_to_plane(pose, -kFingerLateral, kFingerTipForward)},
          Segment2{gripper_local_to_plane(pose, kFingerLateral, kKnuckleForward),
                   gripper_local_to_plane(pose, kFingerLateral, kFingerTipForward)}};
}

// Full collision body: two fingers plus the palm segment from the gripper
// origin (the palm point of the predefined gripper set) to the knuckle line.
inline std::array<Segment2, 3> body_segments(const Pose& pose) {
  const auto fingers = finger_segments(pose);
  return {fingers[0], fingers[1],
          Segment2{gripper_local_to_plane(pose, 0.0, 0.0),
                   gripper_local_to_plane(pose, 0.0, kKnuckleForward)}};
}

// Radius of the disk centered at the gripper origin that bounds the whole body.
inline double gripper_bounding_radius() {
  return std::hypot(kFingerLateral, kFingerTipForward) + kGripperCapsuleRadius;
}

// --- scene ----------------------------------------------------------------

struct Workspace {
  Vec2 min = Vec2(0.0, 0.0);
  Vec2 max = Vec2(1.0, 1.0);
};

struct GraspTolerance {
  double position = 0.02;  // meters
  double yaw = 0.2;        // radians
};

struct Scene {
  std::uint64_t seed = 0;
  Workspace workspace;
  Disk target;
  std::vector<Disk> obstacles;
  GraspTolerance tolerance;
};

struct GripperState {
  Pose pose;  // planar: z = 0, yaw-only rotation
};

struct InfeasibleSceneError : std::runtime_error {
  explicit InfeasibleSceneError(const std::string& what) : std::runtime_error(what) {}
};

// --- collision ------------------------------------------------------------

inline bool body_collides(const Scene& scene, const Pose& pose, double extra_margin = 0.0) {
  for (const Segment2& seg : body_segments(pose)) {
    for (const Disk& obs : scene.obstacles) {
      if (point_segment_distance(obs.center, seg.a, seg.b) <
          kGripperCapsuleRadius + obs.radius + extra_margin) {
        return true;
      }
    }
  }
  return false;
}

// Conservative swept test: the motion is subdivided until no body point moves
// more than ~5 mm between substeps, and each static check is inflated by half
// that bound. A zero-length motion degenerates to the exact static check.
inline bool swept_body_collides(const Scene& scene, const Pose& from, const Pose& to) {
  const Vec2 d = pose_position2(to) - pose_position2(from);
  const double dyaw = wrap_angle(pose_yaw(to) - pose_yaw(from));
  const double body_reach = std::hypot(kFingerLateral, kFingerTipForward);
  const double travel = d.norm() + std::abs(dyaw) * body_reach;
  const int substeps = std::max(1, static_cast<int>(std::ceil(travel / 0.005)));
  const double margin = 0.5 * travel / substeps;
  const double yaw0 = pose_yaw(from);
  const Vec2 p0 = pose_position2(from);
  for (int k = 0; k <= substeps; ++k) {
    const double t = static_cast<double>(k) / substeps;
    const Vec2 p = p0 + t * d;
    const Pose pk = planar_pose(p.x(), p.y(), yaw0 + t * dyaw);
    if (body_collides(scene, pk, margin)) return true;
  }
  return false;
}

// --- grasp predicate --------------------------------------------------------

// Success when the grasp reference point is on the target center within the
// position tolerance, the gripper points at the target within the yaw
// tolerance, and neither finger capsule intersects an obstacle. The target
// itself is not a collision body.
inline bool check_grasp_success(const Scene& scene, const GripperState& gripper) {
  const Pose& pose = gripper.pose;
  if ((grasp_center(pose) - scene.target.center).norm() > scene.tolerance.position) {
    return false;
  }
  const Vec2 to_target = scene.target.center - pose_position2(pose);
  if (to_target.norm() < 1e-9) return false;
  const double approach = std::atan2(to_target.y(), to_target.x());
  if (std::abs(wrap_angle(approach - pose_yaw(pose))) > scene.tolerance.yaw) return false;
  for (const Segment2& finger : finger_segments(pose)) {
    for (const Disk& obs : scene.obstacles) {
      if (capsule_intersects_disk(finger, kGripperCapsuleRadius, obs)) return false;
    }
  }
  return true;
}

// --- observations -----------------------------------------------------------

// One point of a masked egocentric cloud. mask: 1 target, 0 obstacle.
struct ObsPoint {
  Vec3 position = Vec3::Zero();  // gripper frame, meters
  int mask = 0;
};

struct Observation {
  std::vector<ObsPoint> points;
  Vec3 config = Vec3::Zero();  // gripper planar configuration (x, y, yaw)
};

struct RawFrame {
  std::vector<ObsPoint> points;  // gripper frame at capture time
  Pose pose;                     // gripper pose at capture time
};

struct SimParams {
  int max_steps = 60;
  int max_points = 512;
  double obs_noise = 0.002;           // meters, Gaussian, in plane
  double step_translation_limit = 0.05;
  double step_yaw_limit = 0.3;
  int boundary_samples = 16;          // candidate boundary points per disk
  double voxel = 0.01;                // aggregation dedup cell size
};

// Samples visible boundary points of all disks from the gripper origin.
// A boundary point is visible when the sight segment from the gripper origin
// crosses no disk interior (including the point's own disk: far-side points
// self-occlude). Points are expressed in the gripper frame with mask bits.
inline RawFrame render_observation(const Scene& scene, const GripperState& gripper,
                                   Rng& rng, const SimParams& params) {
  RawFrame frame;
  frame.pose = gripper.pose;
  const Vec2 eye = pose_position2(gripper.pose);
  const Pose inv = inverse(gripper.pose);

  std::vector<const Disk*> disks;
  std::vector<int> masks;
  disks.push_back(&scene.target);
  masks.push_back(1);
  for (const Disk& o : scene.obstacles) {
    disks.push_back(&o);
    masks.push_back(0);
  }

  const int n = params.boundary_samples;
  for (std::size_t di = 0; di < disks.size(); ++di) {
    const Disk& d = *disks[di];
    const double jitter = rng.uniform01() * 2.0 * M_PI / n;
    for (int k = 0; k < n; ++k) {
      const double ang = jitter + 2.0 * M_PI * k / n;
      const Vec2 p = d.center + d.radius * Vec2(std::cos(ang), std::sin(ang));
      bool blocked = false;
      for (const Disk* other : disks) {
        if (segment_crosses_disk(eye, p, *other)) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;
      Vec2 noisy = p;
      if (params.obs_noise > 0.0) {
        noisy.x() += rng.normal(0.0, params.obs_noise);
        noisy.y() += rng.normal(0.0, params.obs_noise);
      }
      const Vec3 world(noisy.x(), noisy.y(), 0.0);
      frame.points.push_back({transform_point(inv, world), masks[di]});
    }
  }
  return frame;
}

// Union of all raw frames re-expressed in the frame of `current`, voxel
// deduplicated in the base frame (newer points win), uniformly downsampled
// to max_points when larger.
inline Observation aggregate_observation(const std::vector<RawFrame>& history,
                                         const Pose& current, Rng& rng,
                                         const SimParams& params) {
  if (history.empty()) throw std::invalid_argument("aggregate_observation: empty history");

  struct Slot {
    Vec3 base_pos;
    int mask;
  };
  std::vector<Slot> slots;
  std::map<std::tuple<long long, long long, long long>, std::size_t> voxel_index;
  for (const RawFrame& frame : history) {
    for (const ObsPoint& pt : frame.points) {
      const Vec3 base = transform_point(frame.pose, pt.position);
      const auto key = std::make_tuple(static_cast<long long>(std::floor(base.x() / params.voxel)),
                                       static_cast<long long>(std::floor(base.y() / params.voxel)),
                                       static_cast<long long>(std::floor(base.z() / params.voxel)));
      auto [it, inserted] = voxel_index.try_emplace(key, slots.size());
      if (inserted) {
        slots.push_back({base, pt.mask});
      } else {
        slots[it->second] = {base, pt.mask};
      }
    }
  }

  std::vector<std::size_t> order(slots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (static_cast<int>(slots.size()) > params.max_points) {
    // Partial Fisher-Yates: uniform subset, then restore index order.
    for (int i = 0; i < params.max_points; ++i) {
      const int j = i + rng.uniform_int(static_cast<int>(order.size()) - i);
      std::swap(order[i], order[j]);
    }
    order.resize(params.max_points);
    std::sort(order.begin(), order.end());
  }

  Observation obs;
  obs.config = planar_params(current);
  const Pose inv = inverse(current);
  obs.points.reserve(order.size());
  for (std::size_t idx : order) {
    obs.points.push_back({transform_point(inv, slots[idx].base_pos), slots[idx].mask});
  }
  return obs;
}

// --- start pose -------------------------------------------------------------

// Deterministic start pose derived from the scene seed: clear of all
// obstacles by the gripper bounding radius, away from the target, facing it.
inline Pose scene_start_pose(const Scene& scene) {
  Rng rng(derive_seed(scene.seed, "start"));
  const double clearance = gripper_bounding_radius() + 0.01;
  for (int attempt = 0; attempt < 500; ++attempt) {
    const Vec2 pos(rng.uniform(scene.workspace.min.x() + 0.05, scene.workspace.max.x() - 0.05),
                   rng.uniform(scene.workspace.min.y() + 0.05, scene.workspace.max.y() - 0.05));
    if ((pos - scene.target.center).norm() < 0.35) continue;
    bool clear = true;
    for (const Disk& o : scene.obstacles) {
      if ((pos - o.center).norm() < o.radius + clearance) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    const Vec2 dir = scene.target.center - pos;
    return planar_pose(pos.x(), pos.y(), std::atan2(dir.y(), dir.x()));
  }
  throw InfeasibleSceneError("no collision-free start pose");
}

// --- simulator --------------------------------------------------------------

enum class Outcome { ongoing, success, collision, timeout };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::ongoing: return "ongoing";
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::ongoing;
};

// The MDP. Sparse rewards: +1 grasp success, -1 collision, 0 otherwise;
// episodes end on success, collision, or timeout at max_steps.
class Simulator {
 public:
  Simulator() = default;
  explicit Simulator(SimParams params) : params_(params) {}

  const SimParams& params() const { return params_; }
  const Scene& scene() const { return scene_; }
  const Pose& pose() const { return state_.pose; }
  const GripperState& state() const { return state_; }
  int steps() const { return step_count_; }
  bool done() const { return done_; }
  Outcome outcome() const { return outcome_; }
  const std::vector<RawFrame>& history() const { return history_; }
  const Observation& observation() const { return current_obs_; }

  Observation reset(const Scene& scene, std::uint64_t episode_seed) {
    return reset(scene, episode_seed, scene_start_pose(scene));
  }

  Observation reset(const Scene& scene, std::uint64_t episode_seed, const Pose& start) {
    scene_ = scene;
    episode_seed_ = episode_seed;
    state_.pose = project_planar(start);
    step_count_ = 0;
    done_ = false;
    outcome_ = Outcome::ongoing;
    history_.clear();
    capture();
    return current_obs_;
  }

  // Applies a relative pose action: the new pose is compose(action, pose)
  // projected onto the plane, with the actual per-step motion clamped to the
  // translation and yaw limits. Invalid actions are clamped, never rejected.
  StepResult step(const Pose& action) {
    if (done_) throw std::logic_error("Simulator::step after episode end");
    const Pose target = project_planar(compose(action, state_.pose));
    Vec2 d = pose_position2(target) - pose_position2(state_.pose);
    const double dn = d.norm();
    if (dn > params_.step_translation_limit) d *= params_.step_translation_limit / dn;
    double dyaw = wrap_angle(pose_yaw(target) - pose_yaw(state_.pose));
    dyaw = std::clamp(dyaw, -params_.step_yaw_limit, params_.step_yaw_limit);
    const Vec2 new_pos = pose_position2(state_.pose) + d;
    const Pose new_pose = planar_pose(new_pos.x(), new_pos.y(), pose_yaw(state_.pose) + dyaw);

    StepResult result;
    ++step_count_;
    if (swept_body_collides(scene_, state_.pose, new_pose)) {
      done_ = true;
      outcome_ = Outcome::collision;
      result.reward = -1.0;
    } else {
      state_.pose = new_pose;
      if (check_grasp_success(scene_, state_)) {
        done_ = true;
        outcome_ = Outcome::success;
        result.reward = 1.0;
      } else if (step_count_ >= params_.max_steps) {
        done_ = true;
        outcome_ = Outcome::timeout;
        result.reward = 0.0;
      }
    }
    capture();
    result.observation = current_obs_;
    result.done = done_;
    result.outcome = done_ ? outcome_ : Outcome::ongoing;
    return result;
  }

 private:
  void capture() {
    Rng render_rng(derive_seed(episode_seed_, "render", step_count_));
    history_.push_back(render_observation(scene_, state_, render_rng, params_));
    Rng agg_rng(derive_seed(episode_seed_, "aggregate", step_count_));
    current_obs_ = aggregate_observation(history_, state_.pose, agg_rng, params_);
  }

  SimParams params_;
  Scene scene_;
  GripperState state_;
  Observation current_obs_;
  std::vector<RawFrame> history_;
  std::uint64_t episode_seed_ = 0;
  int step_count_ = 0;
  bool done_ = false;
  Outcome outcome_ = Outcome::ongoing;
};

// --- scene sampling ---------------------------------------------------------

// Rejection-samples a scene; feasibility is checked by the supplied oracle
// (the expert planner). Deterministic in seed.
inline Scene sample_scene_with(std::uint64_t seed, int n_obstacles,
                               const std::function<bool(const Scene&)>& feasible) {
  if (n_obstacles < 0 || n_obstacles > 7) {
    throw std::invalid_argument("sample_scene: n_obstacles must be in [0, 7]");
  }
  Rng rng(derive_seed(seed, "scene"));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Scene scene;
    scene.seed = mix64(seed + 0x9e37 * static_cast<std::uint64_t>(attempt));
    scene.target.center = Vec2(rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75));
    scene.target.radius = rng.uniform(0.03, 0.05);
    bool placed_all = true;
    for (int i = 0; i < n_obstacles; ++i) {
      bool placed = false;
      for (int tries = 0; tries < 100; ++tries) {
        Disk o;
        o.radius = rng.uniform(0.03, 0.08);
        o.center = Vec2(rng.uniform(o.radius, 1.0 - o.radius),
                        rng.uniform(o.radius, 1.0 - o.radius));
        if ((o.center - scene.target.center).norm() <
            o.radius + scene.target.radius + 0.01) {
          continue;
        }
        scene.obstacles.push_back(o);
        placed = true;
        break;
      }
      if (!placed) {
        placed_all = false;
        break;
      }
    }
    if (!placed_all) continue;
    try {
      scene_start_pose(scene);  // must exist
    } catch (const InfeasibleSceneError&) {
      continue;
    }
    if (feasible(scene)) return scene;
  }
  throw InfeasibleSceneError("sample_scene: no feasible scene after 1000 attempts");
}

// --- scene JSON -------------------------------------------------------------

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["workspace"] = {{"min", {s.workspace.min.x(), s.workspace.min.y()}},
                    {"max", {s.workspace.max.x(), s.workspace.max.y()}}};
  j["target"] = {{"center", {s.target.center.x(), s.target.center.y()}},
                 {"radius", s.target.radius}};
  j["obstacles"] = nlohmann::json::array();
  for (const Disk& o : s.obstacles) {
    j["obstacles"].push_back({{"center", {o.center.x(), o.center.y()}}, {"radius", o.radius}});
  }
  j["tolerances"] = {{"position", s.tolerance.position}, {"yaw", s.tolerance.yaw}};
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.workspace.min = Vec2(j.at("workspace").at("min")[0], j.at("workspace").at("min")[1]);
  s.workspace.max = Vec2(j.at("workspace").at("max")[0], j.at("workspace").at("max")[1]);
  s.target.center = Vec2(j.at("target").at("center")[0], j.at("target").at("center")[1]);
  s.target.radius = j.at("target").at("radius").get<double>();
  for (const auto& o : j.at("obstacles")) {
    s.obstacles.push_back({Vec2(o.at("center")[0], o.at("center")[1]),
                           o.at("radius").get<double>()});
  }
  s.tolerance.position = j.at("tolerances").at("position").get<double>();
  s.tolerance.yaw = j.at("tolerances").at("yaw").get<double>();
  return s;
}

}  // namespace hcg
