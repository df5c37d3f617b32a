#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <tuple>

#include "hcg/expert.hpp"
#include "hcg/scene.hpp"

using namespace hcg;

namespace {

Scene empty_scene(double target_radius = 0.05) {
  Scene s;
  s.seed = 99;
  s.target = {Vec2(0.5, 0.5), target_radius};
  return s;
}

SimParams quiet_params() {
  SimParams p;
  p.obs_noise = 0.0;
  p.boundary_samples = 16;
  return p;
}

double same_scene_diff(const Scene& a, const Scene& b) {
  double d = (a.target.center - b.target.center).norm() + std::abs(a.target.radius - b.target.radius);
  if (a.obstacles.size() != b.obstacles.size()) return 1e9;
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    d += (a.obstacles[i].center - b.obstacles[i].center).norm() +
         std::abs(a.obstacles[i].radius - b.obstacles[i].radius);
  }
  return d;
}

}  // namespace

TEST_CASE("grasp predicate at canonical pose", "[scene]") {
  const Scene s = empty_scene();
  const Pose grasp = grasp_goal_pose(s.target, 1.2);
  CHECK(check_grasp_success(s, GripperState{grasp}));

  const Pose far = planar_pose(s.target.center.x() - 1.0, s.target.center.y(), 0.0);
  CHECK_FALSE(check_grasp_success(s, GripperState{far}));

  // Misaligned yaw at the right position fails.
  Pose twisted = grasp;
  twisted = planar_pose(twisted.translation.x(), twisted.translation.y(), 1.2 + 0.5);
  CHECK_FALSE(check_grasp_success(s, GripperState{twisted}));
}

TEST_CASE("grasp predicate rejects finger-obstacle clip", "[scene]") {
  Scene s = empty_scene();
  const Pose grasp = grasp_goal_pose(s.target, 0.0);
  // Put a small obstacle right on one finger.
  const Vec2 finger_mid = gripper_local_to_plane(grasp, kFingerLateral, 0.08);
  s.obstacles.push_back({finger_mid, 0.03});
  CHECK_FALSE(check_grasp_success(s, GripperState{grasp}));
}

TEST_CASE("step: identity action mid-episode is a no-op", "[scene]") {
  const Scene s = empty_scene();
  Simulator sim(quiet_params());
  sim.reset(s, 1, planar_pose(0.1, 0.1, 0.0));
  const StepResult r = sim.step(identity_pose());
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
  CHECK(r.outcome == Outcome::ongoing);
  CHECK((sim.pose().translation - Vec3(0.1, 0.1, 0)).norm() < 1e-12);
}

TEST_CASE("step: driving into a nearby obstacle collides", "[scene]") {
  Scene s = empty_scene();
  // Gripper at origin facing +x; obstacle surface 0.01 m ahead of the
  // fingertip capsule surface.
  const double obs_radius = 0.04;
  const double front = kFingerTipForward + kGripperCapsuleRadius;  // 0.11
  s.target.center = Vec2(0.5, -0.5);  // out of the way
  s.obstacles.push_back({Vec2(front + 0.01 + obs_radius, 0.0), obs_radius});
  Simulator sim(quiet_params());
  sim.reset(s, 2, planar_pose(0.0, 0.0, 0.0));
  const StepResult r = sim.step(translation_pose(0.05, 0.0, 0.0));
  CHECK(r.reward == -1.0);
  CHECK(r.done);
  CHECK(r.outcome == Outcome::collision);
}

TEST_CASE("step: grasp predicate already satisfied yields success", "[scene]") {
  const Scene s = empty_scene();
  Simulator sim(quiet_params());
  sim.reset(s, 3, grasp_goal_pose(s.target, 0.7));
  const StepResult r = sim.step(identity_pose());
  CHECK(r.reward == 1.0);
  CHECK(r.done);
  CHECK(r.outcome == Outcome::success);
}

TEST_CASE("step: timeout at max_steps with zero reward", "[scene]") {
  const Scene s = empty_scene();
  SimParams p = quiet_params();
  p.max_steps = 5;
  Simulator sim(p);
  sim.reset(s, 4, planar_pose(0.1, 0.1, 0.0));
  StepResult r;
  for (int i = 0; i < 5; ++i) r = sim.step(identity_pose());
  CHECK(r.done);
  CHECK(r.outcome == Outcome::timeout);
  CHECK(r.reward == 0.0);
}

TEST_CASE("step motion clamp", "[scene]") {
  const Scene s = empty_scene();
  Simulator sim(quiet_params());
  sim.reset(s, 5, planar_pose(0.1, 0.1, 0.0));
  sim.step(compose(translation_pose(0.5, 0.0, 0.0), rot_z_pose(1.0)));
  const Vec3 q = planar_params(sim.pose());
  CHECK((Vec2(q.x(), q.y()) - Vec2(0.1, 0.1)).norm() == Catch::Approx(0.05).epsilon(1e-9));
  CHECK(std::abs(wrap_angle(q.z() - 0.0)) == Catch::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("step determinism", "[scene]") {
  const Scene s = sample_scene(1234, 4);
  auto run = [&] {
    Simulator sim;
    sim.reset(s, 77);
    std::vector<double> xs;
    for (int i = 0; i < 10; ++i) {
      const StepResult r = sim.step(translation_pose(0.02, 0.005, 0.0));
      for (const ObsPoint& p : r.observation.points) xs.push_back(p.position.x());
      if (r.done) break;
    }
    return xs;
  };
  CHECK(run() == run());
}

TEST_CASE("render: lone target yields only target-masked points", "[scene]") {
  const Scene s = empty_scene();
  Rng rng(5);
  const auto frame =
      render_observation(s, GripperState{planar_pose(0.1, 0.5, 0.0)}, rng, quiet_params());
  REQUIRE(!frame.points.empty());
  for (const ObsPoint& p : frame.points) CHECK(p.mask == 1);
}

TEST_CASE("render: occluder blanks the target", "[scene]") {
  Scene s = empty_scene(0.04);
  // Obstacle directly between gripper and target, large enough to block the
  // full angular extent of the target.
  s.obstacles.push_back({Vec2(0.25, 0.5), 0.06});
  Rng rng(6);
  const auto frame =
      render_observation(s, GripperState{planar_pose(0.05, 0.5, 0.0)}, rng, quiet_params());
  int target_points = 0, obstacle_points = 0;
  for (const ObsPoint& p : frame.points) (p.mask == 1 ? target_points : obstacle_points)++;
  CHECK(target_points == 0);
  CHECK(obstacle_points > 0);
}

TEST_CASE("render determinism in the rng seed", "[scene]") {
  Scene s = empty_scene();
  s.obstacles.push_back({Vec2(0.7, 0.3), 0.05});
  SimParams p;
  p.obs_noise = 0.002;
  auto once = [&] {
    Rng rng(42);
    return render_observation(s, GripperState{planar_pose(0.2, 0.2, 0.4)}, rng, p);
  };
  const auto a = once(), b = once();
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK((a.points[i].position - b.points[i].position).norm() == 0.0);
    CHECK(a.points[i].mask == b.points[i].mask);
  }
}

TEST_CASE("aggregate: single frame equals that frame's cloud", "[scene]") {
  const Scene s = empty_scene(0.05);  // 16 samples on r=0.05: spacing > voxel diagonal
  Rng rng(7);
  const GripperState g{planar_pose(0.1, 0.5, 0.0)};
  const auto frame = render_observation(s, g, rng, quiet_params());
  Rng agg_rng(8);
  const auto obs = aggregate_observation({frame}, g.pose, agg_rng, quiet_params());
  REQUIRE(obs.points.size() == frame.points.size());
  for (std::size_t i = 0; i < obs.points.size(); ++i) {
    CHECK((obs.points[i].position - frame.points[i].position).norm() < 1e-9);
    CHECK(obs.points[i].mask == frame.points[i].mask);
  }
  CHECK((obs.config - planar_params(g.pose)).norm() < 1e-12);
}

TEST_CASE("aggregate: base-frame reconstruction is frame consistent", "[scene]") {
  // A static world point observed from two poses maps to the same base-frame
  // location through each history entry.
  const Vec3 world(0.43, 0.61, 0.0);
  const Pose pa = planar_pose(0.1, 0.2, 0.3);
  const Pose pb = planar_pose(0.8, 0.4, -1.1);
  const Vec3 in_a = transform_point(inverse(pa), world);
  const Vec3 in_b = transform_point(inverse(pb), world);
  CHECK((transform_point(pa, in_a) - transform_point(pb, in_b)).norm() < 1e-9);
}

TEST_CASE("aggregate: newer points win dedup ties and config is uniform", "[scene]") {
  RawFrame old_frame, new_frame;
  old_frame.pose = identity_pose();
  new_frame.pose = identity_pose();
  old_frame.points.push_back({Vec3(0.105, 0.105, 0.0), 0});
  new_frame.points.push_back({Vec3(0.101, 0.102, 0.0), 1});  // same voxel, newer
  Rng rng(9);
  const auto obs =
      aggregate_observation({old_frame, new_frame}, identity_pose(), rng, quiet_params());
  REQUIRE(obs.points.size() == 1);
  CHECK(obs.points[0].mask == 1);
  CHECK((obs.points[0].position - Vec3(0.101, 0.102, 0.0)).norm() < 1e-12);
}

TEST_CASE("aggregate: orbiting covers far more boundary than one view", "[scene]") {
  Scene s = empty_scene();
  s.target.center = Vec2(2.0, 2.0);  // far away; we observe the obstacle
  const Disk obstacle{Vec2(0.5, 0.5), 0.06};
  s.obstacles.push_back(obstacle);
  SimParams p = quiet_params();
  p.boundary_samples = 64;

  auto coverage_bins = [&](const std::vector<RawFrame>& frames) {
    std::set<int> bins;
    Rng rng(10);
    const auto obs = aggregate_observation(frames, frames.back().pose, rng, p);
    for (const ObsPoint& pt : obs.points) {
      if (pt.mask != 0) continue;
      const Vec3 world = transform_point(frames.back().pose, pt.position);
      const Vec2 rel = Vec2(world.x(), world.y()) - obstacle.center;
      const double ang = std::atan2(rel.y(), rel.x());
      bins.insert(static_cast<int>(std::floor((ang + M_PI) / (2.0 * M_PI) * 36)));
    }
    return static_cast<int>(bins.size());
  };

  std::vector<RawFrame> frames;
  Rng rng(11);
  for (int k = 0; k < 10; ++k) {
    const double a = 2.0 * M_PI * k / 10.0;
    const GripperState g{
        planar_pose(0.5 + 0.3 * std::cos(a), 0.5 + 0.3 * std::sin(a), a + M_PI)};
    frames.push_back(render_observation(s, g, rng, p));
    const int single = coverage_bins({frames.back()});
    CHECK(single <= 18);  // a single view sees at most half the boundary
  }
  CHECK(coverage_bins(frames) >= 30);  // >= 300 degrees
}

TEST_CASE("aggregate: cap to max_points", "[scene]") {
  Scene s = empty_scene();
  for (int i = 0; i < 5; ++i) s.obstacles.push_back({Vec2(0.2 + 0.15 * i, 0.8), 0.05});
  SimParams p = quiet_params();
  p.max_points = 40;
  p.boundary_samples = 64;
  Rng rng(12);
  const auto frame = render_observation(s, GripperState{planar_pose(0.5, 0.2, 1.57)}, rng, p);
  Rng agg(13);
  const auto obs = aggregate_observation({frame}, frame.pose, agg, p);
  CHECK(obs.points.size() == 40);
}

TEST_CASE("aggregate: voxel set is order independent", "[scene]") {
  Scene s = empty_scene();
  s.obstacles.push_back({Vec2(0.6, 0.6), 0.05});
  SimParams p = quiet_params();
  Rng rng(14);
  RawFrame f1 = render_observation(s, GripperState{planar_pose(0.1, 0.5, 0.0)}, rng, p);
  RawFrame f2 = render_observation(s, GripperState{planar_pose(0.5, 0.1, 1.2)}, rng, p);

  auto voxels = [&](const std::vector<RawFrame>& frames) {
    Rng agg(15);
    const auto obs = aggregate_observation(frames, identity_pose(), agg, p);
    std::set<std::tuple<long long, long long, long long>> keys;
    for (const ObsPoint& pt : obs.points) {
      keys.insert({static_cast<long long>(std::floor(pt.position.x() / p.voxel)),
                   static_cast<long long>(std::floor(pt.position.y() / p.voxel)),
                   static_cast<long long>(std::floor(pt.position.z() / p.voxel))});
    }
    return keys;
  };
  CHECK(voxels({f1, f2}) == voxels({f2, f1}));
}

TEST_CASE("scene sampling is deterministic and respects bounds", "[scene]") {
  const Scene a = sample_scene(555, 5);
  const Scene b = sample_scene(555, 5);
  CHECK(same_scene_diff(a, b) == 0.0);
  CHECK(a.obstacles.size() == 5);
  for (const Disk& o : a.obstacles) {
    CHECK(o.radius >= 0.03);
    CHECK(o.radius <= 0.08);
    CHECK((o.center - a.target.center).norm() >= o.radius + a.target.radius);
  }
  CHECK_THROWS_AS(sample_scene(1, 8), std::invalid_argument);
}

TEST_CASE("empty-clutter scenes are always feasible", "[scene]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = sample_scene(seed, 0);
    CHECK(s.obstacles.empty());
    CHECK(expert_feasible(s));
  }
}

TEST_CASE("sampled cluttered scenes pass the feasibility oracle", "[scene]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = sample_scene(derive_seed(3, "feas", seed), 7);
    CHECK(s.obstacles.size() == 7);
    CHECK(expert_feasible(s));
  }
}

TEST_CASE("scene JSON round trip", "[scene]") {
  const Scene a = sample_scene(77, 3);
  const Scene b = scene_from_json(scene_to_json(a));
  CHECK(same_scene_diff(a, b) == 0.0);
  CHECK(a.seed == b.seed);
  CHECK(a.tolerance.position == b.tolerance.position);
}

TEST_CASE("rewards are sparse and terminal-only", "[scene]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = sample_scene(derive_seed(4, "sparse", seed), 4);
    Simulator sim;
    Rng rng(seed);
    sim.reset(s, seed);
    while (!sim.done()) {
      const Pose action = compose(rot_z_pose(rng.uniform(-0.2, 0.2)),
                                  translation_pose(rng.uniform(-0.04, 0.04),
                                                   rng.uniform(-0.04, 0.04), 0.0));
      const StepResult r = sim.step(action);
      CHECK((r.reward == 0.0 || r.reward == 1.0 || r.reward == -1.0));
      if (!r.done) CHECK(r.reward == 0.0);
      if (r.reward == 1.0) CHECK(r.outcome == Outcome::success);
      if (r.reward == -1.0) CHECK(r.outcome == Outcome::collision);
    }
  }
}
