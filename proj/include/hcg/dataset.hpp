#pragma once

#include "hcg/expert.hpp"
#include "hcg/geometry.hpp"
#include "hcg/parallel.hpp"
#include "hcg/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace hcg {

inline constexpr const char* kDemoMagic = "HCGDEMO1";

// One recorded step of an expert rollout: the aggregated observation before
// acting, the gripper pose, and the extracted expert action/goal.
struct StepRecord {
  Observation obs;
  Pose pose;
  Pose expert_action;
  Pose expert_goal;
};

struct Demonstration {
  Scene scene;
  std::vector<Pose> plan;
  std::vector<StepRecord> records;
  int goal_id = 0;  // approach-angle index, distinct per goal within a scene
  Outcome outcome = Outcome::ongoing;
};

struct DatasetConfig {
  int n_scenes = 10;
  int obstacles_min = 3;
  int obstacles_max = 5;
  int goals_per_scene = 2;
  std::uint64_t seed = 0;
  SimParams sim;
  int threads = 1;
};

struct DemoDataset {
  DatasetConfig config;
  std::vector<Demonstration> demos;
  std::vector<int> demos_per_scene;
  int skipped_goals = 0;   // planner failures
  int skipped_scenes = 0;  // infeasible scene draws
};

// Rolls the simulator open-loop along a plan, recording observations and the
// extracted expert action/goal at every executed step.
inline Demonstration roll_demonstration(const Scene& scene, const std::vector<Pose>& plan,
                                        int goal_id, const SimParams& params,
                                        std::uint64_t episode_seed) {
  Demonstration demo;
  demo.scene = scene;
  demo.plan = plan;
  demo.goal_id = goal_id;
  Simulator sim(params);
  sim.reset(scene, episode_seed, plan.front());
  for (std::size_t t = 0; t + 1 < plan.size(); ++t) {
    StepRecord rec;
    rec.obs = sim.observation();
    rec.pose = sim.pose();
    rec.expert_action = extract_expert_action(plan, t);
    rec.expert_goal = extract_expert_goal(plan, t);
    demo.records.push_back(std::move(rec));
    const StepResult res = sim.step(demo.records.back().expert_action);
    if (res.done) break;
  }
  demo.outcome = sim.outcome();
  return demo;
}

// Demonstrations for one scene: plans to up to goals_per_scene goals chosen
// farthest-first by approach angle (multi-modality), each rolled through the
// simulator. Only successful rollouts are kept.
inline std::vector<Demonstration> demos_for_scene(const Scene& scene,
                                                  const DatasetConfig& config,
                                                  int* skipped_goals = nullptr) {
  std::vector<Demonstration> out;
  const Pose start = scene_start_pose(scene);
  std::vector<GraspGoal> candidates = sample_grasp_goals(scene);
  std::vector<double> chosen_angles;
  while (static_cast<int>(out.size()) < config.goals_per_scene && !candidates.empty()) {
    std::size_t pick = 0;
    if (!chosen_angles.empty()) {
      double best = -1.0;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (double a : chosen_angles) {
          nearest = std::min(nearest,
                             std::abs(wrap_angle(candidates[i].approach_angle - a)));
        }
        if (nearest > best) {
          best = nearest;
          pick = i;
        }
      }
    }
    const GraspGoal goal = candidates[pick];
    candidates.erase(candidates.begin() + pick);
    const auto plan = plan_trajectory(scene, start, goal, config.sim);
    if (!plan) {
      if (skipped_goals) ++*skipped_goals;
      continue;
    }
    const int goal_id =
        static_cast<int>(std::lround(goal.approach_angle * kMaxGraspGoals / (2.0 * M_PI))) %
        kMaxGraspGoals;
    Demonstration demo = roll_demonstration(scene, *plan, goal_id, config.sim,
                                            derive_seed(scene.seed, "demo", goal_id));
    if (demo.outcome != Outcome::success) {
      if (skipped_goals) ++*skipped_goals;
      continue;
    }
    chosen_angles.push_back(goal.approach_angle);
    out.push_back(std::move(demo));
  }
  return out;
}

// Full dataset generation: scenes are sampled and rolled independently
// (parallel across scenes), then merged in scene order, so the result is
// deterministic in the seed regardless of thread count.
inline DemoDataset generate_dataset(const DatasetConfig& config) {
  DemoDataset ds;
  ds.config = config;
  ds.demos_per_scene.assign(config.n_scenes, 0);
  std::vector<std::vector<Demonstration>> per_scene(config.n_scenes);
  std::vector<int> skipped(config.n_scenes, 0);
  std::vector<int> scene_failed(config.n_scenes, 0);

  parallel_for(config.n_scenes, config.threads, [&](int i) {
    const int span = config.obstacles_max - config.obstacles_min + 1;
    const int n_obst = config.obstacles_min + (i % span);
    try {
      const Scene scene = sample_scene(derive_seed(config.seed, "dataset_scene", i), n_obst);
      per_scene[i] = demos_for_scene(scene, config, &skipped[i]);
    } catch (const InfeasibleSceneError&) {
      scene_failed[i] = 1;
    }
  });

  for (int i = 0; i < config.n_scenes; ++i) {
    ds.demos_per_scene[i] = static_cast<int>(per_scene[i].size());
    ds.skipped_goals += skipped[i];
    ds.skipped_scenes += scene_failed[i];
    for (auto& d : per_scene[i]) ds.demos.push_back(std::move(d));
  }
  return ds;
}

// --- persistence ------------------------------------------------------------
// Manifest JSON plus one binary block file of little-endian float32 clouds.

inline void put_f32_le(float v, std::ostream& out) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                        static_cast<unsigned char>((bits >> 8) & 0xff),
                        static_cast<unsigned char>((bits >> 16) & 0xff),
                        static_cast<unsigned char>((bits >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline float get_f32_le(const unsigned char* in) {
  std::uint32_t bits = static_cast<std::uint32_t>(in[0]) |
                       (static_cast<std::uint32_t>(in[1]) << 8) |
                       (static_cast<std::uint32_t>(in[2]) << 16) |
                       (static_cast<std::uint32_t>(in[3]) << 24);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline nlohmann::json pose_to_json(const Pose& p) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) j.push_back(p.rotation(i, k));
  for (int i = 0; i < 3; ++i) j.push_back(p.translation(i));
  return j;
}

inline Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  int idx = 0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) p.rotation(i, k) = j[idx++].get<double>();
  for (int i = 0; i < 3; ++i) p.translation(i) = j[idx++].get<double>();
  return p;
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {{"n_scenes", c.n_scenes},       {"obstacles_min", c.obstacles_min},
          {"obstacles_max", c.obstacles_max}, {"goals_per_scene", c.goals_per_scene},
          {"seed", c.seed},               {"obs_noise", c.sim.obs_noise},
          {"max_points", c.sim.max_points}, {"boundary_samples", c.sim.boundary_samples}};
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.n_scenes = j.at("n_scenes");
  c.obstacles_min = j.at("obstacles_min");
  c.obstacles_max = j.at("obstacles_max");
  c.goals_per_scene = j.at("goals_per_scene");
  c.seed = j.at("seed");
  c.sim.obs_noise = j.at("obs_noise");
  c.sim.max_points = j.at("max_points");
  c.sim.boundary_samples = j.at("boundary_samples");
  return c;
}

// Writes manifest.json and blocks.bin under dir (created by the caller).
inline void save_dataset(const DemoDataset& ds, const std::string& dir) {
  std::ofstream blob(dir + "/blocks.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("save_dataset: cannot write " + dir + "/blocks.bin");
  nlohmann::json manifest;
  manifest["magic"] = kDemoMagic;
  manifest["config"] = dataset_config_to_json(ds.config);
  manifest["skipped_goals"] = ds.skipped_goals;
  manifest["skipped_scenes"] = ds.skipped_scenes;
  manifest["demos_per_scene"] = ds.demos_per_scene;
  auto& demos = manifest["demos"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Demonstration& d : ds.demos) {
    nlohmann::json jd;
    jd["scene"] = scene_to_json(d.scene);
    jd["goal_id"] = d.goal_id;
    jd["outcome"] = outcome_name(d.outcome);
    jd["plan"] = nlohmann::json::array();
    for (const Pose& p : d.plan) jd["plan"].push_back(pose_to_json(p));
    auto& recs = jd["records"] = nlohmann::json::array();
    for (const StepRecord& r : d.records) {
      nlohmann::json jr;
      jr["pose"] = pose_to_json(r.pose);
      jr["action"] = pose_to_json(r.expert_action);
      jr["goal"] = pose_to_json(r.expert_goal);
      jr["n_points"] = r.obs.points.size();
      jr["cloud_offset"] = offset;
      for (const ObsPoint& pt : r.obs.points) {
        put_f32_le(static_cast<float>(pt.position.x()), blob);
        put_f32_le(static_cast<float>(pt.position.y()), blob);
        put_f32_le(static_cast<float>(pt.position.z()), blob);
        put_f32_le(static_cast<float>(pt.mask), blob);
      }
      offset += r.obs.points.size() * 16;
      recs.push_back(std::move(jr));
    }
    demos.push_back(std::move(jd));
  }
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("save_dataset: cannot write " + dir + "/manifest.json");
  mf << manifest.dump(1) << "\n";
}

inline DemoDataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing " + dir + "/manifest.json");
  nlohmann::json manifest;
  mf >> manifest;
  if (manifest.at("magic") != kDemoMagic) {
    throw std::runtime_error("load_dataset: bad magic in " + dir);
  }
  std::ifstream blob(dir + "/blocks.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("load_dataset: missing " + dir + "/blocks.bin");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)),
                                   std::istreambuf_iterator<char>());

  DemoDataset ds;
  ds.config = dataset_config_from_json(manifest.at("config"));
  ds.skipped_goals = manifest.at("skipped_goals");
  ds.skipped_scenes = manifest.at("skipped_scenes");
  ds.demos_per_scene = manifest.at("demos_per_scene").get<std::vector<int>>();
  for (const auto& jd : manifest.at("demos")) {
    Demonstration d;
    d.scene = scene_from_json(jd.at("scene"));
    d.goal_id = jd.at("goal_id");
    d.outcome = jd.at("outcome") == "success" ? Outcome::success : Outcome::ongoing;
    for (const auto& jp : jd.at("plan")) d.plan.push_back(pose_from_json(jp));
    for (const auto& jr : jd.at("records")) {
      StepRecord r;
      r.pose = pose_from_json(jr.at("pose"));
      r.expert_action = pose_from_json(jr.at("action"));
      r.expert_goal = pose_from_json(jr.at("goal"));
      const std::size_t n = jr.at("n_points");
      std::uint64_t off = jr.at("cloud_offset");
      r.obs.config = planar_params(r.pose);
      r.obs.points.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = get_f32_le(bytes.data() + off);
        const double y = get_f32_le(bytes.data() + off + 4);
        const double z = get_f32_le(bytes.data() + off + 8);
        const double m = get_f32_le(bytes.data() + off + 12);
        r.obs.points.push_back({Vec3(x, y, z), static_cast<int>(m)});
        off += 16;
      }
      d.records.push_back(std::move(r));
    }
    ds.demos.push_back(std::move(d));
  }
  return ds;
}

}  // namespace hcg
