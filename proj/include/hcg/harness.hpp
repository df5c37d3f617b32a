#pragma once

#include "hcg/eval.hpp"
#include "hcg/io.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hcg {

// Ablation variants: behavior cloning (policy trained on a zero latent,
// no embedding or sampler), zero latent at eval, a single plan drawn at t=0,
// a sampler trained without the policy loss, and the full system.
inline const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names{"bc", "zeros", "single-plan",
                                              "no-policy-loss", "hcg"};
  return names;
}

struct AblationConfig {
  std::uint64_t seed = 0;
  int n_seeds = 3;
  // Training data
  int train_scenes = 100;
  int goals_per_scene = 3;
  int train_obstacles_min = 3;
  int train_obstacles_max = 5;
  // Offline training
  int epochs = 12;
  int batch_size = 16;
  double lr = 1e-3;
  // Evaluation
  int eval_scenes = 200;
  int eval_obstacles_min = 3;
  int eval_obstacles_max = 7;
  int fixed_switch_step = 30;
  std::vector<std::string> variants = ablation_variant_names();
  std::vector<int> clutter_levels = {3, 4, 5, 6, 7};
  bool run_clutter_sweep = true;
  int clutter_scenes_per_level = 200;
  int threads = 1;
  SimParams sim;
};

struct AblationRow {
  std::string variant;
  int seed_index = 0;
  EvalReport report;
};

struct VariantSummary {
  double mean_success = 0.0;
  double min_success = 1.0;
  double max_success = 0.0;
  double mean_collision = 0.0;
  double mean_reward = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::map<std::string, VariantSummary> summary;
  std::vector<std::pair<int, EvalReport>> clutter_sweep;  // (n_obstacles, report)
};

inline OfflineConfig variant_offline_config(const std::string& variant,
                                            const AblationConfig& cfg,
                                            std::uint64_t seed) {
  OfflineConfig c;
  c.epochs = cfg.epochs;
  c.batch_size = cfg.batch_size;
  c.lr = cfg.lr;
  c.seed = seed;
  if (variant == "bc") {
    c.zero_latent = true;
    c.train_sampler = false;
  } else if (variant == "no-policy-loss") {
    c.sampler_policy_loss = false;
  }
  return c;
}

inline EvalProtocol variant_protocol(const std::string& variant, int fixed_switch_step) {
  EvalProtocol p;
  p.switch_rule = SwitchRule::fixed_step;
  p.fixed_switch_step = fixed_switch_step;
  if (variant == "bc" || variant == "zeros") {
    p.select = PlanSelect::fixed_zero;
  } else if (variant == "single-plan") {
    p.select = PlanSelect::single_draw;
  } else {
    p.select = PlanSelect::random;  // fresh plan at every replanning event
  }
  return p;
}

// Which offline training a variant evaluates: bc and no-policy-loss train
// their own bundles; zeros, single-plan and hcg share the full HCG bundle.
inline std::string variant_bundle_kind(const std::string& variant) {
  if (variant == "bc" || variant == "no-policy-loss") return variant;
  return "hcg";
}

// Full scaled ablation: per seed, generate demonstrations, train the needed
// bundles, evaluate every variant on a shared held-out scene set, then sweep
// clutter levels with the full system.
inline AblationResult run_ablation(const AblationConfig& cfg,
                                   std::vector<LossCurvePoint>* curves_out = nullptr) {
  AblationResult result;

  const std::vector<Scene> eval_scenes =
      make_scene_set(derive_seed(cfg.seed, "ablation_eval"), cfg.eval_scenes,
                     cfg.eval_obstacles_min, cfg.eval_obstacles_max, cfg.threads);
  HrlHyper hyper;

  for (int seed_index = 0; seed_index < cfg.n_seeds; ++seed_index) {
    const std::uint64_t seed = derive_seed(cfg.seed, "ablation_seed", seed_index);

    DatasetConfig dcfg;
    dcfg.n_scenes = cfg.train_scenes;
    dcfg.obstacles_min = cfg.train_obstacles_min;
    dcfg.obstacles_max = cfg.train_obstacles_max;
    dcfg.goals_per_scene = cfg.goals_per_scene;
    dcfg.seed = derive_seed(seed, "demos");
    dcfg.sim = cfg.sim;
    dcfg.threads = cfg.threads;
    const DemoDataset demos = generate_dataset(dcfg);

    std::map<std::string, ModelBundle> bundles;
    for (const std::string& variant : cfg.variants) {
      const std::string kind = variant_bundle_kind(variant);
      if (bundles.count(kind)) continue;
      ModelBundle bundle(derive_seed(seed, "init"));
      const OfflineStats stats =
          train_offline(bundle, demos, variant_offline_config(kind, cfg, seed));
      if (curves_out) {
        for (LossCurvePoint p : stats.curves) {
          p.name = kind + "." + std::to_string(seed_index) + "." + p.name;
          curves_out->push_back(std::move(p));
        }
      }
      bundles.emplace(kind, std::move(bundle));
    }

    for (const std::string& variant : cfg.variants) {
      const ModelBundle& bundle = bundles.at(variant_bundle_kind(variant));
      const EvalReport report =
          evaluate(bundle, eval_scenes, hyper, cfg.sim,
                   variant_protocol(variant, cfg.fixed_switch_step),
                   derive_seed(seed, "ablation_eval_run"), cfg.threads);
      result.rows.push_back({variant, seed_index, report});
    }

    if (cfg.run_clutter_sweep && seed_index == 0) {
      const ModelBundle& bundle = bundles.at("hcg");
      for (int level : cfg.clutter_levels) {
        const std::vector<Scene> level_scenes =
            make_scene_set(derive_seed(cfg.seed, "clutter_eval", level),
                           cfg.clutter_scenes_per_level, level, level, cfg.threads);
        const EvalReport report =
            evaluate(bundle, level_scenes, hyper, cfg.sim,
                     variant_protocol("hcg", cfg.fixed_switch_step),
                     derive_seed(seed, "clutter_run", level), cfg.threads);
        result.clutter_sweep.push_back({level, report});
      }
    }
  }

  for (const std::string& variant : cfg.variants) {
    VariantSummary s;
    int n = 0;
    for (const AblationRow& row : result.rows) {
      if (row.variant != variant) continue;
      s.mean_success += row.report.success_rate;
      s.mean_collision += row.report.collision_rate;
      s.mean_reward += row.report.mean_reward;
      s.min_success = std::min(s.min_success, row.report.success_rate);
      s.max_success = std::max(s.max_success, row.report.success_rate);
      ++n;
    }
    if (n > 0) {
      s.mean_success /= n;
      s.mean_collision /= n;
      s.mean_reward /= n;
    }
    result.summary[variant] = s;
  }
  return result;
}

inline void write_ablation_csv(const std::string& path, const AblationResult& result) {
  std::ofstream out(path);
  out << "variant,seed_index,n_episodes,success_rate,collision_rate,timeout_rate,mean_reward\n";
  for (const AblationRow& row : result.rows) {
    out << row.variant << "," << row.seed_index << "," << row.report.n_episodes << ","
        << format_double(row.report.success_rate) << ","
        << format_double(row.report.collision_rate) << ","
        << format_double(row.report.timeout_rate) << ","
        << format_double(row.report.mean_reward) << "\n";
  }
  for (const auto& [level, report] : result.clutter_sweep) {
    out << "clutter_" << level << ",0," << report.n_episodes << ","
        << format_double(report.success_rate) << ","
        << format_double(report.collision_rate) << ","
        << format_double(report.timeout_rate) << ","
        << format_double(report.mean_reward) << "\n";
  }
}

}  // namespace hcg
