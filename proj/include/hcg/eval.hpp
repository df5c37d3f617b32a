#pragma once

#include "hcg/hrl.hpp"
#include "hcg/parallel.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace hcg {

struct EvalProtocol {
  PlanSelect select = PlanSelect::random;
  SwitchRule switch_rule = SwitchRule::fixed_step;
  int fixed_switch_step = 30;
};

struct ClutterRow {
  int n_obstacles = 0;
  int n_episodes = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_reward = 0.0;
};

struct EvalReport {
  int n_episodes = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_reward = 0.0;
  double mean_steps = 0.0;
  std::vector<ClutterRow> per_clutter;
};

struct EpisodeOutcome {
  Outcome outcome = Outcome::ongoing;
  double reward = 0.0;
  int steps = 0;
  int n_obstacles = 0;
};

// Aggregates outcomes into rates. mean_reward equals
// success_rate - collision_rate by the sparse-reward identity.
inline EvalReport aggregate_outcomes(const std::vector<EpisodeOutcome>& outcomes) {
  EvalReport report;
  report.n_episodes = static_cast<int>(outcomes.size());
  if (outcomes.empty()) return report;
  std::map<int, std::vector<const EpisodeOutcome*>> by_clutter;
  double steps = 0.0;
  for (const EpisodeOutcome& e : outcomes) {
    report.success_rate += e.outcome == Outcome::success;
    report.collision_rate += e.outcome == Outcome::collision;
    report.timeout_rate += e.outcome == Outcome::timeout;
    report.mean_reward += e.reward;
    steps += e.steps;
    by_clutter[e.n_obstacles].push_back(&e);
  }
  const double n = report.n_episodes;
  report.success_rate /= n;
  report.collision_rate /= n;
  report.timeout_rate /= n;
  report.mean_reward /= n;
  report.mean_steps = steps / n;
  for (const auto& [level, items] : by_clutter) {
    ClutterRow row;
    row.n_obstacles = level;
    row.n_episodes = static_cast<int>(items.size());
    for (const EpisodeOutcome* e : items) {
      row.success_rate += e->outcome == Outcome::success;
      row.collision_rate += e->outcome == Outcome::collision;
      row.timeout_rate += e->outcome == Outcome::timeout;
      row.mean_reward += e->reward;
    }
    row.success_rate /= row.n_episodes;
    row.collision_rate /= row.n_episodes;
    row.timeout_rate /= row.n_episodes;
    row.mean_reward /= row.n_episodes;
    report.per_clutter.push_back(row);
  }
  return report;
}

// Deterministic scene set: obstacle counts cycle through [min, max].
inline std::vector<Scene> make_scene_set(std::uint64_t seed, int n, int obstacles_min,
                                         int obstacles_max, int threads = 1) {
  std::vector<Scene> scenes(n);
  const int span = obstacles_max - obstacles_min + 1;
  parallel_for(n, threads, [&](int i) {
    scenes[i] = sample_scene(derive_seed(seed, "scene_set", i), obstacles_min + i % span);
  });
  return scenes;
}

// Runs one eval episode per scene under the given protocol; episodes are
// independent and merged in scene order, so the report is deterministic in
// the seed regardless of thread count.
inline EvalReport evaluate(const ModelBundle& bundle, const std::vector<Scene>& scenes,
                           const HrlHyper& hyper, const SimParams& sim,
                           const EvalProtocol& protocol, std::uint64_t seed,
                           int threads = 1,
                           std::vector<EpisodeRecord>* records_out = nullptr) {
  std::vector<EpisodeOutcome> outcomes(scenes.size());
  std::vector<EpisodeRecord> records(records_out ? scenes.size() : 0);
  parallel_for(static_cast<int>(scenes.size()), threads, [&](int i) {
    EpisodeOptions opts;
    opts.train = false;
    opts.select = protocol.select;
    opts.switch_rule = protocol.switch_rule;
    opts.fixed_switch_step = protocol.fixed_switch_step;
    opts.seed = derive_seed(seed, "eval_episode", i);
    EpisodeRecord rec = execute_episode(scenes[i], bundle, hyper, sim, opts);
    outcomes[i] = {rec.outcome, rec.total_reward, rec.steps,
                   static_cast<int>(scenes[i].obstacles.size())};
    if (records_out) records[i] = std::move(rec);
  });
  if (records_out) *records_out = std::move(records);
  return aggregate_outcomes(outcomes);
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["n_episodes"] = r.n_episodes;
  j["success_rate"] = r.success_rate;
  j["collision_rate"] = r.collision_rate;
  j["timeout_rate"] = r.timeout_rate;
  j["mean_reward"] = r.mean_reward;
  j["mean_steps"] = r.mean_steps;
  j["per_clutter"] = nlohmann::json::array();
  for (const ClutterRow& row : r.per_clutter) {
    j["per_clutter"].push_back({{"n_obstacles", row.n_obstacles},
                                {"n_episodes", row.n_episodes},
                                {"success_rate", row.success_rate},
                                {"collision_rate", row.collision_rate},
                                {"timeout_rate", row.timeout_rate},
                                {"mean_reward", row.mean_reward}});
  }
  return j;
}

}  // namespace hcg
