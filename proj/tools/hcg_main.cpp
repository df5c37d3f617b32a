// hcg: hierarchical latent-plan grasping in planar clutter.
//
// Subcommands: gen-scenes, gen-demos, train-offline, train-online, eval,
// ablate, plot, inspect, rerun. Every run writes its artifacts plus a
// run_manifest.json; rerun re-executes a manifest and reproduces the
// artifacts byte for byte (outputs are merged in index order, so thread
// count does not change them).

#include <CLI11.hpp>

#include "hcg/harness.hpp"
#include "hcg/io.hpp"
#include "hcg/nn/checkpoint.hpp"
#include "hcg/plot.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace hcg::cli {

int effective_threads(int requested) {
  return requested > 0 ? requested : default_thread_count();
}

// Applies config-file values for flags the user did not pass explicitly.
// Unknown keys are errors.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::vector<std::string> allowed;
  for (const CLI::Option* opt : sub->get_options()) {
    std::string name = opt->get_single_name();
    if (!name.empty() && name != "config" && name != "help") allowed.push_back(name);
  }
  const json cfg = load_config_json(path, allowed);
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = sub->get_option("--" + key);
    if (opt->count() > 0) continue;  // explicit flag wins
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else {
      text = value.dump();
    }
    try {
      opt->add_result(text);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config field \"" + key + "\" in " + path + ": " + e.what());
    }
  }
}

std::string prepare_out_dir(const std::string& out) {
  const std::string dir = resolve_out(out);
  fs::create_directories(dir);
  return dir;
}

void require_artifact(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingArtifactError(what + " not found: " + path);
}

// --- gen-scenes ---------------------------------------------------------------

struct GenScenesCfg {
  std::uint64_t seed = 0;
  int n_scenes = 10;
  int obstacles_min = 3;
  int obstacles_max = 7;
  int threads = 0;
  std::string out = "scenes";
};

json to_json(const GenScenesCfg& c) {
  return {{"seed", c.seed},
          {"n_scenes", c.n_scenes},
          {"obstacles_min", c.obstacles_min},
          {"obstacles_max", c.obstacles_max},
          {"threads", c.threads},
          {"out", c.out}};
}

GenScenesCfg gen_scenes_from_json(const json& j) {
  GenScenesCfg c;
  c.seed = j.at("seed");
  c.n_scenes = j.at("n_scenes");
  c.obstacles_min = j.at("obstacles_min");
  c.obstacles_max = j.at("obstacles_max");
  c.threads = j.at("threads");
  c.out = j.at("out");
  return c;
}

int run_gen_scenes(const GenScenesCfg& c, const std::string& out_override = "") {
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);
  const auto scenes = make_scene_set(c.seed, c.n_scenes, c.obstacles_min, c.obstacles_max,
                                     effective_threads(c.threads));
  std::vector<std::string> artifacts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.json", i);
    std::ofstream out(dir + "/" + name);
    out << scene_to_json(scenes[i]).dump(1) << "\n";
    artifacts.push_back(name);
  }
  write_manifest(dir, "gen-scenes", to_json(c), artifacts, effective_threads(c.threads));
  std::cout << "wrote " << scenes.size() << " scenes to " << dir << "\n";
  return 0;
}

// --- gen-demos ----------------------------------------------------------------

struct GenDemosCfg {
  std::uint64_t seed = 0;
  int n_scenes = 50;
  int obstacles_min = 3;
  int obstacles_max = 5;
  int goals_per_scene = 3;
  double noise = 0.002;
  int threads = 0;
  std::string out = "demos";
};

json to_json(const GenDemosCfg& c) {
  return {{"seed", c.seed},           {"n_scenes", c.n_scenes},
          {"obstacles_min", c.obstacles_min}, {"obstacles_max", c.obstacles_max},
          {"goals_per_scene", c.goals_per_scene}, {"noise", c.noise},
          {"threads", c.threads},     {"out", c.out}};
}

GenDemosCfg gen_demos_from_json(const json& j) {
  GenDemosCfg c;
  c.seed = j.at("seed");
  c.n_scenes = j.at("n_scenes");
  c.obstacles_min = j.at("obstacles_min");
  c.obstacles_max = j.at("obstacles_max");
  c.goals_per_scene = j.at("goals_per_scene");
  c.noise = j.at("noise");
  c.threads = j.at("threads");
  c.out = j.at("out");
  return c;
}

int run_gen_demos(const GenDemosCfg& c, const std::string& out_override = "") {
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);
  DatasetConfig dcfg;
  dcfg.n_scenes = c.n_scenes;
  dcfg.obstacles_min = c.obstacles_min;
  dcfg.obstacles_max = c.obstacles_max;
  dcfg.goals_per_scene = c.goals_per_scene;
  dcfg.seed = c.seed;
  dcfg.sim.obs_noise = c.noise;
  dcfg.threads = effective_threads(c.threads);
  const DemoDataset ds = generate_dataset(dcfg);
  save_dataset(ds, dir);
  write_manifest(dir, "gen-demos", to_json(c), {"manifest.json", "blocks.bin"},
                 dcfg.threads);
  double mean_goals = 0.0;
  for (int k : ds.demos_per_scene) mean_goals += k;
  mean_goals /= std::max<std::size_t>(1, ds.demos_per_scene.size());
  std::cout << "wrote " << ds.demos.size() << " demos (" << mean_goals
            << " goals/scene mean, " << ds.skipped_goals << " goals skipped) to " << dir
            << "\n";
  return 0;
}

// --- train-offline --------------------------------------------------------------

struct TrainOfflineCfg {
  std::string dataset;
  std::uint64_t seed = 0;
  int epochs = 12;
  int batch_size = 16;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
  std::string variant = "hcg";  // hcg | bc | no-policy-loss
  bool save_epoch_checkpoints = false;
  std::string out = "offline_run";
};

json to_json(const TrainOfflineCfg& c) {
  return {{"dataset", c.dataset}, {"seed", c.seed},
          {"epochs", c.epochs},   {"batch_size", c.batch_size},
          {"lr", c.lr},           {"holdout_fraction", c.holdout_fraction},
          {"variant", c.variant}, {"save_epoch_checkpoints", c.save_epoch_checkpoints},
          {"out", c.out}};
}

TrainOfflineCfg train_offline_from_json(const json& j) {
  TrainOfflineCfg c;
  c.dataset = j.at("dataset");
  c.seed = j.at("seed");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.holdout_fraction = j.at("holdout_fraction");
  c.variant = j.at("variant");
  c.save_epoch_checkpoints = j.at("save_epoch_checkpoints");
  c.out = j.at("out");
  return c;
}

int run_train_offline(const TrainOfflineCfg& c, const std::string& out_override = "") {
  if (c.variant != "hcg" && c.variant != "bc" && c.variant != "no-policy-loss") {
    throw ConfigError("variant must be hcg, bc, or no-policy-loss (got " + c.variant + ")");
  }
  require_artifact(resolve_out(c.dataset) + "/manifest.json", "dataset");
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);
  const DemoDataset ds = load_dataset(resolve_out(c.dataset));

  OfflineConfig ocfg;
  ocfg.epochs = c.epochs;
  ocfg.batch_size = c.batch_size;
  ocfg.lr = c.lr;
  ocfg.seed = c.seed;
  ocfg.holdout_fraction = c.holdout_fraction;
  if (c.variant == "bc") {
    ocfg.zero_latent = true;
    ocfg.train_sampler = false;
  } else if (c.variant == "no-policy-loss") {
    ocfg.sampler_policy_loss = false;
  }
  if (c.save_epoch_checkpoints) ocfg.checkpoint_dir = dir + "/checkpoints";

  ModelBundle bundle(derive_seed(c.seed, "init"));
  const OfflineStats stats = train_offline(bundle, ds, ocfg);
  bundle.save(dir + "/bundle.ckpt");
  write_loss_curves_csv(dir + "/loss_curves.csv", stats.curves);
  write_manifest(dir, "train-offline", to_json(c), {"bundle.ckpt", "loss_curves.csv"}, 1);
  std::cout << "trained " << c.variant << " on " << stats.train_demos << " demos; holdout "
            << "traj loss " << stats.initial_holdout_traj << " -> "
            << stats.final_holdout_traj << " (zero-latent " << stats.final_holdout_traj_zero
            << ")\n";
  return 0;
}

// --- train-online ----------------------------------------------------------------

struct TrainOnlineCfg {
  std::string bundle;
  std::uint64_t seed = 0;
  int episodes = 300;
  int batch_size = 32;
  int grad_steps = 4;
  double lr = 1e-3;
  int target_sync = 100;
  double eps_start = 0.2;
  double eps_end = 0.05;
  int obstacles_min = 3;
  int obstacles_max = 7;
  int parallel_actors = 1;
  std::string out = "online_run";
};

json to_json(const TrainOnlineCfg& c) {
  return {{"bundle", c.bundle},       {"seed", c.seed},
          {"episodes", c.episodes},   {"batch_size", c.batch_size},
          {"grad_steps", c.grad_steps}, {"lr", c.lr},
          {"target_sync", c.target_sync}, {"eps_start", c.eps_start},
          {"eps_end", c.eps_end},     {"obstacles_min", c.obstacles_min},
          {"obstacles_max", c.obstacles_max}, {"parallel_actors", c.parallel_actors},
          {"out", c.out}};
}

TrainOnlineCfg train_online_from_json(const json& j) {
  TrainOnlineCfg c;
  c.bundle = j.at("bundle");
  c.seed = j.at("seed");
  c.episodes = j.at("episodes");
  c.batch_size = j.at("batch_size");
  c.grad_steps = j.at("grad_steps");
  c.lr = j.at("lr");
  c.target_sync = j.at("target_sync");
  c.eps_start = j.at("eps_start");
  c.eps_end = j.at("eps_end");
  c.obstacles_min = j.at("obstacles_min");
  c.obstacles_max = j.at("obstacles_max");
  c.parallel_actors = j.at("parallel_actors");
  c.out = j.at("out");
  return c;
}

int run_train_online(const TrainOnlineCfg& c, const std::string& out_override = "") {
  require_artifact(resolve_out(c.bundle), "bundle checkpoint");
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);

  ModelBundle bundle(derive_seed(c.seed, "init"));
  bundle.load(resolve_out(c.bundle));

  OnlineConfig ocfg;
  ocfg.episodes = c.episodes;
  ocfg.batch_size = c.batch_size;
  ocfg.grad_steps_per_episode = c.grad_steps;
  ocfg.lr = c.lr;
  ocfg.target_sync_every = c.target_sync;
  ocfg.eps_start = c.eps_start;
  ocfg.eps_end = c.eps_end;
  ocfg.seed = c.seed;
  ocfg.obstacles_min = c.obstacles_min;
  ocfg.obstacles_max = c.obstacles_max;
  ocfg.actors = std::max(1, c.parallel_actors);

  const OnlineStats stats = train_online(bundle, ocfg);
  bundle.save(dir + "/bundle_online.ckpt");
  write_reward_curve_csv(dir + "/reward_curve.csv", stats.episodes);
  write_manifest(dir, "train-online", to_json(c), {"bundle_online.ckpt", "reward_curve.csv"},
                 ocfg.actors);
  double tail_reward = 0.0;
  const int tail = std::min<int>(50, stats.episodes.size());
  for (int i = 0; i < tail; ++i) {
    tail_reward += stats.episodes[stats.episodes.size() - 1 - i].reward;
  }
  std::cout << "online training done: " << stats.gradient_steps << " gradient steps, "
            << "mean reward over last " << tail << " episodes "
            << (tail ? tail_reward / tail : 0.0) << "\n";
  return 0;
}

// --- eval ------------------------------------------------------------------------

struct EvalCfg {
  std::string bundle;
  std::string from_log;
  std::uint64_t seed = 0;
  int n_scenes = 100;
  int obstacles_min = 3;
  int obstacles_max = 7;
  std::string select = "critic";           // critic | random | single | zeros
  std::string switch_rule = "classifier";  // classifier | fixed | never
  int switch_step = 30;
  bool save_episodes = false;
  int threads = 0;
  std::string out = "eval_run";
};

json to_json(const EvalCfg& c) {
  return {{"bundle", c.bundle},
          {"from_log", c.from_log},
          {"seed", c.seed},
          {"n_scenes", c.n_scenes},
          {"obstacles_min", c.obstacles_min},
          {"obstacles_max", c.obstacles_max},
          {"select", c.select},
          {"switch_rule", c.switch_rule},
          {"switch_step", c.switch_step},
          {"save_episodes", c.save_episodes},
          {"threads", c.threads},
          {"out", c.out}};
}

EvalCfg eval_from_json(const json& j) {
  EvalCfg c;
  c.bundle = j.at("bundle");
  c.from_log = j.at("from_log");
  c.seed = j.at("seed");
  c.n_scenes = j.at("n_scenes");
  c.obstacles_min = j.at("obstacles_min");
  c.obstacles_max = j.at("obstacles_max");
  c.select = j.at("select");
  c.switch_rule = j.at("switch_rule");
  c.switch_step = j.at("switch_step");
  c.save_episodes = j.at("save_episodes");
  c.threads = j.at("threads");
  c.out = j.at("out");
  return c;
}

EvalProtocol protocol_from(const EvalCfg& c) {
  EvalProtocol p;
  if (c.select == "critic") {
    p.select = PlanSelect::critic;
  } else if (c.select == "random") {
    p.select = PlanSelect::random;
  } else if (c.select == "single") {
    p.select = PlanSelect::single_draw;
  } else if (c.select == "zeros") {
    p.select = PlanSelect::fixed_zero;
  } else {
    throw ConfigError("select must be critic|random|single|zeros (got " + c.select + ")");
  }
  if (c.switch_rule == "classifier") {
    p.switch_rule = SwitchRule::classifier;
  } else if (c.switch_rule == "fixed") {
    p.switch_rule = SwitchRule::fixed_step;
  } else if (c.switch_rule == "never") {
    p.switch_rule = SwitchRule::never;
  } else {
    throw ConfigError("switch_rule must be classifier|fixed|never (got " + c.switch_rule +
                      ")");
  }
  p.fixed_switch_step = c.switch_step;
  return p;
}

int run_eval(const EvalCfg& c, const std::string& out_override = "") {
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);

  EvalReport report;
  std::vector<std::string> artifacts{"eval_report.json", "eval_report.csv"};
  if (!c.from_log.empty()) {
    report = aggregate_outcomes(read_episode_log_outcomes(resolve_out(c.from_log)));
  } else {
    require_artifact(resolve_out(c.bundle), "bundle checkpoint");
    ModelBundle bundle(derive_seed(c.seed, "init"));
    bundle.load(resolve_out(c.bundle));
    const auto scenes = make_scene_set(derive_seed(c.seed, "eval_scenes"), c.n_scenes,
                                       c.obstacles_min, c.obstacles_max,
                                       effective_threads(c.threads));
    HrlHyper hyper;
    SimParams sim;
    std::vector<EpisodeRecord> records;
    report = evaluate(bundle, scenes, hyper, sim, protocol_from(c), c.seed,
                      effective_threads(c.threads), c.save_episodes ? &records : nullptr);
    if (c.save_episodes) {
      EpisodeLogWriter log(dir, "episodes");
      for (std::size_t i = 0; i < records.size(); ++i) {
        log.write_episode(static_cast<int>(i), scenes[i], records[i]);
      }
      artifacts.push_back("episodes.jsonl");
      artifacts.push_back("episodes.bin");
    }
  }

  std::ofstream jr(dir + "/eval_report.json");
  jr << eval_report_to_json(report).dump(1) << "\n";
  write_eval_report_csv(dir + "/eval_report.csv", report);
  write_manifest(dir, "eval", to_json(c), artifacts, effective_threads(c.threads));
  std::cout << "episodes " << report.n_episodes << " success " << report.success_rate
            << " collision " << report.collision_rate << " timeout " << report.timeout_rate
            << " mean_reward " << report.mean_reward << "\n";
  return 0;
}

// --- ablate -----------------------------------------------------------------------

struct AblateCfg {
  std::uint64_t seed = 0;
  std::string variants = "bc,zeros,single-plan,no-policy-loss,hcg";
  int n_seeds = 3;
  int train_scenes = 100;
  int goals_per_scene = 3;
  int epochs = 12;
  int eval_scenes = 200;
  int clutter_scenes = 200;
  bool clutter_sweep = true;
  int threads = 0;
  std::string out = "ablation";
};

json to_json(const AblateCfg& c) {
  return {{"seed", c.seed},
          {"variants", c.variants},
          {"n_seeds", c.n_seeds},
          {"train_scenes", c.train_scenes},
          {"goals_per_scene", c.goals_per_scene},
          {"epochs", c.epochs},
          {"eval_scenes", c.eval_scenes},
          {"clutter_scenes", c.clutter_scenes},
          {"clutter_sweep", c.clutter_sweep},
          {"threads", c.threads},
          {"out", c.out}};
}

AblateCfg ablate_from_json(const json& j) {
  AblateCfg c;
  c.seed = j.at("seed");
  c.variants = j.at("variants");
  c.n_seeds = j.at("n_seeds");
  c.train_scenes = j.at("train_scenes");
  c.goals_per_scene = j.at("goals_per_scene");
  c.epochs = j.at("epochs");
  c.eval_scenes = j.at("eval_scenes");
  c.clutter_scenes = j.at("clutter_scenes");
  c.clutter_sweep = j.at("clutter_sweep");
  c.threads = j.at("threads");
  c.out = j.at("out");
  return c;
}

int run_ablate(const AblateCfg& c, const std::string& out_override = "") {
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);
  AblationConfig acfg;
  acfg.seed = c.seed;
  acfg.n_seeds = c.n_seeds;
  acfg.train_scenes = c.train_scenes;
  acfg.goals_per_scene = c.goals_per_scene;
  acfg.epochs = c.epochs;
  acfg.eval_scenes = c.eval_scenes;
  acfg.clutter_scenes_per_level = c.clutter_scenes;
  acfg.run_clutter_sweep = c.clutter_sweep;
  acfg.threads = effective_threads(c.threads);
  acfg.variants.clear();
  std::stringstream ss(c.variants);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto& known = ablation_variant_names();
    if (std::find(known.begin(), known.end(), item) == known.end()) {
      throw ConfigError("unknown ablation variant \"" + item + "\"");
    }
    acfg.variants.push_back(item);
  }

  std::vector<LossCurvePoint> curves;
  const AblationResult result = run_ablation(acfg, &curves);
  write_ablation_csv(dir + "/ablation_report.csv", result);
  write_loss_curves_csv(dir + "/loss_curves.csv", curves);

  if (!result.clutter_sweep.empty()) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& [level, report] : result.clutter_sweep) {
      labels.push_back(std::to_string(level));
      values.push_back(report.success_rate);
    }
    write_bar_chart_svg(dir + "/clutter_success.svg", "success rate vs clutter level",
                        labels, values);
    std::ofstream csv(dir + "/clutter_success.csv");
    csv << "n_obstacles,success_rate\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
      csv << labels[i] << "," << format_double(values[i]) << "\n";
    }
  }
  write_manifest(dir, "ablate", to_json(c),
                 {"ablation_report.csv", "loss_curves.csv"}, acfg.threads);
  for (const auto& [variant, summary] : result.summary) {
    std::cout << variant << ": success " << summary.mean_success << " ["
              << summary.min_success << ", " << summary.max_success << "] collision "
              << summary.mean_collision << "\n";
  }
  return 0;
}

// --- plot -------------------------------------------------------------------------

struct PlotCfg {
  std::string losses;
  std::string reward;
  std::string report;
  std::string dataset;
  std::string bundle;
  std::uint64_t seed = 0;
  std::string out = "plots";
};

json to_json(const PlotCfg& c) {
  return {{"losses", c.losses}, {"reward", c.reward},   {"report", c.report},
          {"dataset", c.dataset}, {"bundle", c.bundle}, {"seed", c.seed},
          {"out", c.out}};
}

PlotCfg plot_from_json(const json& j) {
  PlotCfg c;
  c.losses = j.at("losses");
  c.reward = j.at("reward");
  c.report = j.at("report");
  c.dataset = j.at("dataset");
  c.bundle = j.at("bundle");
  c.seed = j.at("seed");
  c.out = j.at("out");
  return c;
}

int run_plot(const PlotCfg& c, const std::string& out_override = "") {
  const std::string dir = prepare_out_dir(out_override.empty() ? c.out : out_override);
  std::vector<std::string> artifacts;

  if (!c.losses.empty()) {
    const auto curves = read_loss_curves_csv(resolve_out(c.losses));
    std::map<std::string, Series> by_name;
    for (const LossCurvePoint& p : curves) {
      Series& s = by_name[p.split + "." + p.name];
      s.name = p.split + "." + p.name;
      s.x.push_back(p.epoch);
      s.y.push_back(p.value);
    }
    std::vector<Series> series;
    for (auto& [k, v] : by_name) series.push_back(std::move(v));
    write_line_chart_svg(dir + "/loss_curves.svg", "training losses", series);
    write_loss_curves_csv(dir + "/loss_curves.csv", curves);
    artifacts.push_back("loss_curves.svg");
  }

  if (!c.reward.empty()) {
    std::ifstream in(resolve_out(c.reward));
    if (!in) throw MissingArtifactError("reward csv not found: " + c.reward);
    std::string line;
    std::getline(in, line);
    Series s;
    s.name = "episode reward";
    std::ofstream twin(dir + "/reward_curve.csv");
    twin << line << "\n";
    while (std::getline(in, line)) {
      twin << line << "\n";
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      s.x.push_back(std::stod(line.substr(0, c1)));
      s.y.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    write_line_chart_svg(dir + "/reward_curve.svg", "episode rewards", {s});
    artifacts.push_back("reward_curve.svg");
  }

  if (!c.report.empty()) {
    std::ifstream in(resolve_out(c.report));
    if (!in) throw MissingArtifactError("report not found: " + c.report);
    json j;
    in >> j;
    std::vector<std::string> labels;
    std::vector<double> values;
    std::ofstream csv(dir + "/clutter_success.csv");
    csv << "n_obstacles,success_rate\n";
    for (const auto& row : j.at("per_clutter")) {
      labels.push_back(std::to_string(row.at("n_obstacles").get<int>()));
      values.push_back(row.at("success_rate").get<double>());
      csv << labels.back() << "," << format_double(values.back()) << "\n";
    }
    write_bar_chart_svg(dir + "/clutter_success.svg", "success rate vs clutter level",
                        labels, values);
    artifacts.push_back("clutter_success.svg");
  }

  // Latent scatter: 2-D PCA of plan embeddings, one color group per demo.
  if (!c.dataset.empty() && !c.bundle.empty()) {
    require_artifact(resolve_out(c.bundle), "bundle checkpoint");
    const DemoDataset ds = load_dataset(resolve_out(c.dataset));
    ModelBundle bundle(derive_seed(c.seed, "init"));
    bundle.load(resolve_out(c.bundle));
    std::vector<nn::Tensor> zs;
    std::vector<int> groups;
    const int max_demos = std::min<int>(40, ds.demos.size());
    for (int i = 0; i < max_demos; ++i) {
      const Demonstration& d = ds.demos[i];
      for (std::size_t t = 0; t < d.records.size(); t += 6) {
        const std::vector<Pose> suffix(d.plan.begin() + static_cast<long>(t), d.plan.end());
        zs.push_back(encode_plan(bundle.theta, d.records[t].obs, suffix).z);
        groups.push_back(i);
      }
    }
    const auto [xs, ys] = pca_2d(zs);
    write_scatter_svg(dir + "/latent_scatter.svg",
                      "plan embeddings (2-D PCA), colored by demo", xs, ys, groups);
    std::ofstream csv(dir + "/latent_scatter.csv");
    csv << "pc1,pc2,demo\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      csv << format_double(xs[i]) << "," << format_double(ys[i]) << "," << groups[i] << "\n";
    }
    artifacts.push_back("latent_scatter.svg");
  }

  if (artifacts.empty()) {
    throw ConfigError("plot: nothing to do (give --losses, --reward, --report, or "
                      "--dataset with --bundle)");
  }
  write_manifest(dir, "plot", to_json(c), artifacts, 1);
  std::cout << "wrote " << artifacts.size() << " plots to " << dir << "\n";
  return 0;
}

// --- inspect ----------------------------------------------------------------------

int run_inspect(const std::string& path_in) {
  const std::string path = resolve_out(path_in);
  if (!fs::exists(path)) throw MissingArtifactError("nothing to inspect at " + path);

  if (fs::is_directory(path) && fs::exists(path + "/manifest.json")) {
    std::ifstream in(path + "/manifest.json");
    json j;
    in >> j;
    if (j.contains("magic") && j.at("magic") == kDemoMagic) {
      const DemoDataset ds = load_dataset(path);
      std::size_t steps = 0, points = 0;
      for (const auto& d : ds.demos) {
        steps += d.records.size();
        for (const auto& r : d.records) points += r.obs.points.size();
      }
      std::cout << "demo dataset: " << ds.demos.size() << " demos over "
                << ds.demos_per_scene.size() << " scenes, " << steps << " steps, "
                << points << " cloud points, " << ds.skipped_goals << " goals skipped\n";
      return 0;
    }
  }
  if (path.size() > 5 && path.substr(path.size() - 5) == ".ckpt") {
    const auto tensors = nn::load_checkpoint(path);
    std::size_t total = 0;
    for (const auto& [name, t] : tensors) total += t.size();
    std::cout << "checkpoint: " << tensors.size() << " tensors, " << total
              << " parameters\n";
    for (const auto& [name, t] : tensors) {
      std::cout << "  " << name << " [" << t.rows << "x" << t.cols << "]\n";
    }
    return 0;
  }
  if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") {
    const auto outcomes = read_episode_log_outcomes(path);
    const EvalReport r = aggregate_outcomes(outcomes);
    std::cout << "episode log: " << r.n_episodes << " episodes, success "
              << r.success_rate << ", collision " << r.collision_rate << ", timeout "
              << r.timeout_rate << "\n";
    return 0;
  }
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (...) {
    throw ConfigError("inspect: unrecognized file " + path);
  }
  if (j.contains("target")) {
    const Scene s = scene_from_json(j);
    std::cout << "scene seed " << s.seed << ": target r=" << s.target.radius << " at ("
              << s.target.center.x() << ", " << s.target.center.y() << "), "
              << s.obstacles.size() << " obstacles\n";
  } else if (j.contains("success_rate")) {
    std::cout << "eval report: " << j.at("n_episodes") << " episodes, success "
              << j.at("success_rate") << ", collision " << j.at("collision_rate") << "\n";
  } else if (j.contains("command")) {
    std::cout << "run manifest: command " << j.at("command") << ", version "
              << j.at("version") << ", config hash " << j.at("config_hash") << "\n";
  } else {
    std::cout << "json file with keys:";
    for (const auto& [k, v] : j.items()) std::cout << " " << k;
    std::cout << "\n";
  }
  return 0;
}

// --- rerun ------------------------------------------------------------------------

int run_rerun(const std::string& manifest_path, const std::string& out) {
  const json m = read_manifest(resolve_out(manifest_path));
  const std::string command = m.at("command");
  const json cfg = m.at("config");
  if (command == "gen-scenes") return run_gen_scenes(gen_scenes_from_json(cfg), out);
  if (command == "gen-demos") return run_gen_demos(gen_demos_from_json(cfg), out);
  if (command == "train-offline") return run_train_offline(train_offline_from_json(cfg), out);
  if (command == "train-online") return run_train_online(train_online_from_json(cfg), out);
  if (command == "eval") return run_eval(eval_from_json(cfg), out);
  if (command == "ablate") return run_ablate(ablate_from_json(cfg), out);
  if (command == "plot") return run_plot(plot_from_json(cfg), out);
  throw ConfigError("rerun: unknown command \"" + command + "\" in manifest");
}

}  // namespace hcg::cli

int main(int argc, char** argv) {
  using namespace hcg;
  using namespace hcg::cli;

  CLI::App app{"hierarchical latent-plan grasping in planar clutter"};
  app.require_subcommand(1);

  GenScenesCfg gs;
  std::string gs_config;
  auto* sub_gs = app.add_subcommand("gen-scenes", "sample feasible cluttered scenes");
  sub_gs->add_option("--seed", gs.seed);
  sub_gs->add_option("--n-scenes", gs.n_scenes);
  sub_gs->add_option("--obstacles-min", gs.obstacles_min);
  sub_gs->add_option("--obstacles-max", gs.obstacles_max);
  sub_gs->add_option("--threads", gs.threads);
  sub_gs->add_option("--out", gs.out);
  sub_gs->add_option("--config", gs_config, "JSON config file");

  GenDemosCfg gd;
  std::string gd_config;
  auto* sub_gd = app.add_subcommand("gen-demos", "generate expert demonstrations");
  sub_gd->add_option("--seed", gd.seed);
  sub_gd->add_option("--n-scenes", gd.n_scenes);
  sub_gd->add_option("--obstacles-min", gd.obstacles_min);
  sub_gd->add_option("--obstacles-max", gd.obstacles_max);
  sub_gd->add_option("--goals-per-scene", gd.goals_per_scene);
  sub_gd->add_option("--noise", gd.noise);
  sub_gd->add_option("--threads", gd.threads);
  sub_gd->add_option("--out", gd.out);
  sub_gd->add_option("--config", gd_config, "JSON config file");

  TrainOfflineCfg to_;
  std::string to_config;
  auto* sub_to = app.add_subcommand("train-offline", "train embedding, policy and sampler");
  sub_to->add_option("--dataset", to_.dataset);
  sub_to->add_option("--seed", to_.seed);
  sub_to->add_option("--epochs", to_.epochs);
  sub_to->add_option("--batch-size", to_.batch_size);
  sub_to->add_option("--lr", to_.lr);
  sub_to->add_option("--holdout-fraction", to_.holdout_fraction);
  sub_to->add_option("--variant", to_.variant, "hcg | bc | no-policy-loss");
  sub_to->add_flag("--save-epoch-checkpoints", to_.save_epoch_checkpoints);
  sub_to->add_option("--out", to_.out);
  sub_to->add_option("--config", to_config, "JSON config file");

  TrainOnlineCfg tn;
  std::string tn_config;
  auto* sub_tn = app.add_subcommand("train-online", "train critic and option classifier");
  sub_tn->add_option("--bundle", tn.bundle);
  sub_tn->add_option("--seed", tn.seed);
  sub_tn->add_option("--episodes", tn.episodes);
  sub_tn->add_option("--batch-size", tn.batch_size);
  sub_tn->add_option("--grad-steps", tn.grad_steps);
  sub_tn->add_option("--lr", tn.lr);
  sub_tn->add_option("--target-sync", tn.target_sync);
  sub_tn->add_option("--eps-start", tn.eps_start);
  sub_tn->add_option("--eps-end", tn.eps_end);
  sub_tn->add_option("--obstacles-min", tn.obstacles_min);
  sub_tn->add_option("--obstacles-max", tn.obstacles_max);
  sub_tn->add_option("--parallel-actors", tn.parallel_actors,
                     "episode collection wave size (interleaves learning differently "
                     "than serial collection; noted in the manifest)");
  sub_tn->add_option("--out", tn.out);
  sub_tn->add_option("--config", tn_config, "JSON config file");

  EvalCfg ev;
  std::string ev_config;
  auto* sub_ev = app.add_subcommand("eval", "evaluate a bundle on held-out scenes");
  sub_ev->add_option("--bundle", ev.bundle);
  sub_ev->add_option("--from-log", ev.from_log, "aggregate an existing episode log");
  sub_ev->add_option("--seed", ev.seed);
  sub_ev->add_option("--n-scenes", ev.n_scenes);
  sub_ev->add_option("--obstacles-min", ev.obstacles_min);
  sub_ev->add_option("--obstacles-max", ev.obstacles_max);
  sub_ev->add_option("--select", ev.select, "critic | random | single | zeros");
  sub_ev->add_option("--switch-rule", ev.switch_rule, "classifier | fixed | never");
  sub_ev->add_option("--switch-step", ev.switch_step);
  sub_ev->add_flag("--save-episodes", ev.save_episodes);
  sub_ev->add_option("--threads", ev.threads);
  sub_ev->add_option("--out", ev.out);
  sub_ev->add_option("--config", ev_config, "JSON config file");

  AblateCfg ab;
  std::string ab_config;
  auto* sub_ab = app.add_subcommand("ablate", "train and compare ablation variants");
  sub_ab->add_option("--seed", ab.seed);
  sub_ab->add_option("--variants", ab.variants);
  sub_ab->add_option("--n-seeds", ab.n_seeds);
  sub_ab->add_option("--train-scenes", ab.train_scenes);
  sub_ab->add_option("--goals-per-scene", ab.goals_per_scene);
  sub_ab->add_option("--epochs", ab.epochs);
  sub_ab->add_option("--eval-scenes", ab.eval_scenes);
  sub_ab->add_option("--clutter-scenes", ab.clutter_scenes);
  sub_ab->add_flag("--clutter-sweep,!--no-clutter-sweep", ab.clutter_sweep);
  sub_ab->add_option("--threads", ab.threads);
  sub_ab->add_option("--out", ab.out);
  sub_ab->add_option("--config", ab_config, "JSON config file");

  PlotCfg pl;
  std::string pl_config;
  auto* sub_pl = app.add_subcommand("plot", "emit SVG plots with CSV twins");
  sub_pl->add_option("--losses", pl.losses, "loss_curves.csv");
  sub_pl->add_option("--reward", pl.reward, "reward_curve.csv");
  sub_pl->add_option("--report", pl.report, "eval_report.json");
  sub_pl->add_option("--dataset", pl.dataset, "demo dataset dir (with --bundle)");
  sub_pl->add_option("--bundle", pl.bundle, "bundle checkpoint (with --dataset)");
  sub_pl->add_option("--seed", pl.seed);
  sub_pl->add_option("--out", pl.out);
  sub_pl->add_option("--config", pl_config, "JSON config file");

  std::string inspect_path;
  auto* sub_in = app.add_subcommand("inspect", "summarize an artifact");
  sub_in->add_option("path", inspect_path)->required();

  std::string rr_manifest, rr_out;
  auto* sub_rr = app.add_subcommand("rerun", "re-execute a run from its manifest");
  sub_rr->add_option("--manifest", rr_manifest)->required();
  sub_rr->add_option("--out", rr_out)->required();

  try {
    app.parse(argc, argv);
    if (sub_gs->parsed()) {
      apply_config_file(sub_gs, gs_config);
      return run_gen_scenes(gs);
    }
    if (sub_gd->parsed()) {
      apply_config_file(sub_gd, gd_config);
      return run_gen_demos(gd);
    }
    if (sub_to->parsed()) {
      apply_config_file(sub_to, to_config);
      return run_train_offline(to_);
    }
    if (sub_tn->parsed()) {
      apply_config_file(sub_tn, tn_config);
      return run_train_online(tn);
    }
    if (sub_ev->parsed()) {
      apply_config_file(sub_ev, ev_config);
      return run_eval(ev);
    }
    if (sub_ab->parsed()) {
      apply_config_file(sub_ab, ab_config);
      return run_ablate(ab);
    }
    if (sub_pl->parsed()) {
      apply_config_file(sub_pl, pl_config);
      return run_plot(pl);
    }
    if (sub_in->parsed()) return run_inspect(inspect_path);
    if (sub_rr->parsed()) return run_rerun(rr_manifest, rr_out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const hcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hcg::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const hcg::TrainingDivergenceError& e) {
    std::cerr << "training divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
