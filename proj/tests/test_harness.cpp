#include <catch2/catch_amalgamated.hpp>

#include "hcg/harness.hpp"
#include "hcg/io.hpp"
#include "hcg/plot.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace hcg;
namespace fs = std::filesystem;

#ifndef HCG_CLI_PATH
#define HCG_CLI_PATH "hcg"
#endif

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HCG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
};

}  // namespace

TEST_CASE("eval report invariants on synthetic outcomes", "[harness]") {
  std::vector<EpisodeOutcome> outcomes{{Outcome::success, 1.0, 20, 3},
                                       {Outcome::collision, -1.0, 5, 4},
                                       {Outcome::timeout, 0.0, 60, 5}};
  const EvalReport r = aggregate_outcomes(outcomes);
  CHECK(r.success_rate == Catch::Approx(1.0 / 3));
  CHECK(r.collision_rate == Catch::Approx(1.0 / 3));
  CHECK(r.timeout_rate == Catch::Approx(1.0 / 3));
  CHECK(r.mean_reward == Catch::Approx(0.0).margin(1e-15));
  CHECK(r.success_rate + r.collision_rate + r.timeout_rate == Catch::Approx(1.0).margin(1e-12));
  // Sparse-reward identity on an arbitrary mix.
  Rng rng(5);
  std::vector<EpisodeOutcome> mix;
  for (int i = 0; i < 200; ++i) {
    const int k = rng.uniform_int(3);
    mix.push_back({k == 0   ? Outcome::success
                   : k == 1 ? Outcome::collision
                            : Outcome::timeout,
                   k == 0 ? 1.0 : (k == 1 ? -1.0 : 0.0), rng.uniform_int(60) + 1,
                   rng.uniform_int(5) + 3});
  }
  const EvalReport m = aggregate_outcomes(mix);
  CHECK(m.mean_reward == Catch::Approx(m.success_rate - m.collision_rate).margin(1e-12));
  CHECK(m.success_rate + m.collision_rate + m.timeout_rate == Catch::Approx(1.0).margin(1e-12));
  for (const ClutterRow& row : m.per_clutter) {
    CHECK(row.success_rate + row.collision_rate + row.timeout_rate ==
          Catch::Approx(1.0).margin(1e-12));
    CHECK(row.mean_reward ==
          Catch::Approx(row.success_rate - row.collision_rate).margin(1e-12));
  }
}

TEST_CASE("scene sets are deterministic and thread independent", "[harness]") {
  const auto a = make_scene_set(42, 8, 3, 7, 1);
  const auto b = make_scene_set(42, 8, 3, 7, 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].seed == b[i].seed);
    CHECK((a[i].target.center - b[i].target.center).norm() == 0.0);
    CHECK(a[i].obstacles.size() == b[i].obstacles.size());
  }
  // Obstacle counts cycle 3..7.
  CHECK(a[0].obstacles.size() == 3);
  CHECK(a[4].obstacles.size() == 7);
  CHECK(a[5].obstacles.size() == 3);
}

TEST_CASE("loss curve csv round trip", "[harness]") {
  TempDir tmp("hcg_csv_test");
  std::vector<LossCurvePoint> curves{{0, "holdout", "traj_z", 1.5},
                                     {1, "train", "traj_z", 0.75},
                                     {1, "train", "sampler", 0.33333333333333331}};
  write_loss_curves_csv(tmp.str("curves.csv"), curves);
  const auto back = read_loss_curves_csv(tmp.str("curves.csv"));
  REQUIRE(back.size() == curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) {
    CHECK(back[i].epoch == curves[i].epoch);
    CHECK(back[i].split == curves[i].split);
    CHECK(back[i].name == curves[i].name);
    CHECK(back[i].value == curves[i].value);
  }
}

TEST_CASE("episode log round trip preserves outcomes", "[harness]") {
  TempDir tmp("hcg_log_test");
  const Scene scene = sample_scene(31, 2);
  ModelBundle bundle(3);
  HrlHyper hyper;
  SimParams sim;
  EpisodeOptions opts;
  opts.select = PlanSelect::fixed_zero;
  opts.switch_rule = SwitchRule::fixed_step;
  opts.fixed_switch_step = 5;
  opts.seed = 77;
  const EpisodeRecord rec = execute_episode(scene, bundle, hyper, sim, opts);
  {
    EpisodeLogWriter log(tmp.str(), "episodes");
    log.write_episode(0, scene, rec);
  }
  const auto outcomes = read_episode_log_outcomes(tmp.str("episodes.jsonl"));
  REQUIRE(outcomes.size() == 1);
  CHECK(outcomes[0].outcome == rec.outcome);
  CHECK(outcomes[0].steps == rec.steps);
  // Binary sidecar holds 16 bytes per point.
  std::size_t points = 0;
  for (const auto& tr : rec.transitions) points += tr.s.points.size();
  CHECK(fs::file_size(tmp.str("episodes.bin")) == points * 16);
}

TEST_CASE("strict config loading rejects unknown keys", "[harness]") {
  TempDir tmp("hcg_cfg_test");
  {
    std::ofstream out(tmp.str("ok.json"));
    out << R"({"seed": 3, "out": "x"})";
  }
  {
    std::ofstream out(tmp.str("bad.json"));
    out << R"({"seed": 3, "bogus_key": 1})";
  }
  {
    std::ofstream out(tmp.str("broken.json"));
    out << R"({"seed": )";
  }
  CHECK_NOTHROW(load_config_json(tmp.str("ok.json"), {"seed", "out"}));
  CHECK_THROWS_AS(load_config_json(tmp.str("bad.json"), {"seed", "out"}), ConfigError);
  CHECK_THROWS_AS(load_config_json(tmp.str("broken.json"), {"seed", "out"}), ConfigError);
  CHECK_THROWS_AS(load_config_json(tmp.str("missing.json"), {"seed"}),
                  MissingArtifactError);
}

TEST_CASE("cli exit codes: ok, config error, missing artifact", "[harness]") {
  TempDir tmp("hcg_cli_test");
  CHECK(run_cli("gen-scenes --seed 1 --n-scenes 2 --out " + tmp.str("s")) == 0);

  // Unknown config key -> 2.
  {
    std::ofstream out(tmp.str("bad.json"));
    out << R"({"seed": 1, "wrong": 2})";
  }
  CHECK(run_cli("gen-scenes --config " + tmp.str("bad.json")) == 2);

  // Malformed flag value -> 2.
  CHECK(run_cli("gen-scenes --seed notanumber") == 2);

  // Missing input artifact -> 3.
  CHECK(run_cli("train-offline --dataset " + tmp.str("nope") + " --out " + tmp.str("r")) == 3);
  CHECK(run_cli("eval --bundle " + tmp.str("nope.ckpt") + " --out " + tmp.str("e")) == 3);
}

TEST_CASE("cli runs are idempotent and rerunnable from the manifest", "[harness]") {
  TempDir tmp("hcg_idem_test");
  const std::string args = "gen-demos --seed 7 --n-scenes 3 --obstacles-min 1 "
                           "--obstacles-max 2 --goals-per-scene 2 --threads 2 --out ";
  REQUIRE(run_cli(args + tmp.str("a")) == 0);
  REQUIRE(run_cli(args + tmp.str("b")) == 0);
  CHECK(slurp(tmp.str("a/manifest.json")) == slurp(tmp.str("b/manifest.json")));
  CHECK(slurp(tmp.str("a/blocks.bin")) == slurp(tmp.str("b/blocks.bin")));

  // rerun from the manifest reproduces the artifacts byte for byte.
  REQUIRE(run_cli("rerun --manifest " + tmp.str("a/run_manifest.json") + " --out " +
                  tmp.str("c")) == 0);
  CHECK(slurp(tmp.str("a/manifest.json")) == slurp(tmp.str("c/manifest.json")));
  CHECK(slurp(tmp.str("a/blocks.bin")) == slurp(tmp.str("c/blocks.bin")));
}

TEST_CASE("plots render constant series and clutter bars with csv twins", "[harness]") {
  TempDir tmp("hcg_plot_test");
  write_line_chart_svg(tmp.str("flat.svg"), "flat",
                       {{"const", {0, 1, 2, 3}, {2.5, 2.5, 2.5, 2.5}}});
  const std::string svg = slurp(tmp.str("flat.svg"));
  CHECK(svg.find("polyline") != std::string::npos);

  // Clutter chart with exactly 5 bars for levels 3-7.
  write_bar_chart_svg(tmp.str("bars.svg"), "clutter",
                      {"3", "4", "5", "6", "7"}, {0.9, 0.85, 0.8, 0.75, 0.7});
  const std::string bars = slurp(tmp.str("bars.svg"));
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = bars.find("<rect", pos)) != std::string::npos; ++pos) {
    ++count;
  }
  CHECK(count == 6);  //背景 + 5 bars
}

TEST_CASE("pca scatter groups points by demo", "[harness]") {
  Rng rng(9);
  std::vector<nn::Tensor> rows;
  std::vector<int> groups;
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 10; ++i) {
      nn::Tensor t(1, 8);
      for (int j = 0; j < 8; ++j) t(0, j) = g * 3.0 + 0.1 * rng.normal();
      rows.push_back(t);
      groups.push_back(g);
    }
  }
  const auto [xs, ys] = pca_2d(rows);
  REQUIRE(xs.size() == rows.size());
  TempDir tmp("hcg_scatter_test");
  write_scatter_svg(tmp.str("scatter.svg"), "latents", xs, ys, groups);
  CHECK(fs::file_size(tmp.str("scatter.svg")) > 200);
}
