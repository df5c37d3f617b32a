#pragma once

#include "hcg/dataset.hpp"
#include "hcg/eval.hpp"
#include "hcg/offline.hpp"
#include "hcg/version.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace hcg {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct MissingArtifactError : std::runtime_error {
  explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

// Output root: HCG_OUT environment variable, or the current directory.
inline std::string output_root() {
  const char* env = std::getenv("HCG_OUT");
  return env && *env ? std::string(env) : std::string(".");
}

inline std::string resolve_out(const std::string& dir) {
  const std::filesystem::path p(dir);
  if (p.is_absolute()) return dir;
  return (std::filesystem::path(output_root()) / p).string();
}

// Strict config loading: the file must be valid JSON and contain only known
// keys; violations carry the offending field in the diagnostic.
inline nlohmann::json load_config_json(const std::string& path,
                                       const std::vector<std::string>& allowed_keys) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object: " + path);
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed_keys.begin(), allowed_keys.end(), key) == allowed_keys.end()) {
      throw ConfigError("unknown config key \"" + key + "\" in " + path);
    }
  }
  return j;
}

inline std::uint64_t json_hash(const nlohmann::json& j) {
  return hash_tag(j.dump());
}

// Run manifest: command, config, hashes and seeds. Deliberately contains no
// timestamps or absolute paths so re-runs are byte-identical.
inline void write_manifest(const std::string& dir, const std::string& command,
                           const nlohmann::json& config,
                           const std::vector<std::string>& artifacts, int threads) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config"] = config;
  m["config_hash"] = json_hash(config);
  m["threads"] = threads;
  m["deterministic"] = true;  // outputs are merged in index order
  m["artifacts"] = artifacts;
  std::ofstream out(dir + "/run_manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << m.dump(1) << "\n";
}

inline nlohmann::json read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("manifest not found: " + path);
  nlohmann::json m;
  in >> m;
  return m;
}

// --- CSV emission -------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_loss_curves_csv(const std::string& path,
                                  const std::vector<LossCurvePoint>& curves) {
  std::ofstream out(path);
  out << "epoch,split,loss_name,value\n";
  for (const LossCurvePoint& p : curves) {
    out << p.epoch << "," << p.split << "," << p.name << "," << format_double(p.value)
        << "\n";
  }
}

inline std::vector<LossCurvePoint> read_loss_curves_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("loss curve csv not found: " + path);
  std::vector<LossCurvePoint> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    LossCurvePoint p;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    p.epoch = std::stoi(line.substr(0, c1));
    p.split = line.substr(c1 + 1, c2 - c1 - 1);
    p.name = line.substr(c2 + 1, c3 - c2 - 1);
    p.value = std::stod(line.substr(c3 + 1));
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_reward_curve_csv(const std::string& path,
                                   const std::vector<EpisodeSummary>& episodes) {
  std::ofstream out(path);
  out << "episode,reward,steps,outcome,eps,critic_loss,option_loss\n";
  for (const EpisodeSummary& e : episodes) {
    out << e.episode << "," << format_double(e.reward) << "," << e.steps << ","
        << outcome_name(e.outcome) << "," << format_double(e.eps) << ","
        << format_double(e.critic_loss) << "," << format_double(e.option_loss) << "\n";
  }
}

inline void write_eval_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  out << "scope,n_episodes,success_rate,collision_rate,timeout_rate,mean_reward,mean_steps\n";
  out << "all," << r.n_episodes << "," << format_double(r.success_rate) << ","
      << format_double(r.collision_rate) << "," << format_double(r.timeout_rate) << ","
      << format_double(r.mean_reward) << "," << format_double(r.mean_steps) << "\n";
  for (const ClutterRow& row : r.per_clutter) {
    out << "clutter_" << row.n_obstacles << "," << row.n_episodes << ","
        << format_double(row.success_rate) << "," << format_double(row.collision_rate)
        << "," << format_double(row.timeout_rate) << "," << format_double(row.mean_reward)
        << ",\n";
  }
}

// --- episode logs ---------------------------------------------------------------
// JSON-lines, one step per line, with cloud blocks in a little-endian float32
// sidecar file.

class EpisodeLogWriter {
 public:
  EpisodeLogWriter(const std::string& dir, const std::string& stem)
      : jsonl_(dir + "/" + stem + ".jsonl"), blob_(dir + "/" + stem + ".bin",
                                                   std::ios::binary) {
    if (!jsonl_ || !blob_) throw std::runtime_error("cannot open episode log in " + dir);
  }

  void write_episode(int episode_index, const Scene& scene, const EpisodeRecord& rec) {
    for (std::size_t t = 0; t < rec.transitions.size(); ++t) {
      const Transition& tr = rec.transitions[t];
      nlohmann::json line;
      line["episode"] = episode_index;
      line["step"] = tr.t;
      line["scene_seed"] = scene.seed;
      line["reward"] = tr.reward;
      line["done"] = tr.done;
      line["outcome"] =
          tr.done ? outcome_name(rec.outcome) : outcome_name(Outcome::ongoing);
      line["config"] = {tr.s.config.x(), tr.s.config.y(), tr.s.config.z()};
      line["cloud"] = {{"offset", offset_}, {"count", tr.s.points.size()}};
      for (const ObsPoint& p : tr.s.points) {
        put_f32_le(static_cast<float>(p.position.x()), blob_);
        put_f32_le(static_cast<float>(p.position.y()), blob_);
        put_f32_le(static_cast<float>(p.position.z()), blob_);
        put_f32_le(static_cast<float>(p.mask), blob_);
      }
      offset_ += tr.s.points.size() * 16;
      jsonl_ << line.dump() << "\n";
    }
  }

 private:
  std::ofstream jsonl_;
  std::ofstream blob_;
  std::uint64_t offset_ = 0;
};

// Reads outcome/reward rows back from an episode log (terminal lines only).
inline std::vector<EpisodeOutcome> read_episode_log_outcomes(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw MissingArtifactError("episode log not found: " + jsonl_path);
  std::vector<EpisodeOutcome> outcomes;
  std::string line;
  int steps_in_episode = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ++steps_in_episode;
    if (j.at("done").get<bool>()) {
      EpisodeOutcome e;
      const std::string name = j.at("outcome");
      e.outcome = name == "success"    ? Outcome::success
                  : name == "collision" ? Outcome::collision
                                        : Outcome::timeout;
      e.reward = j.at("reward").get<double>();
      e.steps = steps_in_episode;
      steps_in_episode = 0;
      outcomes.push_back(e);
    }
  }
  return outcomes;
}

}  // namespace hcg
