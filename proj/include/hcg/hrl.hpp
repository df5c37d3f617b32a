#pragma once

#include "hcg/expert.hpp"
#include "hcg/models.hpp"
#include "hcg/offline.hpp"
#include "hcg/scene.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

namespace hcg {

// --- transitions and replay ---------------------------------------------------

struct EpisodeMeta {
  double terminal_reward = 0.0;  // r_T
  int terminal_step = 0;         // T
  int t_switch = 0;              // switch step (drawn in train mode)
};

struct Transition {
  Observation s;
  nn::Tensor z{1, kLatentDim};
  double reward = 0.0;
  Observation s_next;
  bool done = false;
  int t = 0;
  EpisodeMeta meta;
};

// FIFO ring buffer with uniform sampling. Push and sample may be called from
// different threads; a batch reflects a prefix-consistent buffer state.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Transition tr) {
    std::lock_guard<std::mutex> lock(mu_);
    if (items_.size() < capacity_) {
      items_.push_back(std::move(tr));
    } else {
      items_[head_] = std::move(tr);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return items_.size();
  }

  std::vector<Transition> sample(int n, Rng& rng) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: empty buffer");
    std::vector<Transition> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
      out.push_back(items_[rng.uniform_int(static_cast<int>(items_.size()))]);
    }
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

struct HrlHyper {
  double lambda = 0.5;       // return/bootstrap mixture
  double gamma = 0.95;       // discount
  int n_candidates = 8;      // prior draws per replanning event
  int replan_interval = 12;  // environment steps between replanning
  double eps_explore = 0.2;  // epsilon-greedy over candidates in train mode
};

// --- critic targets and losses --------------------------------------------------

// Mixed return/bootstrap target. Non-terminal:
//   y = lambda (r_t + gamma max_z' Q_target(s', z')) + (1 - lambda) gamma^(T-t) r_T.
// Terminal transitions drop the bootstrap: y = lambda r_t + (1 - lambda) r_T.
inline double bellman_target(const Transition& tr,
                             const std::vector<LatentPlan>& next_candidates,
                             const CriticOption& q_target, const HrlHyper& hyper) {
  if (tr.done) {
    return hyper.lambda * tr.reward + (1.0 - hyper.lambda) * tr.meta.terminal_reward;
  }
  if (next_candidates.empty()) {
    throw std::invalid_argument("bellman_target: non-terminal transition needs candidates");
  }
  const nn::Var feat = q_target.state_feature(observation_features(tr.s_next));
  double best = -std::numeric_limits<double>::infinity();
  for (const LatentPlan& z : next_candidates) {
    best = std::max(best, q_target.q_graph(feat, nn::Var::constant(z.z)).scalar());
  }
  const double monte_carlo = std::pow(hyper.gamma, tr.meta.terminal_step - tr.t) *
                             tr.meta.terminal_reward;
  return hyper.lambda * (tr.reward + hyper.gamma * best) +
         (1.0 - hyper.lambda) * monte_carlo;
}

inline nn::Var critic_loss_graph(const CriticOption& qg, const nn::Var& state_feature,
                                 const nn::Tensor& z, double y) {
  const nn::Var q = qg.q_graph(state_feature, nn::Var::constant(z));
  nn::Tensor target(1, 1);
  target(0, 0) = y;
  return nn::sum_all(nn::square(nn::sub(q, nn::Var::constant(target))));
}

inline double critic_loss(const CriticOption& qg, const Transition& tr, double y) {
  const nn::Var feat = qg.state_feature(observation_features(tr.s));
  return critic_loss_graph(qg, feat, tr.z, y).scalar();
}

// Binary cross entropy on the switch-success label r_T+ (1 iff r_T = 1),
// masked to steps at or after the switch. Computed from the classifier logit
// in the softplus form, so probabilities never need explicit clamping to
// reach a zero loss in the limit.
inline nn::Var option_loss_graph(const CriticOption& qg, const nn::Var& state_feature,
                                 const Transition& tr) {
  if (tr.t < tr.meta.t_switch) {
    return nn::Var::constant(nn::Tensor::zeros(1, 1));
  }
  const nn::Var logit = qg.g_logit_graph(state_feature);
  const bool positive = tr.meta.terminal_reward == 1.0;
  return nn::sum_all(positive ? nn::softplus(nn::scale(logit, -1.0))
                              : nn::softplus(logit));
}

inline double option_loss(const CriticOption& qg, const Transition& tr) {
  const nn::Var feat = qg.state_feature(observation_features(tr.s));
  return option_loss_graph(qg, feat, tr).scalar();
}

// Argmax of the critic over candidates; ties break to the lowest index.
inline std::pair<int, double> select_plan(const CriticOption& qg, const Observation& s,
                                          const std::vector<LatentPlan>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("select_plan: no candidates");
  const nn::Var feat = qg.state_feature(observation_features(s));
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score = qg.q_graph(feat, nn::Var::constant(candidates[i].z)).scalar();
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(i);
    }
  }
  return {best, best_score};
}

// --- scripted grasp primitive ----------------------------------------------------

// Least-squares circle center (Kasa fit) of the observed target points.
inline std::optional<Vec2> estimate_target_center(const Observation& obs,
                                                  const Pose& gripper_pose) {
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  int n = 0;
  Vec2 centroid = Vec2::Zero();
  for (const ObsPoint& p : obs.points) {
    if (p.mask != 1) continue;
    const Vec3 w = transform_point(gripper_pose, p.position);
    const Eigen::Vector3d row(2.0 * w.x(), 2.0 * w.y(), 1.0);
    ata += row * row.transpose();
    atb += row * (w.x() * w.x() + w.y() * w.y());
    centroid += Vec2(w.x(), w.y());
    ++n;
  }
  if (n == 0) return std::nullopt;
  centroid /= n;
  if (n >= 3) {
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    const Vec2 center(sol(0), sol(1));
    if (sol.allFinite() && (center - centroid).norm() < 0.2) return center;
  }
  return centroid;  // degenerate fit: fall back to the visible-arc centroid
}

// Obstacle-oblivious servo toward the grasp ring of the estimated target:
// one clamped step toward the nearest grasp pose, identity when already
// grasping or when no target points are visible.
inline Pose grasp_primitive(const Scene& scene, const GripperState& gripper,
                            const Observation& obs,
                            const SimParams& params = SimParams()) {
  if (check_grasp_success(scene, gripper)) return identity_pose();
  const auto center = estimate_target_center(obs, gripper.pose);
  if (!center) return identity_pose();

  const Vec2 pos = pose_position2(gripper.pose);
  const Vec2 to_center = *center - pos;
  if (to_center.norm() < 1e-9) return identity_pose();
  const double approach = std::atan2(to_center.y(), to_center.x());
  const Vec2 goal = *center - kGraspStandoff * Vec2(std::cos(approach), std::sin(approach));

  Vec2 d = goal - pos;
  const double dn = d.norm();
  if (dn > params.step_translation_limit) d *= params.step_translation_limit / dn;
  const double dyaw = std::clamp(wrap_angle(approach - pose_yaw(gripper.pose)),
                                 -params.step_yaw_limit, params.step_yaw_limit);
  const Pose next = planar_pose(pos.x() + d.x(), pos.y() + d.y(),
                                pose_yaw(gripper.pose) + dyaw);
  return relative(gripper.pose, next);
}

// --- hierarchical episode loop -----------------------------------------------------

enum class PlanSelect { critic, random, single_draw, fixed_zero };
enum class SwitchRule { classifier, fixed_step, never };

struct EpisodeOptions {
  bool train = false;
  double eps = 0.0;                       // candidate exploration (train)
  PlanSelect select = PlanSelect::critic;
  SwitchRule switch_rule = SwitchRule::classifier;
  int fixed_switch_step = 30;
  int t_switch = -1;                      // train-mode switch step; drawn if < 0
  std::uint64_t seed = 0;
  // When set, candidates come from this fixed list instead of the sampler.
  const std::vector<LatentPlan>* candidate_override = nullptr;
};

struct EpisodeRecord {
  std::vector<Transition> transitions;
  Outcome outcome = Outcome::ongoing;
  double total_reward = 0.0;
  int steps = 0;
  int t_switch = -1;  // step at which control switched (or was scheduled to)
  int sampler_invocations = 0;
  int selected_candidate_first = -1;
};

// Runs one hierarchical episode: every replan_interval steps the sampler
// proposes n_candidates plans plus the prior-mode plan (c = 0) and the critic
// selects among them; the plan-conditioned policy acts until control switches
// permanently to the grasp primitive (classifier threshold 0.5 at eval, the
// drawn switch step in train mode).
inline EpisodeRecord execute_episode(const Scene& scene, const ModelBundle& bundle,
                                     const HrlHyper& hyper, const SimParams& sim_params,
                                     const EpisodeOptions& opts) {
  Simulator sim(sim_params);
  sim.reset(scene, derive_seed(opts.seed, "episode"));
  Rng rng(derive_seed(opts.seed, "control"));

  EpisodeRecord record;
  int t_switch = opts.t_switch;
  if (opts.train && t_switch < 0) {
    const int lo = sim_params.max_steps / 3;
    t_switch = lo + rng.uniform_int(sim_params.max_steps - lo + 1);
  }

  bool switched = false;
  nn::Tensor z = nn::Tensor::zeros(1, kLatentDim);

  for (int t = 0; t < sim_params.max_steps && !sim.done(); ++t) {
    const Observation s = sim.observation();

    if (!switched) {
      if (opts.train || opts.switch_rule == SwitchRule::fixed_step) {
        const int at = opts.train ? t_switch : opts.fixed_switch_step;
        if (t >= at) switched = true;
      } else if (opts.switch_rule == SwitchRule::classifier) {
        if (option_forward(bundle.qg, s) > 0.5) switched = true;
      }
      if (switched && record.t_switch < 0) record.t_switch = t;
    }

    if (!switched && opts.select != PlanSelect::fixed_zero) {
      const bool replan_now = opts.select == PlanSelect::single_draw
                                  ? t == 0
                                  : t % hyper.replan_interval == 0;
      if (replan_now) {
        std::vector<LatentPlan> candidates;
        if (opts.candidate_override) {
          candidates = *opts.candidate_override;
        } else if (opts.select == PlanSelect::single_draw) {
          candidates.push_back(prior_sample_plan(bundle.phi, s, rng));
          record.sampler_invocations += 1;
        } else {
          const nn::Tensor features = observation_features(s);
          const nn::Var dec_feat = bundle.phi.decode_feature(features);
          for (int k = 0; k < hyper.n_candidates; ++k) {
            nn::Tensor c(1, kVaeLatentDim);
            for (double& v : c.data) v = rng.normal();
            candidates.emplace_back(bundle.phi.decode_graph(dec_feat, nn::Var::constant(c)).value());
          }
          // The prior mode c = (0, 0) is always scored as the extra candidate.
          candidates.emplace_back(
              bundle.phi.decode_graph(dec_feat,
                                      nn::Var::constant(nn::Tensor::zeros(1, kVaeLatentDim)))
                  .value());
          record.sampler_invocations += hyper.n_candidates + 1;
        }

        int pick = 0;
        if (opts.select == PlanSelect::random) {
          pick = rng.uniform_int(static_cast<int>(candidates.size()));
        } else if (opts.select == PlanSelect::single_draw) {
          pick = 0;
        } else if (opts.train && rng.uniform01() < opts.eps) {
          pick = rng.uniform_int(static_cast<int>(candidates.size()));
        } else {
          pick = select_plan(bundle.qg, s, candidates).first;
        }
        z = candidates[pick].z;
        if (record.selected_candidate_first < 0) record.selected_candidate_first = pick;
      }
    }

    Pose action;
    if (switched) {
      action = grasp_primitive(scene, sim.state(), s, sim_params);
    } else {
      action = policy_forward(bundle.pi, s, LatentPlan(z)).action;
    }

    const StepResult res = sim.step(action);
    Transition tr;
    tr.s = s;
    tr.z = z;
    tr.reward = res.reward;
    tr.s_next = res.observation;
    tr.done = res.done;
    tr.t = t;
    record.transitions.push_back(std::move(tr));
    record.total_reward += res.reward;
  }

  record.outcome = sim.outcome();
  record.steps = static_cast<int>(record.transitions.size());
  const double r_terminal =
      record.transitions.empty() ? 0.0 : record.transitions.back().reward;
  const int terminal_step = record.steps - 1;
  const int meta_switch = opts.train ? t_switch
                                     : (record.t_switch >= 0 ? record.t_switch
                                                             : std::numeric_limits<int>::max());
  if (opts.train) record.t_switch = t_switch;
  for (Transition& tr : record.transitions) {
    tr.meta = EpisodeMeta{r_terminal, terminal_step, meta_switch};
  }
  return record;
}

// --- online training -----------------------------------------------------------------

struct OnlineConfig {
  int episodes = 300;
  int batch_size = 32;
  int grad_steps_per_episode = 4;
  double lr = 1e-3;
  int target_sync_every = 100;  // gradient steps between target-network syncs
  std::size_t buffer_capacity = 50000;
  double eps_start = 0.2;
  double eps_end = 0.05;
  std::uint64_t seed = 0;
  int obstacles_min = 3;
  int obstacles_max = 7;
  HrlHyper hyper;
  SimParams sim;
  int actors = 1;  // parallel episode collection (wave size)
};

struct EpisodeSummary {
  int episode = 0;
  double reward = 0.0;
  int steps = 0;
  Outcome outcome = Outcome::ongoing;
  double eps = 0.0;
  double critic_loss = 0.0;
  double option_loss = 0.0;
};

struct OnlineStats {
  std::vector<EpisodeSummary> episodes;
  int gradient_steps = 0;
};

inline void copy_param_values(const std::vector<nn::ParamRef>& src,
                              const std::vector<nn::ParamRef>& dst) {
  nn::check_shape(src.size() == dst.size(), "copy_param_values: size mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].node->value = src[i].node->value;
  }
}

inline CriticOption clone_critic(const CriticOption& src) {
  Rng rng(0);
  CriticOption dst(rng);
  std::vector<nn::ParamRef> sp, dp;
  src.collect(sp);
  dst.collect(dp);
  copy_param_values(sp, dp);
  return dst;
}

// One gradient step of Eq-style critic regression plus the masked option
// loss over a replay batch. Candidates for the bootstrap max come from the
// frozen sampler at the next state.
inline std::pair<double, double> qg_gradient_step(
    ModelBundle& bundle, const CriticOption& target_net, const ReplayBuffer& buffer,
    nn::Adam& opt, const OnlineConfig& config, Rng& rng) {
  const auto batch = buffer.sample(config.batch_size, rng);
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const Transition& tr : batch) {
    std::vector<LatentPlan> cands;
    if (!tr.done) {
      const nn::Tensor features = observation_features(tr.s_next);
      const nn::Var dec_feat = bundle.phi.decode_feature(features);
      for (int k = 0; k < config.hyper.n_candidates; ++k) {
        nn::Tensor c(1, kVaeLatentDim);
        for (double& v : c.data) v = rng.normal();
        cands.emplace_back(bundle.phi.decode_graph(dec_feat, nn::Var::constant(c)).value());
      }
      cands.emplace_back(
          bundle.phi
              .decode_graph(dec_feat, nn::Var::constant(nn::Tensor::zeros(1, kVaeLatentDim)))
              .value());
    }
    targets.push_back(bellman_target(tr, cands, target_net, config.hyper));
  }

  opt.zero_grad();
  nn::Var loss;
  double critic_part = 0.0, option_part = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const nn::Var feat = bundle.qg.state_feature(observation_features(batch[i].s));
    const nn::Var lc = critic_loss_graph(bundle.qg, feat, batch[i].z, targets[i]);
    const nn::Var lo = option_loss_graph(bundle.qg, feat, batch[i]);
    critic_part += lc.scalar();
    option_part += lo.scalar();
    const nn::Var l = nn::add(lc, lo);
    loss = loss.valid() ? nn::add(loss, l) : l;
  }
  loss = nn::scale(loss, 1.0 / static_cast<double>(batch.size()));
  if (!std::isfinite(loss.scalar())) {
    throw TrainingDivergenceError("critic/option loss diverged");
  }
  loss.backward();
  opt.step();
  return {critic_part / batch.size(), option_part / batch.size()};
}

// Algorithm: loop episodes on freshly sampled scenes with epsilon-greedy plan
// selection and a random switch step; push transitions; take gradient steps
// on the critic and option classifier. The embedding, policy, and sampler
// networks are never touched.
inline OnlineStats train_online(ModelBundle& bundle, const OnlineConfig& config) {
  OnlineStats stats;
  ReplayBuffer buffer(config.buffer_capacity);
  nn::Adam opt(bundle.qg_params(), {config.lr, 0.9, 0.999, 1e-8});
  CriticOption target_net = clone_critic(bundle.qg);
  Rng learn_rng(derive_seed(config.seed, "learn"));

  const int span = config.obstacles_max - config.obstacles_min + 1;
  const int waves = (config.episodes + config.actors - 1) / config.actors;
  int episode_index = 0;
  for (int wave = 0; wave < waves; ++wave) {
    const int wave_size = std::min(config.actors, config.episodes - wave * config.actors);
    std::vector<EpisodeRecord> records(wave_size);
    std::vector<double> eps_used(wave_size);
    parallel_for(wave_size, config.actors, [&](int k) {
      const int ep = wave * config.actors + k;
      const double frac =
          config.episodes > 1 ? static_cast<double>(ep) / (config.episodes - 1) : 0.0;
      const double eps = config.eps_start + (config.eps_end - config.eps_start) * frac;
      eps_used[k] = eps;
      const Scene scene = sample_scene(derive_seed(config.seed, "online_scene", ep),
                                       config.obstacles_min + ep % span);
      EpisodeOptions opts;
      opts.train = true;
      opts.eps = eps;
      opts.seed = derive_seed(config.seed, "online_episode", ep);
      records[k] = execute_episode(scene, bundle, config.hyper, config.sim, opts);
    });

    for (int k = 0; k < wave_size; ++k) {
      for (const Transition& tr : records[k].transitions) buffer.push(tr);
      EpisodeSummary summary;
      summary.episode = episode_index++;
      summary.reward = records[k].total_reward;
      summary.steps = records[k].steps;
      summary.outcome = records[k].outcome;
      summary.eps = eps_used[k];

      if (buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
        double lc = 0.0, lo = 0.0;
        for (int g = 0; g < config.grad_steps_per_episode; ++g) {
          const auto [c, o] =
              qg_gradient_step(bundle, target_net, buffer, opt, config, learn_rng);
          lc += c;
          lo += o;
          ++stats.gradient_steps;
          if (stats.gradient_steps % config.target_sync_every == 0) {
            std::vector<nn::ParamRef> sp, dp;
            bundle.qg.collect(sp);
            target_net.collect(dp);
            copy_param_values(sp, dp);
          }
        }
        summary.critic_loss = lc / config.grad_steps_per_episode;
        summary.option_loss = lo / config.grad_steps_per_episode;
      }
      stats.episodes.push_back(summary);
    }
  }
  return stats;
}

}  // namespace hcg
