#pragma once

#include "hcg/dataset.hpp"
#include "hcg/geometry.hpp"
#include "hcg/nn/autodiff.hpp"
#include "hcg/nn/checkpoint.hpp"
#include "hcg/nn/module.hpp"
#include "hcg/scene.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hcg {

inline constexpr int kLatentDim = 64;    // plan embedding z
inline constexpr int kVaeLatentDim = 2;  // cVAE code c
// Per-point network features: position (3), planar configuration with the
// wrap-free yaw encoding (x, y, cos yaw, sin yaw), and the target mask bit.
inline constexpr int kPointFeatureDim = 8;
inline constexpr int kSetFeatureDim = 128;

// 64-dimensional plan embedding.
struct LatentPlan {
  nn::Tensor z;
  LatentPlan() : z(1, kLatentDim) {}
  explicit LatentPlan(nn::Tensor t) : z(std::move(t)) {}
  static LatentPlan zeros() { return LatentPlan(); }
};

// cVAE posterior sample: code plus the Gaussian parameters it came from.
struct VaeLatent {
  nn::Tensor c{1, kVaeLatentDim};
  nn::Tensor mu{1, kVaeLatentDim};
  nn::Tensor log_var{1, kVaeLatentDim};
};

struct PolicyOutput {
  Pose action;
  Pose goal;
};

// --- feature construction ---------------------------------------------------

namespace detail {

inline void fill_point_row(nn::Tensor& t, int row, const Vec3& position, const Vec3& config,
                           int mask) {
  t(row, 0) = position.x();
  t(row, 1) = position.y();
  t(row, 2) = position.z();
  t(row, 3) = config.x();
  t(row, 4) = config.y();
  t(row, 5) = std::cos(config.z());
  t(row, 6) = std::sin(config.z());
  t(row, 7) = static_cast<double>(mask);
}

}  // namespace detail

// Per-point features: position in the gripper frame, the planar gripper
// configuration repeated on every point, and the target mask bit.
inline nn::Tensor observation_features(const Observation& obs) {
  nn::check_shape(!obs.points.empty(), "observation_features: empty cloud");
  nn::Tensor t(static_cast<int>(obs.points.size()), kPointFeatureDim);
  for (int i = 0; i < t.rows; ++i) {
    detail::fill_point_row(t, i, obs.points[i].position, obs.config, obs.points[i].mask);
  }
  return t;
}

struct PlanCloudSequence {
  std::vector<nn::Tensor> locals;  // one N x 7 cloud per waypoint
  nn::Tensor global;               // (N * T) x 8 union with normalized time channel
};

// Renders the plan as point clouds: the current observation transformed into
// each waypoint frame, plus the union cloud with a time channel normalized to
// [0, 1] across waypoints.
inline PlanCloudSequence plan_to_cloud_sequence(const Observation& s,
                                                const std::vector<Pose>& plan) {
  nn::check_shape(!plan.empty(), "plan_to_cloud_sequence: empty plan");
  nn::check_shape(!s.points.empty(), "plan_to_cloud_sequence: empty cloud");
  PlanCloudSequence out;
  const int n = static_cast<int>(s.points.size());
  const int horizon = static_cast<int>(plan.size());
  out.global = nn::Tensor(n * horizon, kPointFeatureDim + 1);
  for (int w = 0; w < horizon; ++w) {
    // View transform: a point seen from pose_t, re-expressed as seen from
    // waypoint w of the plan.
    const Pose view = compose(inverse(plan[w]), plan.front());
    const Vec3 cfg = planar_params(plan[w]);
    nn::Tensor local(n, kPointFeatureDim);
    const double time = horizon > 1 ? static_cast<double>(w) / (horizon - 1) : 0.0;
    for (int i = 0; i < n; ++i) {
      detail::fill_point_row(local, i, transform_point(view, s.points[i].position), cfg,
                             s.points[i].mask);
      for (int j = 0; j < kPointFeatureDim; ++j) out.global(w * n + i, j) = local(i, j);
      out.global(w * n + i, kPointFeatureDim) = time;
    }
    out.locals.push_back(std::move(local));
  }
  return out;
}

// --- networks ----------------------------------------------------------------

// Plan embedding network: a shared set encoder over the per-waypoint clouds
// (max-pooled across waypoints), a set encoder over the time-stamped union
// cloud, and an MLP head producing z.
struct PlanEncoder {
  nn::SetEncoder local_encoder;
  nn::SetEncoder global_encoder;
  nn::Mlp head;

  PlanEncoder() = default;
  explicit PlanEncoder(Rng& rng)
      : local_encoder(kPointFeatureDim, rng),
        global_encoder(kPointFeatureDim + 1, rng),
        head({2 * kSetFeatureDim, 128, kLatentDim}, rng) {}

  nn::Var encode(const PlanCloudSequence& seq) const {
    std::vector<nn::Var> waypoint_feats;
    waypoint_feats.reserve(seq.locals.size());
    for (const nn::Tensor& cloud : seq.locals) {
      waypoint_feats.push_back(local_encoder(nn::Var::constant(cloud)));
    }
    const nn::Var local = nn::max_rows(nn::concat_rows(waypoint_feats));
    const nn::Var global = global_encoder(nn::Var::constant(seq.global));
    return head(nn::concat_cols({local, global}));
  }

  void collect(std::vector<nn::ParamRef>& out) const {
    local_encoder.collect("theta.local", out);
    global_encoder.collect("theta.global", out);
    head.collect("theta.head", out);
  }
};

inline LatentPlan encode_plan(const PlanEncoder& theta, const Observation& s,
                              const std::vector<Pose>& plan) {
  return LatentPlan(theta.encode(plan_to_cloud_sequence(s, plan)).value());
}

// Plan-conditioned low-level policy: state feature concatenated with the
// latent plan, an MLP head emitting 12 numbers decoded into a relative
// action pose and a relative goal pose (axis-angle rotations). The policy
// carries a wider, deeper point encoder than the other networks: it is the
// only one that has to resolve centimeter-scale action regression.
inline constexpr int kPolicyFeatureDim = 256;

struct Policy {
  nn::SetEncoder encoder;
  nn::Mlp head;

  Policy() = default;
  explicit Policy(Rng& rng)
      : encoder({kPointFeatureDim, 64, 128, kPolicyFeatureDim}, rng),
        head({kPolicyFeatureDim + kLatentDim, 256, 256, 12}, rng) {}

  nn::Var forward_graph(const nn::Tensor& features, const nn::Var& z) const {
    return head(nn::concat_cols({encoder(nn::Var::constant(features)), z}));
  }

  void collect(std::vector<nn::ParamRef>& out) const {
    encoder.collect("pi.enc", out);
    head.collect("pi.head", out);
  }
};

// The 12 network outputs parameterize the action and goal in the current
// gripper frame (translation + axis-angle each); the decoded poses are the
// conjugates T a_local T^{-1}, i.e. the usual world-frame relative
// transforms. Local outputs keep the regression targets independent of the
// absolute table position.
inline Pose pose_frame_of(const Observation& s) {
  return planar_pose(s.config.x(), s.config.y(), s.config.z());
}

inline PolicyOutput decode_policy_output(const nn::Tensor& out12, const Pose& frame) {
  nn::check_shape(out12.rows == 1 && out12.cols == 12, "decode_policy_output: need 1x12");
  const Vec3 at(out12(0, 0), out12(0, 1), out12(0, 2));
  const Vec3 aw(out12(0, 3), out12(0, 4), out12(0, 5));
  const Vec3 gt(out12(0, 6), out12(0, 7), out12(0, 8));
  const Vec3 gw(out12(0, 9), out12(0, 10), out12(0, 11));
  const Pose inv = inverse(frame);
  const Pose a_local{exp_map(aw), at};
  const Pose g_local{exp_map(gw), gt};
  return PolicyOutput{compose(frame, compose(a_local, inv)),
                      compose(frame, compose(g_local, inv))};
}

inline PolicyOutput policy_forward(const Policy& pi, const Observation& s,
                                   const LatentPlan& z) {
  const nn::Var out = pi.forward_graph(observation_features(s), nn::Var::constant(z.z));
  return decode_policy_output(out.value(), pose_frame_of(s));
}

// cVAE plan sampler: encoder E_phi(s, z) -> (mu, log_var) over a 2-D code,
// decoder D_phi(s, c) -> z. Each side owns its point-cloud encoder.
struct VaeSampler {
  nn::SetEncoder enc_state;
  nn::Mlp enc_head;
  nn::SetEncoder dec_state;
  nn::Mlp dec_head;

  VaeSampler() = default;
  explicit VaeSampler(Rng& rng)
      : enc_state(kPointFeatureDim, rng),
        enc_head({kSetFeatureDim + kLatentDim, 128, 2 * kVaeLatentDim}, rng),
        dec_state(kPointFeatureDim, rng),
        dec_head({kSetFeatureDim + kVaeLatentDim, 128, kLatentDim}, rng) {}

  // (mu, log_var) halves of the encoder output.
  std::pair<nn::Var, nn::Var> encode_graph(const nn::Tensor& features,
                                           const nn::Var& z) const {
    const nn::Var out =
        enc_head(nn::concat_cols({enc_state(nn::Var::constant(features)), z}));
    return {nn::slice_cols(out, 0, kVaeLatentDim),
            nn::slice_cols(out, kVaeLatentDim, 2 * kVaeLatentDim)};
  }

  nn::Var decode_feature(const nn::Tensor& features) const {
    return dec_state(nn::Var::constant(features));
  }

  nn::Var decode_graph(const nn::Var& state_feature, const nn::Var& c) const {
    return dec_head(nn::concat_cols({state_feature, c}));
  }

  void collect(std::vector<nn::ParamRef>& out) const {
    enc_state.collect("phi.enc_state", out);
    enc_head.collect("phi.enc_head", out);
    dec_state.collect("phi.dec_state", out);
    dec_head.collect("phi.dec_head", out);
  }
};

// Reparameterization: c = mu + exp(log_var / 2) * noise.
inline nn::Var reparam_sample(const nn::Var& mu, const nn::Var& log_var,
                              const nn::Tensor& noise) {
  return nn::add(mu, nn::mul(nn::exp_op(nn::scale(log_var, 0.5)),
                             nn::Var::constant(noise)));
}

inline VaeLatent vae_encode(const VaeSampler& phi, const Observation& s,
                            const LatentPlan& z, const nn::Tensor& noise) {
  const auto [mu, log_var] =
      phi.encode_graph(observation_features(s), nn::Var::constant(z.z));
  VaeLatent out;
  out.mu = mu.value();
  out.log_var = log_var.value();
  out.c = reparam_sample(mu, log_var, noise).value();
  return out;
}

inline LatentPlan vae_decode(const VaeSampler& phi, const Observation& s,
                             const nn::Tensor& c) {
  const nn::Var feat = phi.decode_feature(observation_features(s));
  return LatentPlan(phi.decode_graph(feat, nn::Var::constant(c)).value());
}

// Draws c from the 2-D unit Gaussian prior and decodes a plan embedding.
inline LatentPlan prior_sample_plan(const VaeSampler& phi, const Observation& s, Rng& rng) {
  nn::Tensor c(1, kVaeLatentDim);
  for (double& v : c.data) v = rng.normal();
  return vae_decode(phi, s, c);
}

// Latent plan critic and option classifier: one shared trunk over
// (state feature, latent plan) with two heads. The option classifier is a
// function of the state alone; it feeds a zero latent into the trunk.
struct CriticOption {
  nn::SetEncoder encoder;
  nn::Linear trunk;
  nn::Linear q_head;
  nn::Linear g_head;

  CriticOption() = default;
  explicit CriticOption(Rng& rng)
      : encoder(kPointFeatureDim, rng),
        trunk(kSetFeatureDim + kLatentDim, 128, rng),
        q_head(128, 1, rng),
        g_head(128, 1, rng) {}

  nn::Var state_feature(const nn::Tensor& features) const {
    return encoder(nn::Var::constant(features));
  }

  nn::Var q_graph(const nn::Var& state_feature, const nn::Var& z) const {
    return q_head(nn::relu(trunk(nn::concat_cols({state_feature, z}))));
  }

  nn::Var g_logit_graph(const nn::Var& state_feature) const {
    const nn::Var zero = nn::Var::constant(nn::Tensor::zeros(1, kLatentDim));
    return g_head(nn::relu(trunk(nn::concat_cols({state_feature, zero}))));
  }

  nn::Var g_graph(const nn::Var& state_feature) const {
    return nn::sigmoid(g_logit_graph(state_feature));
  }

  void collect(std::vector<nn::ParamRef>& out) const {
    encoder.collect("qg.enc", out);
    trunk.collect("qg.trunk", out);
    q_head.collect("qg.q", out);
    g_head.collect("qg.g", out);
  }
};

inline double critic_forward(const CriticOption& qg, const Observation& s,
                             const LatentPlan& z) {
  const nn::Var feat = qg.state_feature(observation_features(s));
  return qg.q_graph(feat, nn::Var::constant(z.z)).scalar();
}

inline double option_forward(const CriticOption& qg, const Observation& s) {
  const nn::Var feat = qg.state_feature(observation_features(s));
  return qg.g_graph(feat).scalar();
}

// --- losses -------------------------------------------------------------------

// Point-matching pose loss between a predicted local (translation,
// axis-angle) pair and a fixed target pose, differentiable in the
// prediction. The prediction is decoded as frame * local * frame^{-1}; folded
// into constants, the moved gripper points are
//   R_f (R(w) y_i + t) + t_f   with   y_i = frame^{-1}(x_i).
inline nn::Var pose_loss_graph(const nn::Var& pred_t, const nn::Var& pred_w,
                               const Pose& frame, const Pose& target,
                               const GripperPoints& xg) {
  const int n = static_cast<int>(xg.points.size());
  const Pose inv = inverse(frame);
  std::vector<Vec3> local_pts;
  local_pts.reserve(n);
  nn::Tensor target_pts(n, 3);
  for (int i = 0; i < n; ++i) {
    local_pts.push_back(transform_point(inv, xg.points[i]));
    const Vec3 p = transform_point(target, xg.points[i]);
    target_pts(i, 0) = p.x();
    target_pts(i, 1) = p.y();
    target_pts(i, 2) = p.z();
  }
  nn::Tensor rot_t(3, 3);  // R_f^T, applied from the right to row vectors
  nn::Tensor trans(1, 3);
  for (int i = 0; i < 3; ++i) {
    trans(0, i) = frame.translation(i);
    for (int j = 0; j < 3; ++j) rot_t(i, j) = frame.rotation(j, i);
  }
  const nn::Var moved_local = nn::add_rowvec(nn::rotate_points(pred_w, local_pts), pred_t);
  const nn::Var moved = nn::add_rowvec(nn::matmul(moved_local, nn::Var::constant(rot_t)),
                                       nn::Var::constant(trans));
  const nn::Var diff = nn::sub(moved, nn::Var::constant(target_pts));
  return nn::scale(nn::sum_all(nn::abs_op(diff)), 1.0 / n);
}

// Per-step action/goal losses of a policy output graph against expert labels.
inline nn::Var step_traj_loss(const nn::Var& out12, const Pose& frame,
                              const Pose& expert_action, const Pose& expert_goal,
                              const GripperPoints& xg) {
  const nn::Var a = pose_loss_graph(nn::slice_cols(out12, 0, 3),
                                    nn::slice_cols(out12, 3, 6), frame, expert_action, xg);
  const nn::Var g = pose_loss_graph(nn::slice_cols(out12, 6, 9),
                                    nn::slice_cols(out12, 9, 12), frame, expert_goal, xg);
  return nn::add(g, a);
}

// Mean of the per-step action/goal losses over the given steps of a
// demonstration, predictions from the policy conditioned on z.
inline nn::Var traj_loss_over_steps(const Policy& pi, const Demonstration& demo,
                                    const std::vector<std::size_t>& steps,
                                    const nn::Var& z, const GripperPoints& xg) {
  nn::check_shape(!steps.empty(), "traj_loss: no steps");
  std::vector<nn::Var> terms;
  for (std::size_t t : steps) {
    const nn::Var out =
        pi.forward_graph(observation_features(demo.records[t].obs), z);
    terms.push_back(step_traj_loss(out, pose_frame_of(demo.records[t].obs),
                                   demo.records[t].expert_action,
                                   demo.records[t].expert_goal, xg));
  }
  nn::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
  return nn::scale(total, 1.0 / static_cast<double>(terms.size()));
}

// Trajectory loss over a demonstration suffix [t0, records.size()).
inline nn::Var traj_loss_graph(const Policy& pi, const Demonstration& demo,
                               std::size_t t0, const nn::Var& z,
                               const GripperPoints& xg) {
  nn::check_shape(t0 < demo.records.size(), "traj_loss: empty suffix");
  std::vector<std::size_t> steps;
  for (std::size_t t = t0; t < demo.records.size(); ++t) steps.push_back(t);
  return traj_loss_over_steps(pi, demo, steps, z, xg);
}

inline double traj_loss(const Policy& pi, const Demonstration& demo, const LatentPlan& z,
                        const GripperPoints& xg = default_gripper_points()) {
  return traj_loss_graph(pi, demo, 0, nn::Var::constant(z.z), xg).scalar();
}

// KL divergence of a diagonal Gaussian from the unit Gaussian:
// sum_d 0.5 (mu_d^2 + sigma_d^2 - log sigma_d^2 - 1).
inline double kl_loss(const nn::Tensor& mu, const nn::Tensor& log_var) {
  nn::check_shape(mu.same_shape(log_var), "kl_loss: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    total += 0.5 * (mu.data[i] * mu.data[i] + std::exp(log_var.data[i]) -
                    log_var.data[i] - 1.0);
  }
  return total;
}

inline nn::Var kl_loss_graph(const nn::Var& mu, const nn::Var& log_var) {
  nn::Tensor ones(1, mu.cols());
  for (double& v : ones.data) v = 1.0;
  const nn::Var inner = nn::sub(nn::add(nn::square(mu), nn::exp_op(log_var)),
                                nn::add(log_var, nn::Var::constant(ones)));
  return nn::scale(nn::sum_all(inner), 0.5);
}

inline constexpr double kSamplerBeta = 0.02;

// Squared-distance latent reconstruction ||z_theta - z_phi||^2.
inline nn::Var recons_loss_graph(const nn::Tensor& z_theta, const nn::Var& z_phi) {
  return nn::sum_all(nn::square(nn::sub(nn::Var::constant(z_theta), z_phi)));
}

// --- the model bundle ----------------------------------------------------------

struct ModelBundle {
  PlanEncoder theta;
  Policy pi;
  VaeSampler phi;
  CriticOption qg;

  ModelBundle() = default;
  explicit ModelBundle(std::uint64_t seed) {
    Rng r_theta(derive_seed(seed, "init_theta"));
    theta = PlanEncoder(r_theta);
    Rng r_pi(derive_seed(seed, "init_pi"));
    pi = Policy(r_pi);
    Rng r_phi(derive_seed(seed, "init_phi"));
    phi = VaeSampler(r_phi);
    Rng r_qg(derive_seed(seed, "init_qg"));
    qg = CriticOption(r_qg);
  }

  std::vector<nn::ParamRef> theta_params() const {
    std::vector<nn::ParamRef> p;
    theta.collect(p);
    return p;
  }
  std::vector<nn::ParamRef> pi_params() const {
    std::vector<nn::ParamRef> p;
    pi.collect(p);
    return p;
  }
  std::vector<nn::ParamRef> phi_params() const {
    std::vector<nn::ParamRef> p;
    phi.collect(p);
    return p;
  }
  std::vector<nn::ParamRef> qg_params() const {
    std::vector<nn::ParamRef> p;
    qg.collect(p);
    return p;
  }
  std::vector<nn::ParamRef> all_params() const {
    std::vector<nn::ParamRef> p;
    theta.collect(p);
    pi.collect(p);
    phi.collect(p);
    qg.collect(p);
    return p;
  }

  void save(const std::string& path) const { nn::save_checkpoint(path, all_params()); }

  void load(const std::string& path) {
    nn::apply_checkpoint(nn::load_checkpoint(path), all_params());
  }
};

}  // namespace hcg
