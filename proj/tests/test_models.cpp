#include <catch2/catch_amalgamated.hpp>

#include "hcg/models.hpp"
#include "hcg/offline.hpp"

using namespace hcg;
using nn::Tensor;
using nn::Var;

namespace {

Observation make_obs(Rng& rng, int n, const Vec3& config = Vec3(0.1, 0.2, 0.3)) {
  Observation obs;
  obs.config = config;
  for (int i = 0; i < n; ++i) {
    obs.points.push_back(
        {Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.0), i % 2});
  }
  return obs;
}

Observation permuted(const Observation& obs, Rng& rng) {
  std::vector<int> idx(obs.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);
  Observation out;
  out.config = obs.config;
  for (int i : idx) out.points.push_back(obs.points[i]);
  return out;
}

// Straight-line demo moving +x by `shift` per step, with synthetic clouds.
Demonstration make_translation_demo(int n_steps, double shift, Rng& rng) {
  Demonstration demo;
  for (int t = 0; t <= n_steps; ++t) {
    demo.plan.push_back(planar_pose(0.1 + shift * t, 0.4, 0.0));
  }
  for (int t = 0; t < n_steps; ++t) {
    StepRecord rec;
    rec.pose = demo.plan[t];
    rec.obs = make_obs(rng, 12, planar_params(rec.pose));
    rec.expert_action = extract_expert_action(demo.plan, t);
    rec.expert_goal = extract_expert_goal(demo.plan, t);
    demo.records.push_back(std::move(rec));
  }
  demo.outcome = Outcome::success;
  return demo;
}

// Zeroes the policy's final layer so it always emits the identity pose pair.
void make_identity_policy(Policy& pi) {
  nn::Linear& last = pi.head.layers.back();
  std::fill(last.w.node()->value.data.begin(), last.w.node()->value.data.end(), 0.0);
  std::fill(last.b.node()->value.data.begin(), last.b.node()->value.data.end(), 0.0);
}

double fd_param_check(const std::function<double()>& f,
                      const std::vector<nn::ParamRef>& params,
                      const std::function<void()>& backward, Rng& pick, int probes) {
  nn::zero_grads(params);
  backward();
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const auto& p = params[pick.uniform_int(static_cast<int>(params.size()))];
    const std::size_t i = pick.uniform_int(static_cast<int>(p.node->value.data.size()));
    const double saved = p.node->value.data[i];
    const double h = 1e-5;
    p.node->value.data[i] = saved + h;
    const double fp = f();
    p.node->value.data[i] = saved - h;
    const double fm = f();
    p.node->value.data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = p.node->grad.data[i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("plan_to_cloud_sequence basics", "[models]") {
  Rng rng(3);
  const Observation obs = make_obs(rng, 10);

  // Single-waypoint plan: the sequence is just s_t with time channel 0.
  const Pose here = planar_pose(0.1, 0.2, 0.3);
  const auto seq1 = plan_to_cloud_sequence(obs, {here});
  REQUIRE(seq1.locals.size() == 1);
  CHECK(seq1.global.rows == 10);
  CHECK(seq1.global.cols == kPointFeatureDim + 1);
  for (int i = 0; i < 10; ++i) {
    CHECK(seq1.locals[0](i, 0) == Catch::Approx(obs.points[i].position.x()).margin(1e-12));
    CHECK(seq1.global(i, kPointFeatureDim) == 0.0);
  }

  // Time channel endpoints are exactly 0 and 1.
  std::vector<Pose> plan;
  for (int k = 0; k < 5; ++k) plan.push_back(planar_pose(0.1 + 0.05 * k, 0.2, 0.3));
  const auto seq = plan_to_cloud_sequence(obs, plan);
  REQUIRE(seq.locals.size() == 5);
  CHECK(seq.global(0, kPointFeatureDim) == 0.0);
  CHECK(seq.global(seq.global.rows - 1, kPointFeatureDim) == 1.0);

  // A point 0.2 m ahead lands at the origin once the gripper has advanced
  // 0.2 m toward it.
  Observation one;
  one.config = Vec3::Zero();
  one.points.push_back({Vec3(0.2, 0.0, 0.0), 1});
  const auto seq2 =
      plan_to_cloud_sequence(one, {identity_pose(), translation_pose(0.2, 0.0, 0.0)});
  CHECK(std::abs(seq2.locals[1](0, 0)) < 1e-12);
  CHECK(std::abs(seq2.locals[1](0, 1)) < 1e-12);
}

TEST_CASE("encode_plan is permutation invariant and deterministic", "[models]") {
  Rng rng(5);
  ModelBundle bundle(17);
  const Observation obs = make_obs(rng, 32);
  std::vector<Pose> plan;
  for (int k = 0; k < 4; ++k) plan.push_back(planar_pose(0.1 + 0.04 * k, 0.2, 0.1 * k));

  const LatentPlan z1 = encode_plan(bundle.theta, obs, plan);
  Rng prng(7);
  const LatentPlan z2 = encode_plan(bundle.theta, permuted(obs, prng), plan);
  const LatentPlan z3 = encode_plan(bundle.theta, obs, plan);
  REQUIRE(z1.z.cols == kLatentDim);
  for (int j = 0; j < kLatentDim; ++j) {
    CHECK(z1.z(0, j) == z2.z(0, j));  // bitwise
    CHECK(z1.z(0, j) == z3.z(0, j));
  }
}

TEST_CASE("policy_forward properties", "[models]") {
  Rng rng(9);
  ModelBundle bundle(23);
  const Observation obs = make_obs(rng, 24);
  LatentPlan z;
  for (double& v : z.z.data) v = rng.normal();

  const PolicyOutput out = policy_forward(bundle.pi, obs, z);
  CHECK(is_valid_pose(out.action));
  CHECK(is_valid_pose(out.goal));

  Rng prng(11);
  const PolicyOutput out_p = policy_forward(bundle.pi, permuted(obs, prng), z);
  CHECK((out.action.translation - out_p.action.translation).norm() == 0.0);
  CHECK((out.action.rotation - out_p.action.rotation).norm() == 0.0);

  LatentPlan z2;
  for (double& v : z2.z.data) v = rng.normal();
  const PolicyOutput out2 = policy_forward(bundle.pi, obs, z2);
  CHECK((out.action.translation - out2.action.translation).norm() > 0.0);
}

TEST_CASE("step loss vanishes for the oracle output", "[models]") {
  const GripperPoints& xg = default_gripper_points();
  const Pose frame = planar_pose(0.4, 0.7, 1.1);
  const Pose a = compose(rot_z_pose(0.4), translation_pose(0.02, -0.01, 0.0));
  const Pose g = compose(rot_z_pose(-0.9), translation_pose(0.3, 0.1, 0.0));
  // Oracle network output: the expert labels expressed in the current frame.
  const Pose a_local = compose(inverse(frame), compose(a, frame));
  const Pose g_local = compose(inverse(frame), compose(g, frame));
  Tensor out12(1, 12);
  const Vec3 aw = log_map(a_local.rotation), gw = log_map(g_local.rotation);
  for (int j = 0; j < 3; ++j) {
    out12(0, j) = a_local.translation(j);
    out12(0, 3 + j) = aw(j);
    out12(0, 6 + j) = g_local.translation(j);
    out12(0, 9 + j) = gw(j);
  }
  const double loss = step_traj_loss(Var::constant(out12), frame, a, g, xg).scalar();
  CHECK(loss < 1e-10);

  // Decoding the oracle output recovers the world-frame poses.
  const PolicyOutput dec = decode_policy_output(out12, frame);
  CHECK((dec.action.rotation - a.rotation).norm() < 1e-9);
  CHECK((dec.action.translation - a.translation).norm() < 1e-9);
  CHECK((dec.goal.translation - g.translation).norm() < 1e-9);
}

TEST_CASE("traj_loss hand sum for the identity policy on a translation demo", "[models]") {
  // Per-step shift 0.05, 10 steps to go at step 0: each action term costs
  // 0.05, the goal term at step t costs 0.05 * (T - t).
  Rng rng(15);
  Demonstration demo = make_translation_demo(10, 0.05, rng);
  ModelBundle bundle(31);
  make_identity_policy(bundle.pi);

  double hand = 0.0;
  const int T = 10;
  for (int t = 0; t < T; ++t) hand += 0.05 + 0.05 * (T - t);
  hand /= T;
  CHECK(hand == Catch::Approx(0.325));

  const double loss = traj_loss(bundle.pi, demo, LatentPlan::zeros());
  CHECK(loss == Catch::Approx(hand).margin(1e-12));
  CHECK(loss >= 0.0);
}

TEST_CASE("kl loss closed forms", "[models]") {
  Tensor mu(1, 2), lv(1, 2);
  CHECK(kl_loss(mu, lv) == 0.0);

  mu(0, 0) = 1.0;
  CHECK(kl_loss(mu, lv) == Catch::Approx(0.5));

  mu(0, 0) = 0.0;
  lv(0, 0) = 1.0;
  CHECK(kl_loss(mu, lv) == Catch::Approx(0.5 * (std::exp(1.0) - 2.0)));
  CHECK(kl_loss(mu, lv) == Catch::Approx(0.35914091).margin(1e-6));

  // Graph version agrees with the closed form.
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m(1, 2), l(1, 2);
    for (double& v : m.data) v = rng.normal();
    for (double& v : l.data) v = 0.5 * rng.normal();
    CHECK(kl_loss_graph(Var::constant(m), Var::constant(l)).scalar() ==
          Catch::Approx(kl_loss(m, l)).margin(1e-12));
  }
}

TEST_CASE("vae encode/decode and reparameterization", "[models]") {
  Rng rng(19);
  ModelBundle bundle(37);
  const Observation obs = make_obs(rng, 20);
  LatentPlan z;
  for (double& v : z.z.data) v = rng.normal();

  // Zero noise: c equals mu.
  const VaeLatent lat = vae_encode(bundle.phi, obs, z, Tensor::zeros(1, kVaeLatentDim));
  CHECK(lat.c(0, 0) == lat.mu(0, 0));
  CHECK(lat.c(0, 1) == lat.mu(0, 1));

  // Decode is deterministic given (s, c).
  const LatentPlan d1 = vae_decode(bundle.phi, obs, lat.c);
  const LatentPlan d2 = vae_decode(bundle.phi, obs, lat.c);
  for (int j = 0; j < kLatentDim; ++j) CHECK(d1.z(0, j) == d2.z(0, j));

  // Reparameterization: c = mu + sigma * noise.
  Tensor noise(1, 2);
  noise(0, 0) = 0.7;
  noise(0, 1) = -1.3;
  const Var c = reparam_sample(Var::constant(lat.mu), Var::constant(lat.log_var), noise);
  for (int j = 0; j < 2; ++j) {
    const double expect = lat.mu(0, j) + std::exp(0.5 * lat.log_var(0, j)) * noise(0, j);
    CHECK(c.value()(0, j) == Catch::Approx(expect).margin(1e-15));
  }
}

TEST_CASE("sampler loss pieces", "[models]") {
  // Latent reconstruction of a unit-vector difference is exactly 1.
  Tensor zt(1, kLatentDim), zp(1, kLatentDim);
  zt(0, 5) = 1.0;
  CHECK(recons_loss_graph(zt, Var::constant(zp)).scalar() == Catch::Approx(1.0));

  // Beta scaling of the KL term: mu=(1,0) gives 0.02*0.5, mu=(2,0) 0.02*2.
  Tensor mu(1, 2), lv(1, 2);
  mu(0, 0) = 1.0;
  CHECK(kSamplerBeta * kl_loss(mu, lv) == Catch::Approx(0.01));
  mu(0, 0) = 2.0;
  CHECK(kSamplerBeta * kl_loss(mu, lv) == Catch::Approx(0.04));
}

TEST_CASE("prior sampling is reproducible and diverse", "[models]") {
  Rng data_rng(21);
  ModelBundle bundle(41);
  const Observation obs = make_obs(data_rng, 16);

  Rng r1(100), r2(100);
  const LatentPlan a = prior_sample_plan(bundle.phi, obs, r1);
  const LatentPlan b = prior_sample_plan(bundle.phi, obs, r2);
  for (int j = 0; j < kLatentDim; ++j) CHECK(a.z(0, j) == b.z(0, j));

  Rng r3(101);
  std::vector<LatentPlan> draws;
  for (int k = 0; k < 8; ++k) draws.push_back(prior_sample_plan(bundle.phi, obs, r3));
  int distinct = 0;
  for (int i = 0; i < 8; ++i) {
    bool unique = true;
    for (int j = 0; j < i; ++j) {
      double d = 0.0;
      for (int q = 0; q < kLatentDim; ++q) d += std::abs(draws[i].z(0, q) - draws[j].z(0, q));
      if (d == 0.0) unique = false;
    }
    distinct += unique;
  }
  CHECK(distinct == 8);

  // The zero code is the prior mode plan.
  const LatentPlan mode = vae_decode(bundle.phi, obs, Tensor::zeros(1, kVaeLatentDim));
  CHECK(mode.z.cols == kLatentDim);
}

TEST_CASE("gradients flow end to end through encode -> policy -> traj loss", "[models]") {
  Rng rng(23);
  ModelBundle bundle(43);
  Demonstration demo = make_translation_demo(3, 0.04, rng);  // tiny instance
  const GripperPoints& xg = default_gripper_points();

  std::vector<nn::ParamRef> params = bundle.theta_params();
  for (const auto& p : bundle.pi_params()) params.push_back(p);

  auto loss_fn = [&]() {
    const std::vector<Pose> plan(demo.plan.begin(), demo.plan.end());
    const Var z = bundle.theta.encode(plan_to_cloud_sequence(demo.records[0].obs, plan));
    return traj_loss_graph(bundle.pi, demo, 0, z, xg);
  };
  Rng pick(29);
  const double worst = fd_param_check([&] { return loss_fn().scalar(); }, params,
                                      [&] { loss_fn().backward(); }, pick, 60);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients flow through the cVAE chain", "[models]") {
  Rng rng(31);
  ModelBundle bundle(47);
  Demonstration demo = make_translation_demo(3, 0.04, rng);
  const GripperPoints& xg = default_gripper_points();
  const Observation& obs = demo.records[0].obs;
  Tensor z_theta(1, kLatentDim);
  for (double& v : z_theta.data) v = 0.3 * rng.normal();
  Tensor noise(1, kVaeLatentDim);
  for (double& v : noise.data) v = rng.normal();

  auto loss_fn = [&]() {
    const Tensor features = observation_features(obs);
    const auto [mu, log_var] = bundle.phi.encode_graph(features, Var::constant(z_theta));
    const Var c = reparam_sample(mu, log_var, noise);
    const Var z_phi = bundle.phi.decode_graph(bundle.phi.decode_feature(features), c);
    Var l = nn::add(nn::scale(kl_loss_graph(mu, log_var), kSamplerBeta),
                    recons_loss_graph(z_theta, z_phi));
    return nn::add(l, traj_loss_graph(bundle.pi, demo, 0, z_phi, xg));
  };
  Rng pick(37);
  const double worst = fd_param_check([&] { return loss_fn().scalar(); },
                                      bundle.phi_params(),
                                      [&] { loss_fn().backward(); }, pick, 60);
  CHECK(worst < 1e-4);
}

TEST_CASE("offline training fits a single demo and is deterministic", "[models]") {
  Rng rng(39);
  DemoDataset ds;
  ds.demos.push_back(make_translation_demo(8, 0.04, rng));

  OfflineConfig config;
  config.epochs = 120;
  config.batch_size = 1;
  config.seed = 7;
  config.holdout_fraction = 0.0;

  ModelBundle b1(51);
  const double before =
      traj_loss(b1.pi, ds.demos[0],
                encode_plan(b1.theta, ds.demos[0].records[0].obs, ds.demos[0].plan));
  const OfflineStats stats = train_offline(b1, ds, config);
  const double after =
      traj_loss(b1.pi, ds.demos[0],
                encode_plan(b1.theta, ds.demos[0].records[0].obs, ds.demos[0].plan));
  CHECK(after < 0.35 * before);
  CHECK(stats.curves.size() > 4);

  // Bitwise determinism of training given the seed.
  ModelBundle b2(51);
  train_offline(b2, ds, config);
  CHECK(nn::param_checksum(b1.all_params()) == nn::param_checksum(b2.all_params()));
}
