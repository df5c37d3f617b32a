#pragma once

#include "hcg/dataset.hpp"
#include "hcg/models.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcg {

struct TrainingDivergenceError : std::runtime_error {
  explicit TrainingDivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct OfflineConfig {
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  // Ablation switches: behavior cloning trains the policy on a zero latent
  // with no embedding or sampler; the no-policy-loss variant drops the
  // trajectory term from the sampler loss.
  bool zero_latent = false;
  bool train_sampler = true;
  bool sampler_policy_loss = true;
  // Gradient steps estimate the suffix mean of the trajectory loss from at
  // most this many sampled steps (0 = all steps). Held-out evaluation always
  // uses the full mean.
  int max_loss_steps = 8;
  // Loss steps are drawn from the first `staleness_window` steps of the
  // suffix (0 = whole suffix), matching the test-time replanning interval:
  // the policy never acts on a latent older than one replanning period.
  int staleness_window = 12;
  std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
};

struct LossCurvePoint {
  int epoch = 0;
  std::string split;
  std::string name;
  double value = 0.0;
};

struct OfflineStats {
  std::vector<LossCurvePoint> curves;
  double initial_holdout_traj = 0.0;
  double final_holdout_traj = 0.0;
  double final_holdout_traj_zero = 0.0;
  int train_demos = 0;
  int holdout_demos = 0;
};

namespace detail {

inline nn::Var encode_suffix(const PlanEncoder& theta, const Demonstration& demo,
                             std::size_t t0) {
  const std::vector<Pose> suffix(demo.plan.begin() + static_cast<long>(t0),
                                 demo.plan.end());
  return theta.encode(plan_to_cloud_sequence(demo.records[t0].obs, suffix));
}

inline double holdout_traj_loss(const ModelBundle& bundle,
                                const std::vector<const Demonstration*>& demos,
                                bool zero_latent, const GripperPoints& xg) {
  double total = 0.0;
  for (const Demonstration* d : demos) {
    nn::Var z = zero_latent ? nn::Var::constant(nn::Tensor::zeros(1, kLatentDim))
                            : nn::Var::constant(encode_suffix(bundle.theta, *d, 0).value());
    total += traj_loss_graph(bundle.pi, *d, 0, z, xg).scalar();
  }
  return total / static_cast<double>(demos.size());
}

}  // namespace detail

// Off-policy training: alternates, per sampled rollout suffix, one gradient
// step on the embedding/policy pair (trajectory loss with z_theta) and one on
// the sampler (beta * KL + latent reconstruction + trajectory loss with
// z_phi; the policy and the z_theta target are held fixed in that step).
inline OfflineStats train_offline(ModelBundle& bundle, const DemoDataset& dataset,
                                  const OfflineConfig& config) {
  if (dataset.demos.empty()) throw std::invalid_argument("train_offline: empty dataset");
  const GripperPoints& xg = default_gripper_points();
  OfflineStats stats;

  // Deterministic train/holdout split by demo index.
  std::vector<int> indices(dataset.demos.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  Rng split_rng(derive_seed(config.seed, "split"));
  split_rng.shuffle(indices);
  const int n_holdout =
      std::min(static_cast<int>(indices.size()) - 1,
               static_cast<int>(std::lround(indices.size() * config.holdout_fraction)));
  std::vector<const Demonstration*> holdout, train;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    (static_cast<int>(i) < n_holdout ? holdout : train)
        .push_back(&dataset.demos[indices[i]]);
  }
  if (holdout.empty()) holdout.push_back(train.back());
  stats.train_demos = static_cast<int>(train.size());
  stats.holdout_demos = static_cast<int>(holdout.size());

  std::vector<nn::ParamRef> embed_params = bundle.pi_params();
  if (!config.zero_latent) {
    for (const auto& p : bundle.theta_params()) embed_params.push_back(p);
  }
  nn::Adam opt_embed(embed_params, {config.lr, 0.9, 0.999, 1e-8});
  nn::Adam opt_phi(bundle.phi_params(), {config.lr, 0.9, 0.999, 1e-8});

  stats.initial_holdout_traj =
      detail::holdout_traj_loss(bundle, holdout, config.zero_latent, xg);
  stats.curves.push_back({0, "holdout", "traj_z", stats.initial_holdout_traj});

  Rng rng(derive_seed(config.seed, "train"));
  const int iters_per_epoch = std::max<int>(
      1, static_cast<int>((train.size() + config.batch_size - 1) / config.batch_size));

  // Step subset of the suffix [t0, n) used for one loss estimate.
  auto sample_steps = [&](const Demonstration& d, std::size_t t0, Rng& r) {
    std::size_t t_end = d.records.size();
    if (config.staleness_window > 0) {
      t_end = std::min(t_end, t0 + static_cast<std::size_t>(config.staleness_window));
    }
    std::vector<std::size_t> steps;
    for (std::size_t t = t0; t < t_end; ++t) steps.push_back(t);
    if (config.max_loss_steps > 0 &&
        steps.size() > static_cast<std::size_t>(config.max_loss_steps)) {
      for (int i = 0; i < config.max_loss_steps; ++i) {
        const int j = i + r.uniform_int(static_cast<int>(steps.size()) - i);
        std::swap(steps[i], steps[j]);
      }
      steps.resize(config.max_loss_steps);
    }
    return steps;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_traj = 0.0, epoch_sampler = 0.0;
    for (int it = 0; it < iters_per_epoch; ++it) {
      // Sample a batch of rollout suffixes.
      std::vector<std::tuple<const Demonstration*, std::size_t, std::vector<std::size_t>>>
          batch;
      for (int b = 0; b < config.batch_size; ++b) {
        const Demonstration* d = train[rng.uniform_int(static_cast<int>(train.size()))];
        const std::size_t t0 =
            static_cast<std::size_t>(rng.uniform_int(static_cast<int>(d->records.size())));
        batch.push_back({d, t0, sample_steps(*d, t0, rng)});
      }

      // Encode Plan: optimize pi (and theta) with the trajectory loss.
      opt_embed.zero_grad();
      nn::Var embed_loss;
      for (const auto& [d, t0, steps] : batch) {
        const nn::Var z = config.zero_latent
                              ? nn::Var::constant(nn::Tensor::zeros(1, kLatentDim))
                              : detail::encode_suffix(bundle.theta, *d, t0);
        const nn::Var l = traj_loss_over_steps(bundle.pi, *d, steps, z, xg);
        embed_loss = embed_loss.valid() ? nn::add(embed_loss, l) : l;
      }
      embed_loss = nn::scale(embed_loss, 1.0 / config.batch_size);
      if (!std::isfinite(embed_loss.scalar())) {
        throw TrainingDivergenceError("trajectory loss diverged at epoch " +
                                      std::to_string(epoch));
      }
      embed_loss.backward();
      opt_embed.step();
      epoch_traj += embed_loss.scalar();

      // Generate Plan: autoencode z_theta and optimize phi only.
      if (config.train_sampler) {
        opt_phi.zero_grad();
        nn::Var phi_loss;
        for (const auto& [d, t0, steps] : batch) {
          const nn::Tensor features = observation_features(d->records[t0].obs);
          const nn::Tensor z_theta = detail::encode_suffix(bundle.theta, *d, t0).value();
          const auto [mu, log_var] =
              bundle.phi.encode_graph(features, nn::Var::constant(z_theta));
          nn::Tensor noise(1, kVaeLatentDim);
          for (double& v : noise.data) v = rng.normal();
          const nn::Var c = reparam_sample(mu, log_var, noise);
          const nn::Var z_phi =
              bundle.phi.decode_graph(bundle.phi.decode_feature(features), c);
          nn::Var l = nn::add(nn::scale(kl_loss_graph(mu, log_var), kSamplerBeta),
                              recons_loss_graph(z_theta, z_phi));
          if (config.sampler_policy_loss) {
            l = nn::add(l, traj_loss_over_steps(bundle.pi, *d, steps, z_phi, xg));
          }
          phi_loss = phi_loss.valid() ? nn::add(phi_loss, l) : l;
        }
        phi_loss = nn::scale(phi_loss, 1.0 / config.batch_size);
        if (!std::isfinite(phi_loss.scalar())) {
          throw TrainingDivergenceError("sampler loss diverged at epoch " +
                                        std::to_string(epoch));
        }
        phi_loss.backward();
        opt_phi.step();
        epoch_sampler += phi_loss.scalar();
      }
    }

    stats.curves.push_back({epoch, "train", "traj_z", epoch_traj / iters_per_epoch});
    if (config.train_sampler) {
      stats.curves.push_back({epoch, "train", "sampler", epoch_sampler / iters_per_epoch});
    }
    const double ho = detail::holdout_traj_loss(bundle, holdout, config.zero_latent, xg);
    stats.curves.push_back({epoch, "holdout", "traj_z", ho});
    stats.final_holdout_traj = ho;

    if (!config.checkpoint_dir.empty()) {
      std::filesystem::create_directories(config.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_epoch_%03d.ckpt", epoch);
      bundle.save(config.checkpoint_dir + name);
    }
  }

  stats.final_holdout_traj_zero =
      detail::holdout_traj_loss(bundle, holdout, /*zero_latent=*/true, xg);
  stats.curves.push_back(
      {config.epochs, "holdout", "traj_zero", stats.final_holdout_traj_zero});
  return stats;
}

}  // namespace hcg
