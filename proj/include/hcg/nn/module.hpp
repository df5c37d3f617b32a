#pragma once

#include "hcg/nn/autodiff.hpp"
#include "hcg/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hcg::nn {

struct ParamRef {
  std::string name;
  NodePtr node;
};

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    Tensor& g = p.node->ensure_grad();
    std::fill(g.data.begin(), g.data.end(), 0.0);
  }
}

// Deterministic parameter checksum; used to assert frozen networks stay
// bitwise unchanged.
inline std::uint64_t param_checksum(const std::vector<ParamRef>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ParamRef& p : params) {
    for (double v : p.node->value.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Fully connected layer y = x W + b. Weights initialized uniformly in
// +-sqrt(6 / (fan_in + fan_out)), biases zero.
struct Linear {
  Var w, b;

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    Tensor wt(in, out);
    const double bound = std::sqrt(6.0 / (in + out));
    for (double& v : wt.data) v = rng.uniform(-bound, bound);
    w = Var::leaf(std::move(wt));
    b = Var::leaf(Tensor::zeros(1, out));
  }

  Var operator()(const Var& x) const { return add_rowvec(matmul(x, w), b); }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) const {
    out.push_back({prefix + ".w", w.node()});
    out.push_back({prefix + ".b", b.node()});
  }
};

// MLP with relu between layers; the final layer is linear unless
// final_relu is set.
struct Mlp {
  std::vector<Linear> layers;
  bool final_relu = false;

  Mlp() = default;
  Mlp(const std::vector<int>& dims, Rng& rng, bool final_relu_ = false)
      : final_relu(final_relu_) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      layers.emplace_back(dims[i], dims[i + 1], rng);
    }
  }

  Var operator()(Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size() || final_relu) x = relu(x);
    }
    return x;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].collect(prefix + ".l" + std::to_string(i), out);
    }
  }
};

// Permutation-invariant point-set encoder: a shared per-point MLP applied
// row-wise, max-pooled over the point dimension.
struct SetEncoder {
  Mlp per_point;

  SetEncoder() = default;
  SetEncoder(int in_dim, Rng& rng) : per_point({in_dim, 64, 128}, rng, /*final_relu=*/true) {}
  SetEncoder(std::vector<int> dims, Rng& rng) : per_point(dims, rng, /*final_relu=*/true) {}

  int out_dim() const { return per_point.layers.back().w.cols(); }

  Var operator()(const Var& points) const {
    check_shape(points.rows() >= 1, "set_encode: empty point cloud");
    return max_rows(per_point(points));
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) const {
    per_point.collect(prefix + ".pp", out);
  }
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  using Hyper = AdamHyper;

  Adam() = default;
  explicit Adam(std::vector<ParamRef> params, Hyper hyper = Hyper())
      : params_(std::move(params)), hyper_(hyper) {
    for (const ParamRef& p : params_) {
      m_.push_back(Tensor::zeros(p.node->value.rows, p.node->value.cols));
      v_.push_back(Tensor::zeros(p.node->value.rows, p.node->value.cols));
    }
  }

  const std::vector<ParamRef>& params() const { return params_; }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, t_);
    const double bc2 = 1.0 - std::pow(hyper_.beta2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& val = params_[k].node->value;
      const Tensor& g = params_[k].node->ensure_grad();
      for (std::size_t i = 0; i < val.data.size(); ++i) {
        m_[k].data[i] = hyper_.beta1 * m_[k].data[i] + (1.0 - hyper_.beta1) * g.data[i];
        v_[k].data[i] =
            hyper_.beta2 * v_[k].data[i] + (1.0 - hyper_.beta2) * g.data[i] * g.data[i];
        const double mhat = m_[k].data[i] / bc1;
        const double vhat = v_[k].data[i] / bc2;
        val.data[i] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
      }
    }
  }

 private:
  std::vector<ParamRef> params_;
  Hyper hyper_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
};

}  // namespace hcg::nn
