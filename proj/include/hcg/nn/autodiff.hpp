#pragma once

#include "hcg/geometry.hpp"
#include "hcg/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace hcg::nn {

// Reverse-mode autodiff over Tensor values. Each op eagerly computes its
// value and records a backward closure; backward() walks the graph in
// reverse topological order and accumulates exact analytic gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.rows, value.cols);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(n);
  }

  static Var leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(n);
  }

  const NodePtr& node() const { return node_; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  int rows() const { return node_->value.rows; }
  int cols() const { return node_->value.cols; }
  bool valid() const { return node_ != nullptr; }

  double scalar() const {
    check_shape(rows() == 1 && cols() == 1, "scalar() on non-1x1 tensor");
    return node_->value.data[0];
  }

  // Backpropagates from this scalar node.
  void backward() const {
    check_shape(rows() == 1 && cols() == 1, "backward() needs a scalar loss");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn && !(*it)->grad.data.empty()) (*it)->backward_fn(**it);
    }
  }

 private:
  NodePtr node_;
};

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  n->requires_grad = any;
  if (any) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

inline void accumulate(const NodePtr& p, const Tensor& g) {
  Tensor& pg = p->ensure_grad();
  for (std::size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += g.data[i];
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  check_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tensor out(a.rows(), b.cols());
  // Fixed scalar accumulation order in k per output element (vectorization
  // runs across j only), so row permutations of `a` permute the output rows
  // bitwise; set encoders rely on this for exact permutation invariance.
  {
    const int rows = a.rows(), inner = a.cols(), cols = b.cols();
    const double* ad = a.value().data.data();
    const double* bd = b.value().data.data();
    double* od = out.data.data();
    for (int i = 0; i < rows; ++i) {
      for (int k = 0; k < inner; ++k) {
        const double av = ad[static_cast<std::size_t>(i) * inner + k];
        const double* brow = bd + static_cast<std::size_t>(k) * cols;
        double* orow = od + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) orow[j] += av * brow[j];
      }
    }
  }
  auto an = a.node(), bn = b.node();
  return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& n) {
    if (an->requires_grad) {
      Tensor ga(an->value.rows, an->value.cols);
      as_eigen(ga) = as_eigen(n.grad) * as_eigen(bn->value).transpose();
      detail::accumulate(an, ga);
    }
    if (bn->requires_grad) {
      Tensor gb(bn->value.rows, bn->value.cols);
      as_eigen(gb) = as_eigen(an->value).transpose() * as_eigen(n.grad);
      detail::accumulate(bn, gb);
    }
  }));
}

inline Var add(const Var& a, const Var& b) {
  check_shape(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
  auto an = a.node(), bn = b.node();
  return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& n) {
    if (an->requires_grad) detail::accumulate(an, n.grad);
    if (bn->requires_grad) detail::accumulate(bn, n.grad);
  }));
}

// Broadcasts a 1xC row over the rows of a NxC tensor.
inline Var add_rowvec(const Var& a, const Var& b) {
  check_shape(b.rows() == 1 && a.cols() == b.cols(), "add_rowvec: shape mismatch");
  Tensor out = a.value();
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += b.value()(0, j);
  auto an = a.node(), bn = b.node();
  return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& n) {
    if (an->requires_grad) detail::accumulate(an, n.grad);
    if (bn->requires_grad) {
      Tensor gb(1, bn->value.cols);
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < n.grad.cols; ++j) gb(0, j) += n.grad(i, j);
      detail::accumulate(bn, gb);
    }
  }));
}

inline Var sub(const Var& a, const Var& b) {
  check_shape(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  auto an = a.node(), bn = b.node();
  return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& n) {
    if (an->requires_grad) detail::accumulate(an, n.grad);
    if (bn->requires_grad) {
      Tensor gb = n.grad;
      for (double& v : gb.data) v = -v;
      detail::accumulate(bn, gb);
    }
  }));
}

inline Var mul(const Var& a, const Var& b) {
  check_shape(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
  auto an = a.node(), bn = b.node();
  return Var(detail::make_op(std::move(out), {an, bn}, [an, bn](Node& n) {
    if (an->requires_grad) {
      Tensor ga = n.grad;
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= bn->value.data[i];
      detail::accumulate(an, ga);
    }
    if (bn->requires_grad) {
      Tensor gb = n.grad;
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= an->value.data[i];
      detail::accumulate(bn, gb);
    }
  }));
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  auto an = a.node();
  return Var(detail::make_op(std::move(out), {an}, [an, s](Node& n) {
    Tensor g = n.grad;
    for (double& v : g.data) v *= s;
    detail::accumulate(an, g);
  }));
}

namespace detail {

template <typename F, typename DF>
Var unary_elementwise(const Var& a, F f, DF df) {
  Tensor out = a.value();
  for (double& v : out.data) v = f(v);
  auto an = a.node();
  return Var(make_op(std::move(out), {an}, [an, df](Node& n) {
    Tensor g = n.grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      g.data[i] *= df(an->value.data[i], n.value.data[i]);
    }
    accumulate(an, g);
  }));
}

}  // namespace detail

// relu gradient at exactly 0 is defined as 0.
inline Var relu(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh_op(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary_elementwise(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

inline Var exp_op(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// abs gradient at exactly 0 is defined as 0.
inline Var abs_op(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& a) {
  return detail::unary_elementwise(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var sum_all(const Var& a) {
  Tensor out(1, 1);
  for (double v : a.value().data) out.data[0] += v;
  auto an = a.node();
  return Var(detail::make_op(std::move(out), {an}, [an](Node& n) {
    Tensor g(an->value.rows, an->value.cols);
    for (double& v : g.data) v = n.grad.data[0];
    detail::accumulate(an, g);
  }));
}

inline Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return scale(sum_all(a), inv);
}

// Column-wise max over rows (the set-encoder pooling). Ties route the
// gradient to the lowest row index.
inline Var max_rows(const Var& a) {
  check_shape(a.rows() >= 1, "max_rows: empty input");
  Tensor out(1, a.cols());
  auto argmax = std::make_shared<std::vector<int>>(a.cols(), 0);
  for (int j = 0; j < a.cols(); ++j) {
    double best = a.value()(0, j);
    int bi = 0;
    for (int i = 1; i < a.rows(); ++i) {
      if (a.value()(i, j) > best) {
        best = a.value()(i, j);
        bi = i;
      }
    }
    out(0, j) = best;
    (*argmax)[j] = bi;
  }
  auto an = a.node();
  return Var(detail::make_op(std::move(out), {an}, [an, argmax](Node& n) {
    Tensor g(an->value.rows, an->value.cols);
    for (int j = 0; j < g.cols; ++j) g((*argmax)[j], j) += n.grad(0, j);
    detail::accumulate(an, g);
  }));
}

inline Var concat_cols(const std::vector<Var>& parts) {
  check_shape(!parts.empty(), "concat_cols: empty");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Var& p : parts) {
    check_shape(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  int off = 0;
  for (const Var& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols(); ++j) out(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  std::vector<NodePtr> parents;
  for (const Var& p : parts) parents.push_back(p.node());
  return Var(detail::make_op(std::move(out), parents, [parents](Node& n) {
    int off = 0;
    for (const auto& p : parents) {
      if (p->requires_grad) {
        Tensor g(p->value.rows, p->value.cols);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) g(i, j) = n.grad(i, off + j);
        detail::accumulate(p, g);
      }
      off += p->value.cols;
    }
  }));
}

inline Var concat_rows(const std::vector<Var>& parts) {
  check_shape(!parts.empty(), "concat_rows: empty");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Var& p : parts) {
    check_shape(p.cols() == cols, "concat_rows: col mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  int off = 0;
  for (const Var& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < cols; ++j) out(off + i, j) = p.value()(i, j);
    off += p.rows();
  }
  std::vector<NodePtr> parents;
  for (const Var& p : parts) parents.push_back(p.node());
  return Var(detail::make_op(std::move(out), parents, [parents](Node& n) {
    int off = 0;
    for (const auto& p : parents) {
      if (p->requires_grad) {
        Tensor g(p->value.rows, p->value.cols);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) g(i, j) = n.grad(off + i, j);
        detail::accumulate(p, g);
      }
      off += p->value.rows;
    }
  }));
}

inline Var slice_cols(const Var& a, int c0, int c1) {
  check_shape(0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: bad range");
  Tensor out(a.rows(), c1 - c0);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) = a.value()(i, c0 + j);
  auto an = a.node();
  return Var(detail::make_op(std::move(out), {an}, [an, c0](Node& n) {
    Tensor g(an->value.rows, an->value.cols);
    for (int i = 0; i < n.grad.rows; ++i)
      for (int j = 0; j < n.grad.cols; ++j) g(i, c0 + j) = n.grad(i, j);
    detail::accumulate(an, g);
  }));
}

// Rotates a fixed point set by the axis-angle vector omega (1x3): row i of
// the output is exp_map(omega) * points[i]. Gradient flows into omega only,
// via d(R p)/d omega = -skew(R p) * J_l(omega).
inline Var rotate_points(const Var& omega, const std::vector<Vec3>& points) {
  check_shape(omega.rows() == 1 && omega.cols() == 3, "rotate_points: omega must be 1x3");
  const Vec3 w(omega.value()(0, 0), omega.value()(0, 1), omega.value()(0, 2));
  const Mat3 r = exp_map(w);
  Tensor out(static_cast<int>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 rp = r * points[i];
    out(static_cast<int>(i), 0) = rp.x();
    out(static_cast<int>(i), 1) = rp.y();
    out(static_cast<int>(i), 2) = rp.z();
  }
  auto on = omega.node();
  const Mat3 jl = so3_left_jacobian(w);
  return Var(detail::make_op(std::move(out), {on}, [on, jl](Node& n) {
    Tensor g(1, 3);
    for (int i = 0; i < n.value.rows; ++i) {
      const Vec3 rp(n.value(i, 0), n.value(i, 1), n.value(i, 2));
      const Eigen::Matrix3d jac = -skew(rp) * jl;
      const Vec3 up(n.grad(i, 0), n.grad(i, 1), n.grad(i, 2));
      const Vec3 gw = jac.transpose() * up;
      g(0, 0) += gw.x();
      g(0, 1) += gw.y();
      g(0, 2) += gw.z();
    }
    detail::accumulate(on, g);
  }));
}

}  // namespace hcg::nn
