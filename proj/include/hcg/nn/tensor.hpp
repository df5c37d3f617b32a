#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace hcg::nn {

// Dense row-major float64 matrix. Vectors are 1xN tensors.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }

  static Tensor row(std::initializer_list<double> vals) {
    Tensor t(1, static_cast<int>(vals.size()));
    int j = 0;
    for (double v : vals) t.data[j++] = v;
    return t;
  }

  double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline EigenMap as_eigen(Tensor& t) { return EigenMap(t.data.data(), t.rows, t.cols); }
inline ConstEigenMap as_eigen(const Tensor& t) {
  return ConstEigenMap(t.data.data(), t.rows, t.cols);
}

inline void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace hcg::nn
