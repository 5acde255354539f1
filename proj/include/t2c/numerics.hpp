// Copyright 2026 The t2c-fusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense kernel shared by every other module.
//
// Numeric contract:
//  * storage is row-major; the production scalar is float, double is used by
//    gradient checks;
//  * every reduction accumulates in double, sequentially, in index order, and
//    rounds once on store;
//  * matmul output row i depends only on input row i, so evaluating a prefix
//    of rows yields bitwise the same values as evaluating all of them. The
//    incremental decoder relies on this.

#ifndef T2C_NUMERICS_HPP_
#define T2C_NUMERICS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "t2c/errors.hpp"

namespace t2c {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixRef = Eigen::Ref<const MatrixX<Scalar>>;

using Matrix = MatrixX<float>;
using Vector = VectorX<float>;

namespace detail {

// c[i, :] = sum_p a[i, p] * b[p, :], p ascending, double accumulator.
template <typename S>
void gemm_rows(const S* a, Index a_stride, const S* b, Index b_stride, S* c, Index c_stride,
               Index m, Index k, Index n) {
  thread_local std::vector<double> acc;
  acc.assign(static_cast<std::size_t>(n), 0.0);
  double* accp = acc.data();
  for (Index i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const S* ai = a + i * a_stride;
    for (Index p = 0; p < k; ++p) {
      const double av = static_cast<double>(ai[p]);
      const S* bp = b + p * b_stride;
      for (Index j = 0; j < n; ++j) accp[j] += av * static_cast<double>(bp[j]);
    }
    S* ci = c + i * c_stride;
    for (Index j = 0; j < n; ++j) ci[j] = static_cast<S>(accp[j]);
  }
}

}  // namespace detail

// a * b.
template <typename S>
MatrixX<S> matmul_ref(const MatrixRef<S>& a, const MatrixRef<S>& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + ")");
  }
  MatrixX<S> c(a.rows(), b.cols());
  if (c.size() == 0) return c;
  if (a.cols() == 0) {
    c.setZero();
    return c;
  }
  detail::gemm_rows(a.data(), a.outerStride(), b.data(), b.outerStride(), c.data(), c.cols(),
                    a.rows(), a.cols(), b.cols());
  return c;
}

// a * b^T.
template <typename S>
MatrixX<S> matmul_nt_ref(const MatrixRef<S>& a, const MatrixRef<S>& b) {
  if (a.cols() != b.cols()) {
    throw ContractError("matmul_nt: inner dimensions differ (" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.cols()) + ")");
  }
  const MatrixX<S> bt = b.transpose();
  return matmul_ref<S>(a, bt);
}

// a^T * b. Accumulates over the shared row index in ascending order.
template <typename S>
MatrixX<S> matmul_tn_ref(const MatrixRef<S>& a, const MatrixRef<S>& b) {
  if (a.rows() != b.rows()) {
    throw ContractError("matmul_tn: row counts differ (" + std::to_string(a.rows()) + " vs " +
                        std::to_string(b.rows()) + ")");
  }
  const Index k = a.cols(), m = a.rows(), n = b.cols();
  MatrixX<S> c(k, n);
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (Index i = 0; i < k; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index t = 0; t < m; ++t) {
      const double av = static_cast<double>(a(t, i));
      const S* bt = b.data() + t * b.outerStride();
      for (Index j = 0; j < n; ++j) acc[j] += av * static_cast<double>(bt[j]);
    }
    for (Index j = 0; j < n; ++j) c(i, j) = static_cast<S>(acc[j]);
  }
  return c;
}

template <typename DA, typename DB>
MatrixX<typename DA::Scalar> matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using S = typename DA::Scalar;
  return matmul_ref<S>(a, b);
}

template <typename DA, typename DB>
MatrixX<typename DA::Scalar> matmul_nt(const Eigen::MatrixBase<DA>& a,
                                       const Eigen::MatrixBase<DB>& b) {
  using S = typename DA::Scalar;
  return matmul_nt_ref<S>(a, b);
}

template <typename DA, typename DB>
MatrixX<typename DA::Scalar> matmul_tn(const Eigen::MatrixBase<DA>& a,
                                       const Eigen::MatrixBase<DB>& b) {
  using S = typename DA::Scalar;
  return matmul_tn_ref<S>(a, b);
}

// In-place softmax over n contiguous values; max-subtracted, double sums.
template <typename S>
void softmax_inplace(S* x, Index n) {
  if (n <= 0) throw ContractError("softmax: empty input");
  double mx = static_cast<double>(x[0]);
  for (Index i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(x[i]));
  thread_local std::vector<double> e;
  e.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - mx);
    total += e[i];
  }
  for (Index i = 0; i < n; ++i) x[i] = static_cast<S>(e[i] / total);
}

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  if (v.size() == 0) throw ContractError("softmax: empty input");
  VectorX<S> out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const S value = v.derived().coeff(i);
    if (!std::isfinite(static_cast<double>(value))) {
      throw ContractError("softmax: non-finite input at index " + std::to_string(i));
    }
    out[i] = value;
  }
  softmax_inplace(out.data(), out.size());
  return out;
}

// Column-wise mean over the rows selected by row_mask.
template <typename Derived>
VectorX<typename Derived::Scalar> mean_rows(const Eigen::MatrixBase<Derived>& m,
                                            const std::vector<bool>& row_mask) {
  using S = typename Derived::Scalar;
  if (static_cast<Index>(row_mask.size()) != m.rows()) {
    throw ContractError("mean_rows: mask length " + std::to_string(row_mask.size()) +
                        " does not match " + std::to_string(m.rows()) + " rows");
  }
  std::vector<double> acc(static_cast<std::size_t>(m.cols()), 0.0);
  Index selected = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    if (!row_mask[static_cast<std::size_t>(r)]) continue;
    ++selected;
    for (Index c = 0; c < m.cols(); ++c) acc[c] += static_cast<double>(m.derived().coeff(r, c));
  }
  if (selected == 0) throw ContractError("mean_rows: no rows selected");
  VectorX<S> out(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    out[c] = static_cast<S>(acc[c] / static_cast<double>(selected));
  }
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> mean_rows(const Eigen::MatrixBase<Derived>& m) {
  return mean_rows(m, std::vector<bool>(static_cast<std::size_t>(m.rows()), true));
}

// Statistics kept by the layer-norm forward pass for its backward pass.
struct NormStats {
  double mean = 0.0;
  double inv_std = 0.0;
};

// out[i] = (x[i] - mean) / sqrt(var + eps) * gain[i] + bias[i]; population variance.
template <typename S>
NormStats layer_norm_row(const S* x, const S* gain, const S* bias, double eps, S* out, Index n) {
  double mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += static_cast<double>(x[i]);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  for (Index i = 0; i < n; ++i) {
    const double xhat = (static_cast<double>(x[i]) - mean) * inv_std;
    out[i] = static_cast<S>(xhat * static_cast<double>(gain[i]) + static_cast<double>(bias[i]));
  }
  return {mean, inv_std};
}

template <typename S>
VectorX<S> layer_norm(const VectorX<S>& v, const VectorX<S>& gain, const VectorX<S>& bias,
                      double eps) {
  if (v.size() != gain.size() || v.size() != bias.size()) {
    throw ContractError("layer_norm: length mismatch");
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  if (v.size() == 0) throw ContractError("layer_norm: empty input");
  VectorX<S> out(v.size());
  layer_norm_row(v.data(), gain.data(), bias.data(), eps, out.data(), v.size());
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(static_cast<double>(m.derived().coeff(r, c)))) return false;
  return true;
}

// xoshiro256** seeded through splitmix64.
//
//   splitmix64:  z = (s += 0x9E3779B97F4A7C15);
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB;  return z ^ (z >> 31)
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9;  t = s1 << 17;
//                s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//
// uniform() takes the top 53 bits; normal() is Box-Muller using two uniforms
// per call (no cached second variate). split() seeds a child generator from
// one output of the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Unbiased integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  Rng split();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  const std::uint64_t* state() const { return s_; }

 private:
  std::uint64_t s_[4];
};

}  // namespace t2c

#endif  // T2C_NUMERICS_HPP_
