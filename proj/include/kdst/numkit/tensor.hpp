#pragma once

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/numkit/csr.hpp"
#include "kdst/numkit/rng.hpp"
#include "kdst/numkit/simd_math.hpp"

namespace kdst::numkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (const std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

inline void ensure_single_thread_blas() {
  static const bool once = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)once;
}

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
  ensure_single_thread_blas();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  ensure_single_thread_blas();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

}  // namespace detail

// One value in the computation graph. Tensors are shared handles to nodes;
// parameters are leaf nodes that persist across forward passes while
// intermediate nodes are dropped when the last handle goes away.
template <class S>
struct NodeT {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backprop;

  std::size_t numel() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <class S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<NodeT<S>> n) : node_(std::move(n)) {}

  static TensorT from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor: " + shape_str(shape) + " cannot hold " + std::to_string(data.size()) +
                       " values");
    auto n = std::make_shared<NodeT<S>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    std::vector<S> d(shape_numel(shape), S(0));
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static TensorT full(Shape shape, S v, bool requires_grad = false) {
    std::vector<S> d(shape_numel(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static TensorT scalar(S v) { return from_data({1}, {v}); }

  static TensorT randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false) {
    std::vector<S> d(shape_numel(shape));
    for (auto& x : d) x = static_cast<S>(rng.normal(0.0, stddev));
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  // Glorot/Xavier uniform for [fan_in x fan_out] weight matrices.
  static TensorT glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<S> d(fan_in * fan_out);
    for (auto& x : d) x = static_cast<S>(rng.uniform(-limit, limit));
    return from_data({fan_in, fan_out}, std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  // Any tensor is usable as a [rows x cols] matrix with trailing dims folded.
  std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : numel() / rows(); }

  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }
  std::vector<S>& grad() { return node_->grad; }
  const std::vector<S>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  S item() const {
    if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " values");
    return node_->value[0];
  }

  S at(std::size_t i) const { return node_->value[i]; }
  S at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<NodeT<S>> node() const { return node_; }

  // Detached copy of the values; never carries gradient history.
  TensorT detach() const { return from_data(node_->shape, node_->value, false); }

 private:
  std::shared_ptr<NodeT<S>> node_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

template <class S>
void check_finite(const std::vector<S>& v, const char* op) {
  for (const S x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

template <class S, class Backprop>
TensorT<S> make_op(const char* name, Shape shape, std::vector<S> value,
                   std::vector<TensorT<S>> parents, Backprop&& backprop) {
  if (debug_checks_enabled()) check_finite(value, name);
  auto n = std::make_shared<NodeT<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backprop = std::forward<Backprop>(backprop);
  return TensorT<S>(std::move(n));
}

template <class S>
std::vector<S>& parent_grad(NodeT<S>& n, std::size_t i) {
  n.parents[i]->ensure_grad();
  return n.parents[i]->grad;
}

template <class S>
bool parent_wants_grad(const NodeT<S>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) + b.at(i);
  return detail::make_op<S>("add", a.shape(), std::move(y), {a, b}, [](NodeT<S>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!detail::parent_wants_grad(n, p)) continue;
      auto& g = detail::parent_grad(n, p);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) - b.at(i);
  return detail::make_op<S>("sub", a.shape(), std::move(y), {a, b}, [](NodeT<S>& n) {
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * b.at(i);
  return detail::make_op<S>("mul", a.shape(), std::move(y), {a, b}, [](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

template <class S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("div: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) / b.at(i);
  return detail::make_op<S>("div", a.shape(), std::move(y), {a, b}, [](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    const auto& bv = n.parents[1]->value;
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] / bv[i];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

template <class S>
TensorT<S> neg(const TensorT<S>& a) {
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -a.at(i);
  return detail::make_op<S>("neg", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
  });
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, double c) {
  std::vector<S> y(a.numel());
  const S cs = static_cast<S>(c);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * cs;
  return detail::make_op<S>("scale", a.shape(), std::move(y), {a}, [cs](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * cs;
  });
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, double c) {
  std::vector<S> y(a.numel());
  const S cs = static_cast<S>(c);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) + cs;
  return detail::make_op<S>("add_scalar", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

// y[i, j] = a[i, j] + v[j]
template <class S>
TensorT<S> add_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  const std::size_t m = a.rows(), nc = a.cols();
  if (v.numel() != nc)
    throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " vs " + shape_str(v.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nc; ++j) y[i * nc + j] = a.at(i * nc + j) + v.at(j);
  return detail::make_op<S>("add_rowvec", a.shape(), std::move(y), {a, v}, [m, nc](NodeT<S>& n) {
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nc; ++j) g[j] += n.grad[i * nc + j];
    }
  });
}

// y[i, j] = a[i, j] * v[j]
template <class S>
TensorT<S> mul_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  const std::size_t m = a.rows(), nc = a.cols();
  if (v.numel() != nc)
    throw ShapeError("mul_rowvec: " + shape_str(a.shape()) + " vs " + shape_str(v.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nc; ++j) y[i * nc + j] = a.at(i * nc + j) * v.at(j);
  return detail::make_op<S>("mul_rowvec", a.shape(), std::move(y), {a, v}, [m, nc](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    const auto& vv = n.parents[1]->value;
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nc; ++j) g[i * nc + j] += n.grad[i * nc + j] * vv[j];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nc; ++j) g[j] += n.grad[i * nc + j] * av[i * nc + j];
    }
  });
}

// y[i, :] = a[i, :] * s[i]
template <class S>
TensorT<S> scale_rows(const TensorT<S>& a, const TensorT<S>& s) {
  const std::size_t m = a.rows(), nc = a.cols();
  if (s.numel() != m)
    throw ShapeError("scale_rows: " + shape_str(a.shape()) + " vs " + shape_str(s.shape()));
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nc; ++j) y[i * nc + j] = a.at(i * nc + j) * s.at(i);
  return detail::make_op<S>("scale_rows", a.shape(), std::move(y), {a, s}, [m, nc](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    const auto& sv = n.parents[1]->value;
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nc; ++j) g[i * nc + j] += n.grad[i * nc + j] * sv[i];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < m; ++i) {
        S acc = 0;
        for (std::size_t j = 0; j < nc; ++j) acc += n.grad[i * nc + j] * av[i * nc + j];
        g[i] += acc;
      }
    }
  });
}

// y = a * s with s a single-element tensor (e.g. a learnable coefficient).
template <class S>
TensorT<S> scale_by_scalar(const TensorT<S>& a, const TensorT<S>& s) {
  if (s.numel() != 1) throw ShapeError("scale_by_scalar: scalar operand expected");
  std::vector<S> y(a.numel());
  const S sv = s.at(0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * sv;
  return detail::make_op<S>("scale_by_scalar", a.shape(), std::move(y), {a, s}, [](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    const S sv = n.parents[1]->value[0];
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * sv;
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      S acc = 0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * av[i];
      g[0] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) > S(0) ? a.at(i) : S(0);
  return detail::make_op<S>("relu", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (av[i] > S(0)) g[i] += n.grad[i];
  });
}

template <class S>
TensorT<S> leaky_relu(const TensorT<S>& a, double slope) {
  std::vector<S> y(a.numel());
  const S sl = static_cast<S>(slope);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) > S(0) ? a.at(i) : sl * a.at(i);
  return detail::make_op<S>("leaky_relu", a.shape(), std::move(y), {a}, [sl](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      g[i] += n.grad[i] * (av[i] > S(0) ? S(1) : sl);
  });
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(a.at(i)))));
  return detail::make_op<S>("sigmoid", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      g[i] += n.grad[i] * n.value[i] * (S(1) - n.value[i]);
  });
}

template <class S>
TensorT<S> silu(const TensorT<S>& a) {
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(a.at(i));
    y[i] = static_cast<S>(x / (1.0 + std::exp(-x)));
  }
  return detail::make_op<S>("silu", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double x = static_cast<double>(av[i]);
      const double sig = 1.0 / (1.0 + std::exp(-x));
      g[i] += n.grad[i] * static_cast<S>(sig * (1.0 + x * (1.0 - sig)));
    }
  });
}

template <class S>
TensorT<S> exp_(const TensorT<S>& a) {
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(a.at(i));
  return detail::make_op<S>("exp", a.shape(), std::move(y), {a}, [](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * n.value[i];
  });
}

// Gradient passes through where the *input* lies inside [lo, hi].
template <class S>
TensorT<S> clamp(const TensorT<S>& a, double lo, double hi) {
  std::vector<S> y(a.numel());
  const S l = static_cast<S>(lo), h = static_cast<S>(hi);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(h, std::max(l, a.at(i)));
  return detail::make_op<S>("clamp", a.shape(), std::move(y), {a}, [l, h](NodeT<S>& n) {
    const auto& av = n.parents[0]->value;
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (av[i] >= l && av[i] <= h) g[i] += n.grad[i];
  });
}

// Inverted dropout on the inputs of a layer; identity when not training.
template <class S>
TensorT<S> dropout(const TensorT<S>& a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<S>>(a.numel());
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool keep = !rng.bernoulli(p);
    (*mask)[i] = keep ? keep_scale : S(0);
    y[i] = a.at(i) * (*mask)[i];
  }
  return detail::make_op<S>("dropout", a.shape(), std::move(y), {a}, [mask](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

// [m x k] . [k x n]; trailing dims of either operand fold into its columns.
// Small products run a fixed ascending-k loop so they accumulate in exactly
// the order spmm uses; larger ones go to BLAS.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<S> y(m * n, S(0));
  if (m * n * k <= 262144) {
    for (std::size_t i = 0; i < m; ++i) {
      const S* ar = a.values().data() + i * k;
      S* yr = y.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const S av = ar[p];
        const S* br = b.values().data() + p * n;
        for (std::size_t j = 0; j < n; ++j) yr[j] += av * br[j];
      }
    }
  } else {
    detail::gemm(false, false, m, n, k, S(1), a.values().data(), k, b.values().data(), n, S(0),
                 y.data(), n);
  }
  return detail::make_op<S>("matmul", Shape{m, n}, std::move(y), {a, b}, [m, n, k](NodeT<S>& n_) {
    const auto& av = n_.parents[0]->value;
    const auto& bv = n_.parents[1]->value;
    if (detail::parent_wants_grad(n_, 0)) {
      auto& g = detail::parent_grad(n_, 0);
      detail::gemm(false, true, m, k, n, S(1), n_.grad.data(), n, bv.data(), n, S(1), g.data(), k);
    }
    if (detail::parent_wants_grad(n_, 1)) {
      auto& g = detail::parent_grad(n_, 1);
      detail::gemm(true, false, k, n, m, S(1), av.data(), k, n_.grad.data(), n, S(1), g.data(), n);
    }
  });
}

// a . b^T for a [m x k], b [n x k]; the natural layout for coefficient
// tensors stored output-major.
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  std::vector<S> y(m * n, S(0));
  detail::gemm(false, true, m, n, k, S(1), a.values().data(), k, b.values().data(), k, S(0), y.data(),
               n);
  return detail::make_op<S>("matmul_nt", Shape{m, n}, std::move(y), {a, b}, [m, n, k](NodeT<S>& n_) {
    const auto& av = n_.parents[0]->value;
    const auto& bv = n_.parents[1]->value;
    if (detail::parent_wants_grad(n_, 0)) {
      auto& g = detail::parent_grad(n_, 0);
      detail::gemm(false, false, m, k, n, S(1), n_.grad.data(), n, bv.data(), k, S(1), g.data(), k);
    }
    if (detail::parent_wants_grad(n_, 1)) {
      auto& g = detail::parent_grad(n_, 1);
      detail::gemm(true, false, n, k, m, S(1), n_.grad.data(), n, av.data(), k, S(1), g.data(), k);
    }
  });
}

// Sparse [m x k] times dense [k x n]. Accumulation runs in ascending column
// order per row, which pins the reduction order for reproducibility.
template <class S>
TensorT<S> spmm(const CsrMatrixT<S>& a, const TensorT<S>& b) {
  if (a.n_cols != b.rows())
    throw ShapeError("spmm: sparse [" + std::to_string(a.n_rows) + "x" + std::to_string(a.n_cols) +
                     "] x " + shape_str(b.shape()));
  const std::size_t m = a.n_rows, n = b.cols();
  std::vector<S> y(m * n, S(0));
  for (std::size_t r = 0; r < m; ++r) {
    S* yr = y.data() + r * n;
    for (std::int64_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const S v = a.values[static_cast<std::size_t>(k)];
      const S* br = b.values().data() +
                    static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(k)]) * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += v * br[j];
    }
  }
  // dB = A^T dC; the transpose is built on the backward pass from a copy of
  // the sparse operand (the caller's matrix may not outlive this node).
  auto at = std::make_shared<CsrMatrixT<S>>(a);
  auto built = std::make_shared<bool>(false);
  return detail::make_op<S>("spmm", Shape{m, n}, std::move(y), {b},
                            [at, built, m, n](NodeT<S>& n_) {
    if (!detail::parent_wants_grad(n_, 0)) return;
    if (!*built) {
      *at = at->transpose();
      *built = true;
    }
    auto& g = detail::parent_grad(n_, 0);
    for (std::size_t r = 0; r < at->n_rows; ++r) {
      S* gr = g.data() + r * n;
      for (std::int64_t k = at->row_ptr[r]; k < at->row_ptr[r + 1]; ++k) {
        const S v = at->values[static_cast<std::size_t>(k)];
        const S* dr = n_.grad.data() +
                      static_cast<std::size_t>(at->col_idx[static_cast<std::size_t>(k)]) * n;
        for (std::size_t j = 0; j < n; ++j) gr[j] += v * dr[j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and row-wise softmax
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum(const TensorT<S>& a) {
  S acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
  return detail::make_op<S>("sum", Shape{1}, {acc}, {a}, [](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (auto& gi : g) gi += n.grad[0];
  });
}

template <class S>
TensorT<S> mean(const TensorT<S>& a) {
  const S inv = S(1) / static_cast<S>(a.numel());
  S acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
  return detail::make_op<S>("mean", Shape{1}, {acc * inv}, {a}, [inv](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (auto& gi : g) gi += n.grad[0] * inv;
  });
}

template <class S>
TensorT<S> rowsum(const TensorT<S>& a) {
  const std::size_t m = a.rows(), nc = a.cols();
  std::vector<S> y(m, S(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < nc; ++j) y[i] += a.at(i * nc + j);
  return detail::make_op<S>("rowsum", Shape{m}, std::move(y), {a}, [m, nc](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < nc; ++j) g[i * nc + j] += n.grad[i];
  });
}

// Numerically stable row softmax (per-row max subtraction).
template <class S>
TensorT<S> softmax_rows(const TensorT<S>& a) {
  const std::size_t m = a.rows(), nc = a.cols();
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = a.values().data() + i * nc;
    S mx = row[0];
    for (std::size_t j = 1; j < nc; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (std::size_t j = 0; j < nc; ++j) {
      y[i * nc + j] = std::exp(row[j] - mx);
      denom += y[i * nc + j];
    }
    for (std::size_t j = 0; j < nc; ++j) y[i * nc + j] /= denom;
  }
  return detail::make_op<S>("softmax_rows", a.shape(), std::move(y), {a}, [m, nc](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
      S dot = 0;
      for (std::size_t j = 0; j < nc; ++j) dot += n.grad[i * nc + j] * n.value[i * nc + j];
      for (std::size_t j = 0; j < nc; ++j)
        g[i * nc + j] += n.value[i * nc + j] * (n.grad[i * nc + j] - dot);
    }
  });
}

template <class S>
TensorT<S> log_softmax_rows(const TensorT<S>& a) {
  const std::size_t m = a.rows(), nc = a.cols();
  std::vector<S> y(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const S* row = a.values().data() + i * nc;
    S mx = row[0];
    for (std::size_t j = 1; j < nc; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (std::size_t j = 0; j < nc; ++j) denom += std::exp(row[j] - mx);
    const S lse = mx + std::log(denom);
    for (std::size_t j = 0; j < nc; ++j) y[i * nc + j] = row[j] - lse;
  }
  return detail::make_op<S>("log_softmax_rows", a.shape(), std::move(y), {a}, [m, nc](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
      S gsum = 0;
      for (std::size_t j = 0; j < nc; ++j) gsum += n.grad[i * nc + j];
      for (std::size_t j = 0; j < nc; ++j)
        g[i * nc + j] += n.grad[i * nc + j] - std::exp(n.value[i * nc + j]) * gsum;
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> gather_rows(const TensorT<S>& a, std::vector<std::int32_t> idx) {
  const std::size_t nc = a.cols(), m = a.rows();
  std::vector<S> y(idx.size() * nc);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || static_cast<std::size_t>(idx[e]) >= m)
      throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.values().data() + static_cast<std::size_t>(idx[e]) * nc, nc, y.data() + e * nc);
  }
  Shape shape = a.rank() <= 1 ? Shape{idx.size()} : Shape{idx.size(), nc};
  auto ix = std::make_shared<std::vector<std::int32_t>>(std::move(idx));
  return detail::make_op<S>("gather_rows", std::move(shape), std::move(y), {a}, [ix, nc](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t e = 0; e < ix->size(); ++e) {
      S* dst = g.data() + static_cast<std::size_t>((*ix)[e]) * nc;
      const S* src = n.grad.data() + e * nc;
      for (std::size_t j = 0; j < nc; ++j) dst[j] += src[j];
    }
  });
}

// out[idx[e], :] += a[e, :] over an output of n_out rows.
template <class S>
TensorT<S> scatter_add_rows(const TensorT<S>& a, std::vector<std::int32_t> idx, std::size_t n_out) {
  const std::size_t nc = a.cols();
  if (idx.size() != a.rows()) throw ShapeError("scatter_add_rows: index count != rows");
  std::vector<S> y(n_out * nc, S(0));
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || static_cast<std::size_t>(idx[e]) >= n_out)
      throw ShapeError("scatter_add_rows: index out of range");
    S* dst = y.data() + static_cast<std::size_t>(idx[e]) * nc;
    const S* src = a.values().data() + e * nc;
    for (std::size_t j = 0; j < nc; ++j) dst[j] += src[j];
  }
  Shape shape = a.rank() <= 1 ? Shape{n_out} : Shape{n_out, nc};
  auto ix = std::make_shared<std::vector<std::int32_t>>(std::move(idx));
  return detail::make_op<S>("scatter_add_rows", std::move(shape), std::move(y), {a},
                            [ix, nc](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t e = 0; e < ix->size(); ++e) {
      const S* src = n.grad.data() + static_cast<std::size_t>((*ix)[e]) * nc;
      S* dst = g.data() + e * nc;
      for (std::size_t j = 0; j < nc; ++j) dst[j] += src[j];
    }
  });
}

template <class S>
TensorT<S> concat_cols(const TensorT<S>& a, const TensorT<S>& b) {
  const std::size_t m = a.rows();
  if (b.rows() != m)
    throw ShapeError("concat_cols: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t ca = a.cols(), cb = b.cols();
  std::vector<S> y(m * (ca + cb));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, y.data() + i * (ca + cb));
    std::copy_n(b.values().data() + i * cb, cb, y.data() + i * (ca + cb) + ca);
  }
  return detail::make_op<S>("concat_cols", Shape{m, ca + cb}, std::move(y), {a, b},
                            [m, ca, cb](NodeT<S>& n) {
    if (detail::parent_wants_grad(n, 0)) {
      auto& g = detail::parent_grad(n, 0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += n.grad[i * (ca + cb) + j];
    }
    if (detail::parent_wants_grad(n, 1)) {
      auto& g = detail::parent_grad(n, 1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cb; ++j) g[i * cb + j] += n.grad[i * (ca + cb) + ca + j];
    }
  });
}

template <class S>
TensorT<S> slice_cols(const TensorT<S>& a, std::size_t start, std::size_t width) {
  const std::size_t m = a.rows(), nc = a.cols();
  if (start + width > nc) throw ShapeError("slice_cols: range out of bounds");
  std::vector<S> y(m * width);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.values().data() + i * nc + start, width, y.data() + i * width);
  return detail::make_op<S>("slice_cols", Shape{m, width}, std::move(y), {a},
                            [m, nc, start, width](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < width; ++j) g[i * nc + start + j] += n.grad[i * width + j];
  });
}

// Mean of -logp[r, label[r]]; logp rows are already gathered for the target
// subset, so this is the tail of every cross-entropy in the repo.
template <class S>
TensorT<S> nll(const TensorT<S>& logp, std::vector<std::int32_t> labels) {
  const std::size_t m = logp.rows(), k = logp.cols();
  if (labels.size() != m) throw ShapeError("nll: labels size != rows");
  S acc = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ShapeError("nll: label out of range");
    acc -= logp.at(i, static_cast<std::size_t>(labels[i]));
  }
  const S inv = S(1) / static_cast<S>(m);
  auto lb = std::make_shared<std::vector<std::int32_t>>(std::move(labels));
  return detail::make_op<S>("nll", Shape{1}, {acc * inv}, {logp}, [lb, k, inv](NodeT<S>& n) {
    auto& g = detail::parent_grad(n, 0);
    for (std::size_t i = 0; i < lb->size(); ++i)
      g[i * k + static_cast<std::size_t>((*lb)[i])] -= n.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Fused Fourier feature block
// ---------------------------------------------------------------------------

// Maps x [B x D] to [B x 2Dg]: cos(w_k x_d + phi_dk) in column d*g+k and
// sin(...) in column Dg + d*g+k. Frequencies come either from a learnable
// log-frequency tensor (w = exp(log_freq)) or a fixed positive vector.
template <class S>
TensorT<S> fourier_features(const TensorT<S>& x, const TensorT<S>& log_freq, const TensorT<S>& phase,
                            bool learn_freq_phase) {
  const std::size_t b = x.rows(), d = x.cols(), g = log_freq.numel();
  if (phase.numel() != d * g)
    throw ShapeError("fourier_features: phase " + shape_str(phase.shape()) + " wants [" +
                     std::to_string(d) + "x" + std::to_string(g) + "]");
  std::vector<S> omega(g);
  for (std::size_t k = 0; k < g; ++k) omega[k] = std::exp(log_freq.at(k));

  // Row-at-a-time so the phase buffer stays cache-resident; the trig block
  // dominates full-graph student inference.
  const std::size_t dg = d * g;
  std::vector<S> y(b * 2 * dg);
  std::vector<S> theta(dg);
  const S* ph = phase.values().data();
  for (std::size_t i = 0; i < b; ++i) {
    const S* xr = x.values().data() + i * d;
    if (g == 1) {
      const S w0 = omega[0];
      for (std::size_t j = 0; j < d; ++j) theta[j] = w0 * xr[j] + ph[j];
    } else {
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < g; ++k) theta[j * g + k] = omega[k] * xr[j] + ph[j * g + k];
    }
    sincos_block(theta.data(), y.data() + i * 2 * dg + dg, y.data() + i * 2 * dg, dg);
  }

  auto om = std::make_shared<std::vector<S>>(std::move(omega));
  return detail::make_op<S>("fourier_features", Shape{b, 2 * dg}, std::move(y),
                            {x, log_freq, phase}, [b, d, g, dg, om, learn_freq_phase](NodeT<S>& n) {
    const auto& xv = n.parents[0]->value;
    const bool want_x = detail::parent_wants_grad(n, 0);
    const bool want_f = learn_freq_phase && detail::parent_wants_grad(n, 1);
    const bool want_p = learn_freq_phase && detail::parent_wants_grad(n, 2);
    if (!(want_x || want_f || want_p)) return;
    std::vector<S>* gx = want_x ? &detail::parent_grad(n, 0) : nullptr;
    std::vector<S>* gf = want_f ? &detail::parent_grad(n, 1) : nullptr;
    std::vector<S>* gp = want_p ? &detail::parent_grad(n, 2) : nullptr;
    for (std::size_t i = 0; i < b; ++i) {
      const S* cosr = n.value.data() + i * 2 * dg;
      const S* sinr = cosr + dg;
      const S* gcos = n.grad.data() + i * 2 * dg;
      const S* gsin = gcos + dg;
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < g; ++k) {
          const std::size_t c = j * g + k;
          // d/dtheta of (cos, sin) contributions
          const S dtheta = -gcos[c] * sinr[c] + gsin[c] * cosr[c];
          if (want_x) (*gx)[i * d + j] += dtheta * (*om)[k];
          if (want_p) (*gp)[c] += dtheta;
          if (want_f) (*gf)[k] += dtheta * xv[i * d + j] * (*om)[k];  // dtheta/dlogw = w x
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

template <class S>
void backward(const TensorT<S>& loss) {
  auto root = loss.node();
  if (!root) throw AutodiffError("backward: undefined tensor");
  if (root->numel() != 1) throw AutodiffError("backward: loss must be scalar");
  if (root->backward_ran)
    throw AutodiffError("backward: already ran on this value; run forward again first");
  if (!root->requires_grad) throw AutodiffError("backward: loss does not depend on any parameter");
  root->backward_ran = true;

  // Iterative post-order DFS; reverse gives a valid topological order.
  std::vector<NodeT<S>*> order;
  std::unordered_set<NodeT<S>*> seen;
  std::vector<std::pair<NodeT<S>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      NodeT<S>* p = node->parents[next_child++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<S>* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers
// ---------------------------------------------------------------------------

template <class S>
std::vector<std::int32_t> argmax_rows(const TensorT<S>& a) {
  const std::size_t m = a.rows(), nc = a.cols();
  std::vector<std::int32_t> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < nc; ++j)
      if (a.at(i, j) > a.at(i, best)) best = j;
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

inline double accuracy(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& labels,
                       const std::vector<std::int32_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t hit = 0;
  for (const std::int32_t i : idx)
    if (pred[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

}  // namespace kdst::numkit
