#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/numkit/checkpoint.hpp"
#include "kdst/numkit/rng.hpp"
#include "kdst/numkit/tensor.hpp"

namespace kdst::students {

using numkit::Rng;
using numkit::TensorT;

// ---------------------------------------------------------------------------
// FR-KAN+: truncated Fourier series per (input, output) pair with complex
// coefficients w = a + ib, a learnable log-frequency basis shared across
// units, and a learnable per-(input, frequency) phase shift. The forward is
// Re((a + ib) e^{i(w_k x + phi)}) = a cos(theta) - b sin(theta), evaluated as
// one batched contraction against a precomputed [B x 2Dg] trig block.
// ---------------------------------------------------------------------------
template <class S>
struct FrKanPlusLayerT {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t grid_size = 0;
  TensorT<S> coeff_real;  // [O x D x g]
  TensorT<S> coeff_imag;  // [O x D x g]
  TensorT<S> log_freq;    // [g], effective frequency exp(log_freq) > 0
  TensorT<S> phase;       // [D x g]
  TensorT<S> bias;        // [O]

  FrKanPlusLayerT() = default;

  // Initialization recovers a classic Fourier series: frequencies ln(k) for
  // k = 1..g, zero phase, coefficients ~ N(0, 1/(D*g)).
  FrKanPlusLayerT(std::size_t d, std::size_t o, std::size_t g, Rng& rng)
      : in_dim(d), out_dim(o), grid_size(g) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(d * g));
    coeff_real = TensorT<S>::randn({o, d, g}, rng, stddev, true);
    coeff_imag = TensorT<S>::randn({o, d, g}, rng, stddev, true);
    std::vector<S> lf(g);
    for (std::size_t k = 0; k < g; ++k) lf[k] = static_cast<S>(std::log(static_cast<double>(k + 1)));
    log_freq = TensorT<S>::from_data({g}, std::move(lf), true);
    phase = TensorT<S>::zeros({d, g}, true);
    bias = TensorT<S>::zeros({o}, true);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.cols() != in_dim)
      throw ShapeError("frkan_plus: input width " + std::to_string(x.cols()) + ", layer wants " +
                       std::to_string(in_dim));
    auto feats = numkit::fourier_features(x, log_freq, phase, /*learn_freq_phase=*/true);
    auto weights = numkit::concat_cols(coeff_real, numkit::neg(coeff_imag));  // [O x 2Dg]
    return numkit::add_rowvec(numkit::matmul_nt(feats, weights), bias);
  }

  std::size_t count_params() const {
    return coeff_real.numel() + coeff_imag.numel() + log_freq.numel() + phase.numel() + bias.numel();
  }

  std::vector<TensorT<S>> params() { return {coeff_real, coeff_imag, log_freq, phase, bias}; }

  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& prefix) {
    return {{prefix + ".coeff_real", coeff_real},
            {prefix + ".coeff_imag", coeff_imag},
            {prefix + ".log_freq", log_freq},
            {prefix + ".phase", phase},
            {prefix + ".bias", bias}};
  }
};

// FR-KAN: fixed integer frequencies k = 1..g, separate cosine/sine
// coefficient tensors, no phase. The ablation baseline FR-KAN+ refines.
template <class S>
struct FrKanLayerT {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t grid_size = 0;
  TensorT<S> cos_coeff;  // [O x D x g]
  TensorT<S> sin_coeff;  // [O x D x g]
  TensorT<S> bias;       // [O]

  FrKanLayerT() = default;

  FrKanLayerT(std::size_t d, std::size_t o, std::size_t g, Rng& rng)
      : in_dim(d), out_dim(o), grid_size(g) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(d * g));
    cos_coeff = TensorT<S>::randn({o, d, g}, rng, stddev, true);
    sin_coeff = TensorT<S>::randn({o, d, g}, rng, stddev, true);
    bias = TensorT<S>::zeros({o}, true);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.cols() != in_dim)
      throw ShapeError("frkan: input width " + std::to_string(x.cols()) + ", layer wants " +
                       std::to_string(in_dim));
    std::vector<S> lf(grid_size);
    for (std::size_t k = 0; k < grid_size; ++k)
      lf[k] = static_cast<S>(std::log(static_cast<double>(k + 1)));
    auto log_freq = TensorT<S>::from_data({grid_size}, std::move(lf));
    auto zero_phase = TensorT<S>::zeros({in_dim, grid_size});
    auto feats = numkit::fourier_features(x, log_freq, zero_phase, /*learn_freq_phase=*/false);
    auto weights = numkit::concat_cols(cos_coeff, sin_coeff);  // cos.c + sin.s
    return numkit::add_rowvec(numkit::matmul_nt(feats, weights), bias);
  }

  std::size_t count_params() const {
    return cos_coeff.numel() + sin_coeff.numel() + bias.numel();
  }

  std::vector<TensorT<S>> params() { return {cos_coeff, sin_coeff, bias}; }

  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& prefix) {
    return {{prefix + ".cos_coeff", cos_coeff},
            {prefix + ".sin_coeff", sin_coeff},
            {prefix + ".bias", bias}};
  }
};

// ---------------------------------------------------------------------------
// Spline KAN: cubic B-splines on a fixed uniform grid over [-2, 2] plus a
// SiLU path, psi(x) = w silu(x) + sum_k c_k B_k(x). Inputs are clamped to the
// grid; there is no grid refinement.
// ---------------------------------------------------------------------------

struct SplineGrid {
  double lo = -2.0;
  double hi = 2.0;
  std::size_t n_knots = 8;  // grid points, so n_knots - 1 intervals

  std::size_t n_intervals() const { return n_knots - 1; }
  std::size_t n_basis() const { return n_intervals() + 3; }  // cubic
  double step() const { return (hi - lo) / static_cast<double>(n_intervals()); }
};

namespace detail {

// Uniform cubic B-spline blending on interval i with local coordinate
// u in [0, 1]: active bases i..i+3.
inline void cubic_basis(double u, double w[4]) {
  const double v = 1.0 - u;
  w[0] = v * v * v / 6.0;
  w[1] = (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0;
  w[2] = (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0;
  w[3] = u * u * u / 6.0;
}

inline void cubic_basis_deriv(double u, double w[4]) {
  const double v = 1.0 - u;
  w[0] = -v * v / 2.0;
  w[1] = (3.0 * u * u - 4.0 * u) / 2.0;
  w[2] = (-3.0 * u * u + 2.0 * u + 1.0) / 2.0;
  w[3] = u * u / 2.0;
}

}  // namespace detail

// Maps x [B x D] to B-spline basis activations [B x D*n_basis]. Gradient
// flows to x only (the grid is fixed); entries clamped to the grid edge get
// zero input-gradient there.
template <class S>
TensorT<S> spline_features(const TensorT<S>& x, const SplineGrid& grid) {
  const std::size_t b = x.rows(), d = x.cols();
  const std::size_t nb = grid.n_basis();
  const double h = grid.step();
  std::vector<S> y(b * d * nb, S(0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double xv = static_cast<double>(x.at(i, j));
      xv = std::min(grid.hi, std::max(grid.lo, xv));
      auto cell = static_cast<std::size_t>((xv - grid.lo) / h);
      cell = std::min(cell, grid.n_intervals() - 1);
      const double u = (xv - grid.lo) / h - static_cast<double>(cell);
      double w[4];
      detail::cubic_basis(u, w);
      S* row = y.data() + (i * d + j) * nb;
      for (int t = 0; t < 4; ++t) row[cell + static_cast<std::size_t>(t)] = static_cast<S>(w[t]);
    }
  }
  const double lo = grid.lo, hi = grid.hi;
  const std::size_t n_int = grid.n_intervals();
  return numkit::detail::make_op<S>(
      "spline_features", numkit::Shape{b, d * nb}, std::move(y), {x},
      [b, d, nb, h, lo, hi, n_int](numkit::NodeT<S>& n) {
        const auto& xv = n.parents[0]->value;
        auto& g = numkit::detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            const double raw = static_cast<double>(xv[i * d + j]);
            if (raw < lo || raw > hi) continue;  // clamped: no input gradient
            auto cell = static_cast<std::size_t>((raw - lo) / h);
            cell = std::min(cell, n_int - 1);
            const double u = (raw - lo) / h - static_cast<double>(cell);
            double w[4];
            detail::cubic_basis_deriv(u, w);
            const S* gr = n.grad.data() + (i * d + j) * nb;
            double acc = 0.0;
            for (int t = 0; t < 4; ++t)
              acc += w[t] / h * static_cast<double>(gr[cell + static_cast<std::size_t>(t)]);
            g[i * d + j] += static_cast<S>(acc);
          }
        }
      });
}

template <class S>
struct SplineKanLayerT {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  SplineGrid grid;
  TensorT<S> silu_weight;   // [O x D]
  TensorT<S> spline_coeff;  // [O x D x n_basis]

  SplineKanLayerT() = default;

  SplineKanLayerT(std::size_t d, std::size_t o, Rng& rng) : in_dim(d), out_dim(o) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(d));
    silu_weight = TensorT<S>::randn({o, d}, rng, stddev, true);
    spline_coeff = TensorT<S>::randn({o, d, grid.n_basis()}, rng, 0.1 * stddev, true);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.cols() != in_dim)
      throw ShapeError("spline_kan: input width " + std::to_string(x.cols()) + ", layer wants " +
                       std::to_string(in_dim));
    auto basis = spline_features(x, grid);                        // [B x D*nb]
    auto spline_part = numkit::matmul_nt(basis, spline_coeff);    // [B x O]
    auto silu_part = numkit::matmul_nt(numkit::silu(x), silu_weight);
    return numkit::add(spline_part, silu_part);
  }

  std::size_t count_params() const { return silu_weight.numel() + spline_coeff.numel(); }

  std::vector<TensorT<S>> params() { return {silu_weight, spline_coeff}; }

  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& prefix) {
    return {{prefix + ".silu_weight", silu_weight}, {prefix + ".spline_coeff", spline_coeff}};
  }
};

// Plain affine layer, the MLP building block.
template <class S>
struct LinearLayerT {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  TensorT<S> weight;  // [D_in x D_out]
  TensorT<S> bias;    // [D_out]

  LinearLayerT() = default;

  LinearLayerT(std::size_t d, std::size_t o, Rng& rng) : in_dim(d), out_dim(o) {
    weight = TensorT<S>::glorot(d, o, rng, true);
    bias = TensorT<S>::zeros({o}, true);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.cols() != in_dim)
      throw ShapeError("linear: input width " + std::to_string(x.cols()) + ", layer wants " +
                       std::to_string(in_dim));
    return numkit::add_rowvec(numkit::matmul(x, weight), bias);
  }

  std::size_t count_params() const { return weight.numel() + bias.numel(); }

  std::vector<TensorT<S>> params() { return {weight, bias}; }

  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& prefix) {
    return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
  }
};

using FrKanPlusLayer = FrKanPlusLayerT<float>;
using FrKanLayer = FrKanLayerT<float>;
using SplineKanLayer = SplineKanLayerT<float>;
using LinearLayer = LinearLayerT<float>;

}  // namespace kdst::students
