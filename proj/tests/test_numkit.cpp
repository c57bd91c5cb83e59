#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "kdst/numkit/adam.hpp"
#include "kdst/numkit/checkpoint.hpp"
#include "kdst/numkit/csr.hpp"
#include "kdst/numkit/rng.hpp"
#include "kdst/numkit/segment.hpp"
#include "kdst/numkit/simd_math.hpp"
#include "kdst/numkit/tensor.hpp"
#include "testutil.hpp"

using namespace kdst;
using namespace kdst::numkit;
using kdst::testutil::grad_check;

namespace {

CsrMatrix random_csr(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::vector<std::int32_t> ri, ci;
  std::vector<float> vals;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) {
        ri.push_back(static_cast<std::int32_t>(r));
        ci.push_back(static_cast<std::int32_t>(c));
        vals.push_back(static_cast<float>(rng.normal()));
      }
  return CsrMatrix::from_coo(rows, cols, ri, ci, vals);
}

std::vector<float> dense_matmul(const std::vector<float>& a, const std::vector<float>& b,
                                std::size_t m, std::size_t k, std::size_t n) {
  std::vector<float> c(m * n, 0.0f);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Twin-graph gradient check driver: builds the same expression in f32 (autodiff)
// and f64 (finite differences) from identical parameter values.
template <class Builder>
void require_grad_matches(Builder build, const std::vector<Shape>& shapes, double stddev = 1.0,
                          std::uint64_t seed = 7, double tol = 1e-3) {
  Rng rng(seed);
  std::vector<Tensor> in32;
  std::vector<Tensor64> in64;
  for (const auto& shape : shapes) {
    auto vals = kdst::testutil::random_values(shape_numel(shape), rng, stddev);
    std::vector<double> vals64(vals.begin(), vals.end());
    in32.push_back(Tensor::from_data(shape, vals, true));
    in64.push_back(Tensor64::from_data(shape, std::move(vals64), true));
  }
  auto y32 = build(in32);
  // Random constant readout so distinct output coordinates get distinct
  // upstream gradients (a plain mean would hide transposition bugs).
  Rng wrng(99);
  auto w = kdst::testutil::random_values(y32.numel(), wrng);
  std::vector<double> w64(w.begin(), w.end());
  auto loss32 = mean(mul(y32, Tensor::from_data(y32.shape(), w)));
  backward(loss32);
  auto loss64 = [&]() {
    auto y = build(in64);
    return mean(mul(y, Tensor64::from_data(y.shape(), w64))).item();
  };
  auto res = grad_check(in32, in64, loss64);
  INFO(res.worst);
  REQUIRE(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("rng is deterministic and splitmix-seeded", "[rng]") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 16; ++i) REQUIRE(a.next_u64() == b.next_u64());
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs = differs || (a.next_u64() != c.next_u64());
  REQUIRE(differs);
}

TEST_CASE("rng uniform and normal ranges", "[rng]") {
  Rng rng(1);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  REQUIRE(std::abs(sum / n) < 0.05);
  REQUIRE(std::abs(sumsq / n - 1.0) < 0.05);
}

TEST_CASE("sincos kernel matches libm", "[simd]") {
  std::vector<float> x(4099), s(4099), c(4099);
  Rng rng(3);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-60.0, 60.0));
  sincos_block(x.data(), s.data(), c.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(std::abs(static_cast<double>(s[i]) - std::sin(static_cast<double>(x[i]))) < 1e-6);
    REQUIRE(std::abs(static_cast<double>(c[i]) - std::cos(static_cast<double>(x[i]))) < 1e-6);
  }
}

TEST_CASE("matmul identity, hand case, annihilator", "[tensor]") {
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto prod = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(prod.at(i) == m.at(i));

  auto row = Tensor::from_data({1, 2}, {1, 2});
  auto col = Tensor::from_data({2, 1}, {3, 4});
  REQUIRE(matmul(row, col).item() == 11.0f);

  auto zeros = Tensor::zeros({2, 2});
  auto any = Tensor::from_data({2, 3}, {5, -1, 2, 0.5f, 7, -3});
  auto z = matmul(zeros, any);
  for (std::size_t i = 0; i < z.numel(); ++i) REQUIRE(z.at(i) == 0.0f);

  REQUIRE_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("spmm identity, empty rows, dense oracle", "[tensor]") {
  Rng rng(11);
  auto x = Tensor::from_data({3, 2}, kdst::testutil::random_values(6, rng));
  auto eye = CsrMatrix::identity(3);
  auto y = spmm(eye, x);
  for (std::size_t i = 0; i < 6; ++i) REQUIRE(y.at(i) == x.at(i));

  // Row 1 empty.
  auto m = CsrMatrix::from_coo(3, 3, {0, 2}, {1, 0}, {2.0f, 3.0f});
  auto out = spmm(m, x);
  REQUIRE(out.at(1, 0) == 0.0f);
  REQUIRE(out.at(1, 1) == 0.0f);
  REQUIRE(out.at(0, 0) == 2.0f * x.at(1, 0));
  REQUIRE(out.at(2, 1) == 3.0f * x.at(0, 1));

  auto a = random_csr(5, 5, 0.3, rng);
  auto b = Tensor::from_data({5, 4}, kdst::testutil::random_values(20, rng));
  auto sparse = spmm(a, b);
  auto dense = dense_matmul(a.densify(), b.values(), 5, 5, 4);
  for (std::size_t i = 0; i < dense.size(); ++i)
    REQUIRE(std::abs(sparse.at(i) - dense[i]) < 1e-6f);
}

TEST_CASE("spmm equals densified matmul on random instances", "[tensor][property]") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(50), k = 1 + rng.below(50), n = 1 + rng.below(8);
    auto a = random_csr(m, k, 0.2, rng);
    auto b = Tensor::from_data({k, n}, kdst::testutil::random_values(k * n, rng));
    auto sparse = spmm(a, b);
    auto dense = matmul(Tensor::from_data({m, k}, a.densify()), b);
    for (std::size_t i = 0; i < sparse.numel(); ++i)
      REQUIRE(std::abs(sparse.at(i) - dense.at(i)) < 1e-6f);
  }
}

TEST_CASE("softmax rows: symmetry, stability, closed form", "[tensor]") {
  auto a = Tensor::from_data({3, 2},
                             {0.0f, 0.0f, 1000.0f, 1000.0f, std::log(1.0f), std::log(3.0f)});
  auto y = softmax_rows(a);
  REQUIRE(y.at(0, 0) == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(y.at(0, 1) == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(y.at(1, 0) == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(y.at(1, 1) == Catch::Approx(0.5).margin(1e-6));
  REQUIRE(y.at(2, 0) == Catch::Approx(0.25).margin(1e-6));
  REQUIRE(y.at(2, 1) == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("softmax rows sum to one and shift-invariant", "[tensor][property]") {
  Rng rng(23);
  auto a = Tensor::from_data({20, 9}, kdst::testutil::random_values(180, rng, 3.0));
  auto y = softmax_rows(a);
  for (std::size_t i = 0; i < 20; ++i) {
    float rs = 0;
    for (std::size_t j = 0; j < 9; ++j) rs += y.at(i, j);
    REQUIRE(std::abs(rs - 1.0f) < 1e-5f);
  }
  // Shifting each row by its own constant must not move the output.
  std::vector<float> shifts(20);
  for (std::size_t i = 0; i < 20; ++i) shifts[i] = static_cast<float>(rng.uniform(-8.0, 8.0));
  auto shifted = add(a, scale_rows(Tensor::full({20, 9}, 1.0f),
                                   Tensor::from_data({20}, std::move(shifts))));
  auto y2 = softmax_rows(shifted);
  for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(std::abs(y.at(i) - y2.at(i)) < 1e-6f);
}

TEST_CASE("backward rejects non-scalar loss and double invocation", "[tensor]") {
  auto x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  auto y = relu(x);
  REQUIRE_THROWS_AS(backward(y), AutodiffError);
  auto loss = sum(y);
  backward(loss);
  REQUIRE_THROWS_AS(backward(loss), AutodiffError);
  // Re-forward makes a fresh loss node which is fine.
  auto loss2 = sum(relu(x));
  REQUIRE_NOTHROW(backward(loss2));
}

TEST_CASE("gradient accumulates across uses of the same tensor", "[tensor]") {
  auto x = Tensor::from_data({1}, {3.0f}, true);
  auto y = add(mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 7
  backward(sum(y));
  REQUIRE(x.grad()[0] == Catch::Approx(7.0f));
}

TEST_CASE("debug mode surfaces non-finite values", "[tensor]") {
  const bool was = debug_checks_enabled();
  set_debug_checks(true);
  auto big = Tensor::from_data({1}, {200.0f});
  REQUIRE_THROWS_AS(exp_(scale(big, 10.0)), NumericError);
  set_debug_checks(false);
  REQUIRE_NOTHROW(exp_(scale(big, 10.0)));
  set_debug_checks(was);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[adam]") {
  auto p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  st.weight_decay = 0.0;
  p.grad().assign(3, 0.0f);
  p.grad().resize(3);
  adam_step(params, st);
  REQUIRE(p.at(0) == 1.0f);
  REQUIRE(p.at(1) == -2.0f);
  REQUIRE(p.at(2) == 0.5f);
  REQUIRE(st.t == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about lr", "[adam]") {
  auto p = Tensor::from_data({1}, {1.0f}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  st.lr = 0.1;
  p.grad().assign(1, 1.0f);
  adam_step(params, st);
  // m_hat = v_hat = 1 after bias correction, so the step is lr/(1 + eps).
  REQUIRE(p.at(0) == Catch::Approx(0.9).margin(1e-6));
}

TEST_CASE("adam and spmm reject mismatched shapes", "[adam]") {
  auto p = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  p.grad().assign(2, 0.5f);
  adam_step(params, st);
  auto q = Tensor::from_data({3}, {1.0f, 2.0f, 3.0f}, true);
  std::vector<Tensor> grown{q};  // state sized for a different parameter set
  q.grad().assign(3, 0.5f);
  st.m.resize(1);
  st.v.resize(1);
  REQUIRE_THROWS_AS(adam_step(grown, st), ShapeError);

  auto eye = CsrMatrix::identity(3);
  REQUIRE_THROWS_AS(spmm(eye, Tensor::zeros({4, 2})), ShapeError);
}

TEST_CASE("adam: identical params with identical grads stay identical", "[adam][property]") {
  Rng rng(5);
  auto vals = kdst::testutil::random_values(8, rng);
  auto a = Tensor::from_data({8}, vals, true);
  auto b = Tensor::from_data({8}, vals, true);
  std::vector<Tensor> params{a, b};
  AdamState st;
  st.weight_decay = 5e-4;
  for (int step = 0; step < 25; ++step) {
    auto g = kdst::testutil::random_values(8, rng);
    a.grad() = g;
    b.grad() = g;
    adam_step(params, st);
  }
  for (std::size_t i = 0; i < 8; ++i) REQUIRE(a.at(i) == b.at(i));
}

TEST_CASE("seeded training is bitwise deterministic", "[adam][property]") {
  auto run = [] {
    Rng rng(123);
    auto w = Tensor::randn({4, 3}, rng, 0.1, true);
    auto x = Tensor::from_data({5, 4}, kdst::testutil::random_values(20, rng));
    std::vector<Tensor> params{w};
    AdamState st;
    st.lr = 0.05;
    for (int step = 0; step < 30; ++step) {
      zero_grads(params);
      auto out = softmax_rows(matmul(dropout(x, 0.3, rng, true), w));
      backward(mean(mul(out, out)));
      adam_step(params, st);
    }
    return w.values();
  };
  auto a = run();
  auto b = run();
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("gradcheck: arithmetic and reduction ops", "[grad]") {
  require_grad_matches(
      [](auto& in) { return mul(add(in[0], in[1]), sub(in[0], in[1])); },
      {{4, 3}, {4, 3}});
  require_grad_matches([](auto& in) { return div(in[0], add_scalar(sigmoid(in[1]), 0.5)); },
                       {{3, 3}, {3, 3}});
  require_grad_matches([](auto& in) { return rowsum(mul(in[0], in[0])); }, {{5, 4}});
  require_grad_matches([](auto& in) { return add_rowvec(in[0], in[1]); }, {{4, 6}, {6}});
  require_grad_matches([](auto& in) { return scale_rows(in[0], in[1]); }, {{4, 6}, {4}});
  require_grad_matches([](auto& in) { return scale_by_scalar(in[0], in[1]); }, {{4, 6}, {1}});
}

TEST_CASE("gradcheck: nonlinearities", "[grad]") {
  // Inputs kept away from kink points of relu/leaky by the fd step size.
  require_grad_matches([](auto& in) { return relu(in[0]); }, {{6, 5}}, 2.0, 31);
  require_grad_matches([](auto& in) { return leaky_relu(in[0], 0.2); }, {{6, 5}}, 2.0, 32);
  require_grad_matches([](auto& in) { return silu(in[0]); }, {{6, 5}});
  require_grad_matches([](auto& in) { return sigmoid(in[0]); }, {{6, 5}});
  require_grad_matches([](auto& in) { return exp_(in[0]); }, {{6, 5}}, 0.5);
  require_grad_matches([](auto& in) { return clamp(in[0], -10.0, 10.0); }, {{6, 5}});
}

TEST_CASE("gradcheck: matmul family", "[grad]") {
  require_grad_matches([](auto& in) { return matmul(in[0], in[1]); }, {{4, 6}, {6, 3}});
  require_grad_matches([](auto& in) { return matmul_nt(in[0], in[1]); }, {{4, 6}, {3, 6}});
  Rng rng(41);
  auto csr = random_csr(5, 4, 0.5, rng);
  require_grad_matches(
      [&](auto& in) {
        using S = typename std::decay_t<decltype(in[0])>::Scalar;
        return spmm(csr.template cast<S>(), in[0]);
      },
      {{4, 3}});
}

TEST_CASE("gradcheck: softmax, log-softmax, nll", "[grad]") {
  require_grad_matches([](auto& in) { return softmax_rows(in[0]); }, {{5, 7}});
  require_grad_matches([](auto& in) { return log_softmax_rows(in[0]); }, {{5, 7}});
  std::vector<std::int32_t> labels{2, 0, 1, 1, 3};
  require_grad_matches([&](auto& in) { return nll(log_softmax_rows(in[0]), labels); }, {{5, 4}});
}

TEST_CASE("gradcheck: indexing ops", "[grad]") {
  std::vector<std::int32_t> idx{3, 0, 3, 1};
  require_grad_matches([&](auto& in) { return gather_rows(in[0], idx); }, {{5, 4}});
  require_grad_matches([&](auto& in) { return scatter_add_rows(in[0], idx, 6); }, {{4, 3}});
  require_grad_matches([](auto& in) { return concat_cols(in[0], in[1]); }, {{3, 2}, {3, 4}});
  require_grad_matches([](auto& in) { return slice_cols(in[0], 1, 3); }, {{4, 6}});
}

TEST_CASE("gradcheck: fourier features and segment softmax", "[grad]") {
  require_grad_matches(
      [](auto& in) { return fourier_features(in[0], in[1], in[2], true); },
      {{3, 2}, {3}, {2, 3}}, 0.8);
  std::vector<std::int32_t> groups{0, 0, 1, 1, 1, 2};
  require_grad_matches([&](auto& in) { return segment_softmax(in[0], groups, 3); }, {{6}});
}

TEST_CASE("dropout scales kept entries and masks gradient", "[tensor]") {
  Rng rng(77);
  auto x = Tensor::from_data({8, 8}, kdst::testutil::random_values(64, rng));
  for (auto& v : x.values()) v += (v >= 0 ? 1.0f : -1.0f);  // keep entries away from zero
  auto xp = Tensor::from_data({8, 8}, x.values(), true);
  Rng drop(5);
  auto y = dropout(xp, 0.4, drop, true);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y.at(i) != 0.0f) {
      REQUIRE(y.at(i) == Catch::Approx(x.at(i) / 0.6f));
      ++kept;
    }
  }
  REQUIRE(kept > 10);
  REQUIRE(kept < 60);
  backward(sum(y));
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const float expect = y.at(i) == 0.0f ? 0.0f : 1.0f / 0.6f;
    REQUIRE(xp.grad()[i] == Catch::Approx(expect));
  }
  // Not training: identity, same node.
  Rng drop2(5);
  auto same = dropout(xp, 0.4, drop2, false);
  REQUIRE(same.node() == xp.node());
}

TEST_CASE("checkpoint round-trip preserves names, shapes, payload", "[checkpoint]") {
  kdst::testutil::TempDir tmp("ckpt");
  Rng rng(9);
  std::vector<NamedParam> params{
      {"layer0.weight", Tensor::from_data({3, 4}, kdst::testutil::random_values(12, rng), true)},
      {"layer0.bias", Tensor::from_data({4}, kdst::testutil::random_values(4, rng), true)},
      {"freq.log", Tensor::from_data({2, 2, 2}, kdst::testutil::random_values(8, rng), true)},
  };
  const auto path = (tmp.path / "model.kdst").string();
  save_checkpoint(path, params);
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  REQUIRE(loaded.at("freq.log").shape() == Shape{2, 2, 2});
  for (const auto& p : params) {
    const auto& got = loaded.at(p.name);
    REQUIRE(got.shape() == p.tensor.shape());
    REQUIRE(std::memcmp(got.values().data(), p.tensor.values().data(),
                        got.numel() * sizeof(float)) == 0);
  }

  auto fresh = params;
  for (auto& p : fresh) p.tensor = Tensor::zeros(p.tensor.shape(), true);
  restore_params(fresh, loaded);
  REQUIRE(fresh[0].tensor.at(5) == params[0].tensor.at(5));

  std::ofstream bad((tmp.path / "bad.kdst").string(), std::ios::binary);
  bad << "NOPE!";
  bad.close();
  REQUIRE_THROWS_AS(load_checkpoint((tmp.path / "bad.kdst").string()), IoError);
  REQUIRE_THROWS_AS(load_checkpoint((tmp.path / "missing.kdst").string()), IoError);
}

TEST_CASE("csr validation and transpose", "[csr]") {
  auto m = CsrMatrix::from_coo(3, 4, {0, 0, 2}, {1, 3, 0}, {1.0f, 2.0f, 3.0f});
  m.validate();
  auto t = m.transpose();
  t.validate();
  REQUIRE(t.n_rows == 4);
  REQUIRE(t.n_cols == 3);
  auto d = m.densify();
  auto td = t.densify();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) REQUIRE(d[r * 4 + c] == td[c * 3 + r]);

  // Duplicate coordinates are summed.
  auto dup = CsrMatrix::from_coo(2, 2, {0, 0}, {1, 1}, {1.0f, 2.5f});
  REQUIRE(dup.nnz() == 1);
  REQUIRE(dup.values[0] == 3.5f);

  CsrMatrix broken;
  broken.n_rows = 2;
  broken.n_cols = 2;
  broken.row_ptr = {0, 1};
  broken.col_idx = {0};
  broken.values = {1.0f};
  REQUIRE_THROWS_AS(broken.validate(), ShapeError);
}
