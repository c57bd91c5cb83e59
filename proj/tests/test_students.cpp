#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "kdst/students/layers.hpp"
#include "kdst/students/model.hpp"
#include "testutil.hpp"

using namespace kdst;
using namespace kdst::numkit;
using namespace kdst::students;
using kdst::testutil::grad_check;

namespace {

template <class L32, class L64>
void require_layer_grads(L32& l32, L64& l64, std::size_t batch, double x_stddev,
                         std::uint64_t seed = 55, double tol = 1e-3) {
  auto p32 = l32.params();
  auto p64 = l64.params();
  REQUIRE(p32.size() == p64.size());
  for (std::size_t i = 0; i < p32.size(); ++i) {
    REQUIRE(p32[i].numel() == p64[i].numel());
    for (std::size_t j = 0; j < p32[i].numel(); ++j)
      p64[i].values()[j] = static_cast<double>(p32[i].at(j));
  }
  Rng rng(seed);
  auto xv = kdst::testutil::random_values(batch * l32.in_dim, rng, x_stddev);
  std::vector<double> xv64(xv.begin(), xv.end());
  auto x32 = Tensor::from_data({batch, l32.in_dim}, xv, true);
  auto x64 = Tensor64::from_data({batch, l64.in_dim}, xv64, true);
  p32.push_back(x32);
  p64.push_back(x64);

  auto y32 = l32.forward(x32);
  Rng wrng(77);
  auto w = kdst::testutil::random_values(y32.numel(), wrng);
  std::vector<double> w64(w.begin(), w.end());
  backward(mean(mul(y32, Tensor::from_data(y32.shape(), w))));
  auto loss64 = [&]() {
    auto y = l64.forward(x64);
    return mean(mul(y, Tensor64::from_data(y.shape(), w64))).item();
  };
  auto res = grad_check(p32, p64, loss64);
  INFO(res.worst);
  REQUIRE(res.max_rel_err < tol);
}

// Cox-de Boor recursion over the extended uniform knot vector; the
// independent route for checking the blended fast evaluation.
double cox_de_boor(std::size_t j, int p, double x, const std::vector<double>& knots) {
  if (p == 0) return (x >= knots[j] && x < knots[j + 1]) ? 1.0 : 0.0;
  const double dl = knots[j + static_cast<std::size_t>(p)] - knots[j];
  const double dr = knots[j + static_cast<std::size_t>(p) + 1] - knots[j + 1];
  double acc = 0.0;
  if (dl > 0.0) acc += (x - knots[j]) / dl * cox_de_boor(j, p - 1, x, knots);
  if (dr > 0.0)
    acc += (knots[j + static_cast<std::size_t>(p) + 1] - x) / dr * cox_de_boor(j + 1, p - 1, x, knots);
  return acc;
}

std::vector<double> extended_knots(const SplineGrid& grid) {
  std::vector<double> knots(grid.n_knots + 6);
  for (std::size_t m = 0; m < knots.size(); ++m)
    knots[m] = grid.lo + (static_cast<double>(m) - 3.0) * grid.step();
  return knots;
}

}  // namespace

TEST_CASE("frkan+: zero coefficients, constant bias", "[students]") {
  Rng rng(1);
  FrKanPlusLayer layer(3, 2, 2, rng);
  for (auto& v : layer.coeff_real.values()) v = 0.0f;
  for (auto& v : layer.coeff_imag.values()) v = 0.0f;
  layer.bias.values() = {1.5f, -0.25f};
  auto y = layer.forward(Tensor::from_data({2, 3}, {0.3f, -2.0f, 5.0f, 0.0f, 0.0f, 1.0f}));
  REQUIRE(y.at(0, 0) == 1.5f);
  REQUIRE(y.at(0, 1) == -0.25f);
  REQUIRE(y.at(1, 0) == 1.5f);
  REQUIRE(y.at(1, 1) == -0.25f);
}

TEST_CASE("frkan+: hand trig evaluation at the origin", "[students]") {
  Rng rng(1);
  FrKanPlusLayer layer(1, 1, 1, rng);
  layer.log_freq.values() = {0.0f};  // w = 1
  layer.phase.values() = {0.0f};
  layer.coeff_real.values() = {1.0f};
  layer.coeff_imag.values() = {0.0f};
  layer.bias.values() = {0.0f};
  auto x = Tensor::zeros({1, 1});
  REQUIRE(layer.forward(x).item() == Catch::Approx(1.0).margin(1e-6));  // cos(0)

  layer.phase.values() = {static_cast<float>(std::numbers::pi / 2.0)};
  REQUIRE(std::abs(layer.forward(x).item()) < 1e-6f);  // cos(pi/2)
}

TEST_CASE("frkan: zero coefficients give bias; origin sums cosine coefficients", "[students]") {
  Rng rng(3);
  FrKanLayer layer(2, 2, 3, rng);
  auto x0 = Tensor::zeros({1, 2});

  auto zeroed = layer;
  for (auto& v : zeroed.cos_coeff.values()) v = 0.0f;
  for (auto& v : zeroed.sin_coeff.values()) v = 0.0f;
  zeroed.bias.values() = {0.5f, -2.0f};
  auto y0 = zeroed.forward(x0);
  REQUIRE(y0.at(0, 0) == 0.5f);
  REQUIRE(y0.at(0, 1) == -2.0f);

  // x = 0: all cos terms are 1, all sin terms 0.
  auto y = layer.forward(x0);
  for (std::size_t o = 0; o < 2; ++o) {
    double expect = layer.bias.at(o);
    for (std::size_t i = 0; i < 6; ++i) expect += layer.cos_coeff.at(o * 6 + i);
    REQUIRE(y.at(0, o) == Catch::Approx(expect).margin(1e-5));
  }
}

TEST_CASE("frkan+ reproduces frkan under the embedding", "[students][property]") {
  Rng rng(17);
  double max_diff = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(6), o = 1 + rng.below(5), g = 1 + rng.below(4);
    FrKanLayer base(d, o, g, rng);
    FrKanPlusLayer plus(d, o, g, rng);
    // log_freq = ln k and phi = 0 are already the FR-KAN+ init.
    plus.coeff_real.values() = base.cos_coeff.values();
    for (std::size_t i = 0; i < plus.coeff_imag.numel(); ++i)
      plus.coeff_imag.values()[i] = -base.sin_coeff.at(i);
    plus.bias.values() = base.bias.values();

    auto x = Tensor::from_data({4, d}, kdst::testutil::random_values(4 * d, rng, 1.5));
    auto ya = base.forward(x);
    auto yb = plus.forward(x);
    for (std::size_t i = 0; i < ya.numel(); ++i)
      max_diff = std::max(max_diff, std::abs(static_cast<double>(ya.at(i)) - yb.at(i)));
  }
  REQUIRE(max_diff < 1e-5);
}

TEST_CASE("frkan+ is 2pi/w periodic per coordinate", "[students][property]") {
  Rng rng(23);
  FrKanPlusLayer layer(2, 3, 1, rng);
  layer.log_freq.values() = {0.4f};
  for (auto& v : layer.phase.values()) v = static_cast<float>(rng.normal(0.0, 0.3));
  const double omega = std::exp(0.4);
  const double period = 2.0 * std::numbers::pi / omega;

  auto xv = kdst::testutil::random_values(10 * 2, rng);
  auto x = Tensor::from_data({10, 2}, xv);
  for (auto& v : xv) v += static_cast<float>(period);
  auto x_shifted = Tensor::from_data({10, 2}, xv);
  auto y = layer.forward(x);
  auto y2 = layer.forward(x_shifted);
  for (std::size_t i = 0; i < y.numel(); ++i)
    REQUIRE(std::abs(y.at(i) - y2.at(i)) < 1e-4f);
}

TEST_CASE("spline kan: zero spline coefficients reduce to summed silu", "[students]") {
  Rng rng(5);
  SplineKanLayer layer(3, 1, rng);
  for (auto& v : layer.spline_coeff.values()) v = 0.0f;
  for (auto& v : layer.silu_weight.values()) v = 1.0f;
  auto x = Tensor::from_data({2, 3}, {0.5f, -1.0f, 1.5f, 0.0f, 0.25f, -0.75f});
  auto y = layer.forward(x);
  for (std::size_t i = 0; i < 2; ++i) {
    double expect = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double v = x.at(i, j);
      expect += v / (1.0 + std::exp(-v));
    }
    REQUIRE(y.at(i, 0) == Catch::Approx(expect).margin(1e-5));
  }
}

TEST_CASE("spline basis matches Cox-de Boor and partitions unity inside the grid",
          "[students][property]") {
  SplineGrid grid;
  const auto knots = extended_knots(grid);
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const double xv = rng.uniform(-1.99, 1.99);
    auto feats = spline_features(Tensor::from_data({1, 1}, {static_cast<float>(xv)}), grid);
    REQUIRE(feats.numel() == grid.n_basis());
    double total = 0.0;
    for (std::size_t j = 0; j < grid.n_basis(); ++j) {
      const double oracle = cox_de_boor(j, 3, xv, knots);
      REQUIRE(std::abs(static_cast<double>(feats.at(j)) - oracle) < 1e-6);
      total += feats.at(j);
    }
    REQUIRE(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("spline kan clamps inputs far outside the grid", "[students]") {
  Rng rng(7);
  SplineKanLayer layer(2, 3, rng);
  auto y = layer.forward(Tensor::from_data({1, 2}, {100.0f, -50.0f}));
  auto y_edge = layer.forward(Tensor::from_data({1, 2}, {2.0f, -2.0f}));
  for (std::size_t i = 0; i < y.numel(); ++i) {
    REQUIRE(std::isfinite(y.at(i)));
    // Clamped evaluation: spline part equals the grid-edge value; only the
    // silu path differs.
    const auto basis_far = spline_features(Tensor::from_data({1, 1}, {100.0f}), layer.grid);
    const auto basis_edge = spline_features(Tensor::from_data({1, 1}, {2.0f}), layer.grid);
    for (std::size_t j = 0; j < basis_far.numel(); ++j)
      REQUIRE(basis_far.at(j) == basis_edge.at(j));
  }
  (void)y_edge;
}

TEST_CASE("mlp: identity passthrough, zero weights, two-layer oracle", "[students]") {
  Rng rng(9);
  LinearLayer layer(3, 3, rng);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) layer.weight.values()[i * 3 + j] = i == j ? 1.0f : 0.0f;
  for (auto& v : layer.bias.values()) v = 0.0f;
  auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = layer.forward(x);
  for (std::size_t i = 0; i < 6; ++i) REQUIRE(y.at(i) == x.at(i));

  for (auto& v : layer.weight.values()) v = 0.0f;
  layer.bias.values() = {0.5f, 1.5f, -1.0f};
  auto yb = layer.forward(x);
  REQUIRE(yb.at(1, 0) == 0.5f);
  REQUIRE(yb.at(1, 2) == -1.0f);

  StudentConfig cfg;
  cfg.kind = StudentKind::kMlp;
  cfg.hidden = {4};
  StudentModel mlp(cfg, 3, 2, rng);
  auto out = mlp.forward(x);
  // Direct matrix arithmetic in double precision.
  const auto& l0 = std::get<LinearLayer>(mlp.layers[0]);
  const auto& l1 = std::get<LinearLayer>(mlp.layers[1]);
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> hidden(4, 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = l0.bias.at(j);
      for (std::size_t i = 0; i < 3; ++i) acc += x.at(r, i) * l0.weight.at(i, j);
      hidden[j] = std::max(0.0, acc);
    }
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = l1.bias.at(o);
      for (std::size_t j = 0; j < 4; ++j) acc += hidden[j] * l1.weight.at(j, o);
      REQUIRE(out.at(r, o) == Catch::Approx(acc).margin(1e-5));
    }
  }
}

TEST_CASE("count_params formulas", "[students]") {
  Rng rng(11);
  FrKanPlusLayer fk(4, 3, 2, rng);
  REQUIRE(fk.count_params() == 61);  // 2*3*4*2 + 2 + 4*2 + 3

  LinearLayer lin(10, 5, rng);
  REQUIRE(lin.count_params() == 55);

  StudentConfig cfg;
  cfg.kind = StudentKind::kFrKanPlus;
  cfg.hidden = {6};
  cfg.grid_size = 2;
  StudentModel model(cfg, 4, 3, rng);
  std::size_t per_layer = 0;
  for (const auto& layer : model.layers)
    per_layer += std::visit([](const auto& l) { return l.count_params(); }, layer);
  REQUIRE(model.count_params() == per_layer);

  // Exhaustive enumeration over the trainable tensors agrees.
  std::size_t enumerated = 0;
  for (auto& p : model.params()) enumerated += p.numel();
  REQUIRE(model.count_params() == enumerated);
}

TEST_CASE("all students produce [B x K] finite logits", "[students][property]") {
  Rng rng(13);
  auto x = Tensor::from_data({7, 5}, kdst::testutil::random_values(35, rng, 2.0));
  for (const auto kind :
       {StudentKind::kFrKanPlus, StudentKind::kFrKan, StudentKind::kSplineKan, StudentKind::kMlp}) {
    StudentConfig cfg;
    cfg.kind = kind;
    cfg.grid_size = 2;
    cfg.hidden = {6};
    StudentModel model(cfg, 5, 3, rng);
    auto y = model.forward(x);
    REQUIRE(y.rows() == 7);
    REQUIRE(y.cols() == 3);
    for (std::size_t i = 0; i < y.numel(); ++i) REQUIRE(std::isfinite(y.at(i)));
  }
}

TEST_CASE("gradcheck: frkan+ including log_freq and phase", "[students][grad]") {
  Rng r32(21), r64(21);
  FrKanPlusLayerT<float> l32(3, 2, 2, r32);
  FrKanPlusLayerT<double> l64(3, 2, 2, r64);
  require_layer_grads(l32, l64, 4, 0.9);
}

TEST_CASE("gradcheck: frkan", "[students][grad]") {
  Rng r32(22), r64(22);
  FrKanLayerT<float> l32(3, 2, 2, r32);
  FrKanLayerT<double> l64(3, 2, 2, r64);
  require_layer_grads(l32, l64, 4, 0.9);
}

TEST_CASE("gradcheck: spline kan", "[students][grad]") {
  Rng r32(23), r64(23);
  SplineKanLayerT<float> l32(3, 2, r32);
  SplineKanLayerT<double> l64(3, 2, r64);
  require_layer_grads(l32, l64, 4, 0.6, 56);
}

TEST_CASE("gradcheck: mlp layer", "[students][grad]") {
  Rng r32(24), r64(24);
  LinearLayerT<float> l32(4, 3, r32);
  LinearLayerT<double> l64(4, 3, r64);
  require_layer_grads(l32, l64, 5, 1.0);
}

TEST_CASE("student checkpoint + sidecar round-trip", "[students]") {
  kdst::testutil::TempDir tmp("student");
  Rng rng(33);
  StudentConfig cfg;
  cfg.kind = StudentKind::kFrKanPlus;
  cfg.grid_size = 2;
  StudentModel model(cfg, 6, 4, rng);
  auto x = Tensor::from_data({3, 6}, kdst::testutil::random_values(18, rng));
  auto before = model.forward(x);

  const auto path = (tmp.path / "student.kdst").string();
  save_student(model, path);
  auto loaded = load_student(path);
  REQUIRE(loaded.config.kind == StudentKind::kFrKanPlus);
  REQUIRE(loaded.count_params() == model.count_params());
  auto after = loaded.forward(x);
  for (std::size_t i = 0; i < before.numel(); ++i) REQUIRE(before.at(i) == after.at(i));
}

TEST_CASE("student width mismatch raises", "[students]") {
  Rng rng(35);
  FrKanPlusLayer layer(3, 2, 1, rng);
  REQUIRE_THROWS_AS(layer.forward(Tensor::zeros({2, 4})), ShapeError);
}
