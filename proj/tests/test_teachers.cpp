#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kdst/graphio/split.hpp"
#include "kdst/graphio/synthetic.hpp"
#include "kdst/teachers/train.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace kdst;
using namespace kdst::numkit;
using namespace kdst::graphio;
using namespace kdst::teachers;

namespace {

Graph small_random_graph(std::uint64_t seed, std::int32_t n = 30) {
  SyntheticSpec spec;
  spec.n_nodes = n;
  spec.n_feats = 6;
  spec.n_classes = 3;
  spec.avg_degree = 3.0;
  spec.homophily = 0.7;
  spec.seed = seed;
  return make_synthetic_graph(spec);
}

TeacherHyper small_hyper() {
  TeacherHyper h;
  h.hidden = 8;
  h.heads = 2;
  h.head_dim = 4;
  return h;
}

}  // namespace

TEST_CASE("gcn layer: identity adjacency and identity weights pass features through",
          "[teachers]") {
  Rng rng(1);
  GcnLayer layer(3, 3, rng);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) layer.weight.values()[i * 3 + j] = i == j ? 1.0f : 0.0f;
  for (auto& b : layer.bias.values()) b = 0.0f;
  auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto eye = CsrMatrix::identity(2);
  auto y = layer.forward(eye, x);
  for (std::size_t i = 0; i < 6; ++i) REQUIRE(y.at(i) == x.at(i));
}

TEST_CASE("gcn layer: two-node graph mixes each pair of rows evenly", "[teachers]") {
  // normalize_adjacency of a single edge gives all entries 0.5.
  auto g = make_graph(2, 2, 1, Tensor::from_data({2, 2}, {1.0f, 3.0f, 5.0f, 7.0f}), {0, 0},
                      {{0, 1}});
  auto a_hat = normalize_adjacency(g);
  Rng rng(2);
  GcnLayer layer(2, 2, rng);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) layer.weight.values()[i * 2 + j] = i == j ? 1.0f : 0.0f;
  for (auto& b : layer.bias.values()) b = 0.0f;
  auto y = layer.forward(a_hat, g.features);
  for (std::size_t j = 0; j < 2; ++j) {
    const float mix = 0.5f * (g.features.at(0, j) + g.features.at(1, j));
    REQUIRE(y.at(0, j) == Catch::Approx(mix).margin(1e-6));
    REQUIRE(y.at(1, j) == Catch::Approx(mix).margin(1e-6));
  }
}

TEST_CASE("teacher forward maps N x D to N x K", "[teachers]") {
  auto g = small_random_graph(3);
  auto ctx = make_context<float>(g);
  for (const auto arch : {TeacherArch::kGcn, TeacherArch::kSage, TeacherArch::kGat}) {
    Rng rng(4);
    TeacherModel model(arch, small_hyper(), 6, 3, rng);
    Rng fwd(0);
    auto y = model.forward(ctx, g.features, false, fwd);
    REQUIRE(y.rows() == 30);
    REQUIRE(y.cols() == 3);
  }
}

TEST_CASE("sage layer: isolated node uses only the self path", "[teachers]") {
  auto g = make_graph(2, 2, 1, Tensor::from_data({2, 2}, {1.0f, 2.0f, -1.0f, 4.0f}), {0, 0}, {});
  auto mean_op = neighbor_mean_matrix(g);
  Rng rng(5);
  SageLayer layer(2, 2, rng);
  auto y = layer.forward(mean_op, g.features);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t o = 0; o < 2; ++o) {
      double expect = layer.bias.at(o);
      for (std::size_t p = 0; p < 2; ++p)
        expect += g.features.at(i, p) * layer.weight_self.at(p, o);
      REQUIRE(y.at(i, o) == Catch::Approx(expect).margin(1e-6));
    }
}

TEST_CASE("sage layer: star center aggregates the leaf mean", "[teachers]") {
  // Star: node 0 joined to 1..4.
  auto g = make_graph(5, 2, 1,
                      Tensor::from_data({5, 2}, {0.0f, 0.0f, 1.0f, 2.0f, 3.0f, -1.0f, 5.0f, 0.5f,
                                                 -2.0f, 7.0f}),
                      {0, 0, 0, 0, 0}, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  auto mean_op = neighbor_mean_matrix(g);
  Rng rng(6);
  SageLayer layer(2, 3, rng);
  auto y = layer.forward(mean_op, g.features);
  // Naive loop oracle for the center row.
  for (std::size_t o = 0; o < 3; ++o) {
    double mean0 = 0, mean1 = 0;
    for (std::size_t leaf = 1; leaf < 5; ++leaf) {
      mean0 += g.features.at(leaf, 0) / 4.0;
      mean1 += g.features.at(leaf, 1) / 4.0;
    }
    double expect = layer.bias.at(o) + mean0 * layer.weight_neigh.at(0, o) +
                    mean1 * layer.weight_neigh.at(1, o);
    expect += g.features.at(0, 0) * layer.weight_self.at(0, o) +
              g.features.at(0, 1) * layer.weight_self.at(1, o);
    REQUIRE(y.at(0, o) == Catch::Approx(expect).margin(1e-5));
  }
}

TEST_CASE("teacher forwards are deterministic in the seed", "[teachers][property]") {
  auto g = small_random_graph(7);
  auto ctx = make_context<float>(g);
  for (const auto arch : {TeacherArch::kGcn, TeacherArch::kSage, TeacherArch::kGat}) {
    Rng ra(11), rb(11);
    TeacherModel a(arch, small_hyper(), 6, 3, ra);
    TeacherModel b(arch, small_hyper(), 6, 3, rb);
    Rng fa(1), fb(1);
    auto ya = a.forward(ctx, g.features, true, fa);
    auto yb = b.forward(ctx, g.features, true, fb);
    for (std::size_t i = 0; i < ya.numel(); ++i) REQUIRE(ya.at(i) == yb.at(i));
  }
}

TEST_CASE("gat: single node with self-loop passes Wh through", "[teachers]") {
  auto g = make_graph(1, 3, 1, Tensor::from_data({1, 3}, {1.0f, -2.0f, 0.5f}), {0}, {});
  auto edges = attention_edges(g);
  Rng rng(8);
  GatLayer layer(3, 1, 4, true, rng);
  auto y = layer.forward(edges, 1, g.features);
  for (std::size_t j = 0; j < 4; ++j) {
    double wh = 0.0;
    for (std::size_t p = 0; p < 3; ++p) wh += g.features.at(0, p) * layer.weight.at(p, j);
    REQUIRE(y.at(0, j) == Catch::Approx(wh).margin(1e-5));
  }
}

TEST_CASE("gat: equal scores over self plus two neighbors give alpha 1/3", "[teachers]") {
  auto g = make_graph(3, 2, 1, Tensor::from_data({3, 2}, {1.0f, 0.0f, 0.0f, 1.0f, 1.0f, 1.0f}),
                      {0, 0, 0}, {{0, 1}, {0, 2}});
  auto edges = attention_edges(g);
  Rng rng(9);
  GatLayer layer(2, 1, 2, true, rng);
  // Zero attention vectors make every score zero, hence uniform alpha.
  for (auto& v : layer.attn_src.values()) v = 0.0f;
  for (auto& v : layer.attn_dst.values()) v = 0.0f;
  auto y = layer.forward(edges, 3, g.features);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean_wh = 0.0;
    for (std::size_t node = 0; node < 3; ++node) {
      double wh = 0.0;
      for (std::size_t p = 0; p < 2; ++p) wh += g.features.at(node, p) * layer.weight.at(p, j);
      mean_wh += wh / 3.0;
    }
    REQUIRE(y.at(0, j) == Catch::Approx(mean_wh).margin(1e-5));
  }
}

TEST_CASE("teacher forwards match naive loop oracles on small graphs", "[teachers][property]") {
  for (const std::uint64_t seed : {21ULL, 22ULL}) {
    auto g = small_random_graph(seed, 40);
    auto ctx = make_context<float>(g);
    Rng rng(seed);
    TeacherModel gcn(TeacherArch::kGcn, small_hyper(), 6, 3, rng);
    TeacherModel sage(TeacherArch::kSage, small_hyper(), 6, 3, rng);
    TeacherModel gat(TeacherArch::kGat, small_hyper(), 6, 3, rng);
    Rng fwd(0);
    auto y_gcn = gcn.forward(ctx, g.features, false, fwd);
    auto y_sage = sage.forward(ctx, g.features, false, fwd);
    auto y_gat = gat.forward(ctx, g.features, false, fwd);
    auto o_gcn = kdst::oracles::naive_gcn_forward(g, gcn);
    auto o_sage = kdst::oracles::naive_sage_forward(g, sage);
    auto o_gat = kdst::oracles::naive_gat_forward(g, gat);
    for (std::size_t i = 0; i < y_gcn.numel(); ++i) {
      REQUIRE(std::abs(y_gcn.at(i) - o_gcn[i]) < 1e-5);
      REQUIRE(std::abs(y_sage.at(i) - o_sage[i]) < 1e-5);
      REQUIRE(std::abs(y_gat.at(i) - o_gat[i]) < 1e-5);
    }
  }
}

TEST_CASE("gradcheck: two-layer teachers on a small graph", "[teachers][grad]") {
  auto g = small_random_graph(31, 12);
  auto ctx32 = make_context<float>(g);
  auto ctx64 = make_context<double>(g);
  std::vector<double> feat64(g.features.values().begin(), g.features.values().end());
  auto x64 = Tensor64::from_data(g.features.shape(), feat64);
  std::vector<std::int32_t> idx{0, 2, 5, 7};
  std::vector<std::int32_t> labels;
  for (const auto i : idx) labels.push_back(g.labels[static_cast<std::size_t>(i)]);

  for (const auto arch : {TeacherArch::kGcn, TeacherArch::kSage, TeacherArch::kGat}) {
    Rng r32(41), r64(41);
    TeacherModelT<float> m32(arch, small_hyper(), 6, 3, r32);
    TeacherModelT<double> m64(arch, small_hyper(), 6, 3, r64);
    auto p32 = m32.params();
    auto p64 = m64.params();
    for (std::size_t i = 0; i < p32.size(); ++i)
      for (std::size_t j = 0; j < p32[i].numel(); ++j)
        p64[i].values()[j] = static_cast<double>(p32[i].at(j));

    Rng fwd(0);
    auto loss32 = nll(gather_rows(log_softmax_rows(m32.forward(ctx32, g.features, false, fwd)), idx),
                      labels);
    backward(loss32);
    auto loss64 = [&]() {
      Rng f(0);
      return nll(gather_rows(log_softmax_rows(m64.forward(ctx64, x64, false, f)), idx), labels)
          .item();
    };
    // Step 1e-4: composed models have relu/leaky kinks that a wider central
    // difference smears across.
    auto res = kdst::testutil::grad_check(p32, p64, loss64, 20, 1e-4);
    INFO(teacher_arch_name(arch) << ": " << res.worst);
    REQUIRE(res.max_rel_err < 1e-3);
  }
}

TEST_CASE("train_teacher memorizes the toy graph", "[teachers][slow]") {
  auto g = toy_graph();
  // All four nodes labeled and validated: pure capacity check, so the
  // best-validation restore and the memorization target coincide.
  Split split;
  split.train_idx = {0, 1, 2, 3};
  split.val_idx = {0, 1, 2, 3};
  TeacherHyper hyper;
  hyper.hidden = 16;
  hyper.max_epochs = 500;
  hyper.patience = 500;
  hyper.dropout = 0.2;
  auto res = train_teacher(g, split, TeacherArch::kGcn, hyper, 2.0, 0);
  REQUIRE(res.train_acc == 1.0);
  REQUIRE(res.output.logits.rows() == 4);
  // Softened rows sum to one.
  for (std::size_t i = 0; i < 4; ++i) {
    float total = 0;
    for (std::size_t k = 0; k < 2; ++k) total += res.output.softened.at(i, k);
    REQUIRE(std::abs(total - 1.0f) < 1e-5f);
  }
  // Argmax consistent with logits.
  for (std::size_t i = 0; i < 4; ++i) {
    const auto k = static_cast<std::size_t>(res.output.argmax[i]);
    for (std::size_t j = 0; j < 2; ++j)
      REQUIRE(res.output.logits.at(i, k) >= res.output.logits.at(i, j));
  }
}

TEST_CASE("train_teacher restores the best validation checkpoint", "[teachers][slow]") {
  SyntheticSpec spec;
  spec.n_nodes = 120;
  spec.n_feats = 8;
  spec.n_classes = 3;
  spec.seed = 5;
  auto g = make_synthetic_graph(spec);
  auto split = make_transductive_split(g, 1, 10, 10);
  TeacherHyper hyper = small_hyper();
  hyper.max_epochs = 60;
  hyper.patience = 15;
  auto res = train_teacher(g, split, TeacherArch::kGcn, hyper, 2.0, 3);
  // Reported metrics are computed at the restored checkpoint.
  REQUIRE(numkit::accuracy(res.output.argmax, g.labels, split.val_idx) ==
          Catch::Approx(res.val_acc));
  REQUIRE(res.best_epoch <= res.epochs_run - 1);
  REQUIRE(res.epochs_run <= hyper.max_epochs);
}

TEST_CASE("inductive training reports obs and ind accuracy separately", "[teachers][slow]") {
  SyntheticSpec spec;
  spec.n_nodes = 150;
  spec.n_feats = 8;
  spec.n_classes = 3;
  spec.seed = 8;
  auto g = make_synthetic_graph(spec);
  auto split = make_inductive_split(g, 2, 10, 10, 0.3);
  TeacherHyper hyper = small_hyper();
  hyper.max_epochs = 80;
  hyper.patience = 20;
  auto res = train_teacher(g, split, TeacherArch::kGcn, hyper, 2.0, 1);
  REQUIRE(res.ind_acc > 0.3);  // far above the 1/3 chance floor would be nice, but
  REQUIRE(res.obs_acc > 0.3);  // these only guard against degenerate outputs
  // Teacher output rows cover the whole node set (observed-graph inference).
  REQUIRE(res.output.logits.rows() == static_cast<std::size_t>(g.n_nodes));
}

TEST_CASE("train_teacher surfaces divergence with the epoch index", "[teachers]") {
  auto g = toy_graph();
  auto split = make_transductive_split(g, 0, 1, 1);
  TeacherHyper hyper;
  hyper.hidden = 8;
  hyper.lr = 1e30;  // first step overflows the second layer to inf
  hyper.max_epochs = 30;
  // With per-op debug checks enabled the blow-up surfaces even earlier, as a
  // plain non-finite-value error; the epoch-labeled report is the
  // release-mode path, so pin that mode here.
  const bool was = debug_checks_enabled();
  set_debug_checks(false);
  REQUIRE_THROWS_WITH(train_teacher(g, split, TeacherArch::kGcn, hyper, 2.0, 0),
                      Catch::Matchers::ContainsSubstring("epoch"));
  set_debug_checks(true);
  REQUIRE_THROWS_AS(train_teacher(g, split, TeacherArch::kGcn, hyper, 2.0, 0), NumericError);
  set_debug_checks(was);
}
