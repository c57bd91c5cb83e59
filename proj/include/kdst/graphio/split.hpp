#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/graphio/graph.hpp"
#include "kdst/numkit/rng.hpp"

namespace kdst::graphio {

using numkit::Rng;

enum class Mode { kTransductive, kInductive };

inline const char* mode_name(Mode m) {
  return m == Mode::kTransductive ? "transductive" : "inductive";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "transductive") return Mode::kTransductive;
  if (s == "inductive") return Mode::kInductive;
  throw ConfigError("unknown mode: " + s + " (expected transductive|inductive)");
}

struct Split {
  Mode mode = Mode::kTransductive;
  std::vector<std::int32_t> train_idx;
  std::vector<std::int32_t> val_idx;
  std::vector<std::int32_t> test_idx;
  // Inductive only: obs + ind partition test_idx. ind nodes and their edges
  // are invisible during training.
  std::vector<std::int32_t> obs_idx;
  std::vector<std::int32_t> ind_idx;
};

// Per-class uniform sampling: exactly per_class_train + per_class_val nodes
// drawn from each class, remainder is test. Classes are processed in
// ascending id order from one seeded stream, so (graph, seed, params)
// determines the split bit-for-bit.
inline Split make_transductive_split(const Graph& g, std::uint64_t seed, int per_class_train,
                                     int per_class_val) {
  if (per_class_train < 0 || per_class_val < 0)
    throw ConfigError("split: negative per-class count");
  std::vector<std::vector<std::int32_t>> by_class(static_cast<std::size_t>(g.n_classes));
  for (std::int32_t i = 0; i < g.n_nodes; ++i)
    by_class[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);

  Rng rng(seed);
  Split s;
  for (std::int32_t c = 0; c < g.n_classes; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    const std::size_t need = static_cast<std::size_t>(per_class_train + per_class_val);
    if (members.size() < need)
      throw ConfigError("split: class " + std::to_string(c) + " has " +
                        std::to_string(members.size()) + " nodes, needs " + std::to_string(need));
    rng.shuffle(members);
    for (int i = 0; i < per_class_train; ++i)
      s.train_idx.push_back(members[static_cast<std::size_t>(i)]);
    for (int i = 0; i < per_class_val; ++i)
      s.val_idx.push_back(members[static_cast<std::size_t>(per_class_train + i)]);
    for (std::size_t i = need; i < members.size(); ++i) s.test_idx.push_back(members[i]);
  }
  std::sort(s.train_idx.begin(), s.train_idx.end());
  std::sort(s.val_idx.begin(), s.val_idx.end());
  std::sort(s.test_idx.begin(), s.test_idx.end());
  return s;
}

// Transductive split plus a partition of test into observed and inductive
// nodes, |ind| = floor(ind_fraction * |test|).
inline Split make_inductive_split(const Graph& g, std::uint64_t seed, int per_class_train,
                                  int per_class_val, double ind_fraction) {
  if (!(ind_fraction > 0.0 && ind_fraction < 1.0))
    throw ConfigError("split: ind_fraction must lie in (0, 1)");
  Split s = make_transductive_split(g, seed, per_class_train, per_class_val);
  s.mode = Mode::kInductive;
  const auto n_ind =
      static_cast<std::size_t>(ind_fraction * static_cast<double>(s.test_idx.size()));
  // A second stream decoupled from the per-class draw picks the ind subset.
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto pool = s.test_idx;
  rng.shuffle(pool);
  s.ind_idx.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_ind));
  s.obs_idx.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_ind), pool.end());
  std::sort(s.ind_idx.begin(), s.ind_idx.end());
  std::sort(s.obs_idx.begin(), s.obs_idx.end());
  return s;
}

// Training view for inductive mode: same node set, but only edges whose both
// endpoints are in train ∪ val ∪ obs survive. Node features and labels are
// shared; consumers must not read ind rows during training.
inline Graph observed_view(const Graph& g, const Split& split) {
  if (split.mode != Mode::kInductive) throw ConfigError("observed_view: split is not inductive");
  std::vector<bool> visible(static_cast<std::size_t>(g.n_nodes), true);
  for (const auto i : split.ind_idx) visible[static_cast<std::size_t>(i)] = false;
  std::vector<Edge> kept;
  kept.reserve(g.edge_list.size());
  for (const auto& e : g.edge_list)
    if (visible[static_cast<std::size_t>(e.u)] && visible[static_cast<std::size_t>(e.v)])
      kept.push_back(e);
  Graph view;
  view.n_nodes = g.n_nodes;
  view.n_feats = g.n_feats;
  view.n_classes = g.n_classes;
  view.features = g.features;
  view.labels = g.labels;
  view.edge_list = std::move(kept);
  view.adj = adjacency_from_edges(g.n_nodes, view.edge_list);
  return view;
}

}  // namespace kdst::graphio
