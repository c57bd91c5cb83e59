#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kdst/common.hpp"
#include "kdst/numkit/csr.hpp"
#include "kdst/numkit/tensor.hpp"

namespace kdst::graphio {

namespace fs = std::filesystem;
using numkit::CsrMatrix;
using numkit::Tensor;

struct Edge {
  std::int32_t u;  // always u < v
  std::int32_t v;
};

// Undirected node-classification dataset. The adjacency stores both
// directions of every edge with unit weight and no self-loops; self-loops
// only appear through normalization.
struct Graph {
  std::int32_t n_nodes = 0;
  std::int32_t n_feats = 0;
  std::int32_t n_classes = 0;
  Tensor features;                  // [N x D]
  std::vector<std::int32_t> labels; // len N, in [0, K)
  CsrMatrix adj;                    // [N x N], symmetric
  std::vector<Edge> edge_list;      // one entry per undirected edge

  void validate() const {
    if (features.rows() != static_cast<std::size_t>(n_nodes) ||
        features.cols() != static_cast<std::size_t>(n_feats))
      throw ShapeError("graph: feature matrix shape mismatch");
    if (labels.size() != static_cast<std::size_t>(n_nodes))
      throw ShapeError("graph: label count mismatch");
    for (const auto y : labels)
      if (y < 0 || y >= n_classes) throw IoError("graph: label out of range");
    for (const float x : features.values())
      if (!std::isfinite(x)) throw NumericError("graph: non-finite feature");
    adj.validate();
    for (const auto& e : edge_list)
      if (e.u >= e.v) throw ShapeError("graph: edge list not canonical (u < v)");
  }
};

// Builds the symmetric adjacency from canonical undirected edges.
inline CsrMatrix adjacency_from_edges(std::int32_t n_nodes, const std::vector<Edge>& edges) {
  std::vector<std::int32_t> rows, cols;
  rows.reserve(edges.size() * 2);
  cols.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    rows.push_back(e.u);
    cols.push_back(e.v);
    rows.push_back(e.v);
    cols.push_back(e.u);
  }
  return CsrMatrix::from_coo(static_cast<std::size_t>(n_nodes), static_cast<std::size_t>(n_nodes),
                             std::move(rows), std::move(cols),
                             std::vector<float>(edges.size() * 2, 1.0f));
}

inline Graph make_graph(std::int32_t n_nodes, std::int32_t n_feats, std::int32_t n_classes,
                        Tensor features, std::vector<std::int32_t> labels, std::vector<Edge> edges) {
  Graph g;
  g.n_nodes = n_nodes;
  g.n_feats = n_feats;
  g.n_classes = n_classes;
  g.features = std::move(features);
  g.labels = std::move(labels);
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
  g.edge_list = std::move(edges);
  g.adj = adjacency_from_edges(n_nodes, g.edge_list);
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// On-disk dataset format
// ---------------------------------------------------------------------------
// meta.json           {"n_nodes": N, "n_feats": D, "n_classes": K}
// features.bin        N*D little-endian f32, row-major
// labels.bin          N little-endian i32
// edges.tsv           one "src<TAB>dst" per line, 0-indexed; self-loops and
//                     duplicate (unordered) pairs are rejected

inline void save_graph(const Graph& g, const std::string& dir) {
  fs::create_directories(dir);
  {
    nlohmann::json meta{{"n_nodes", g.n_nodes}, {"n_feats", g.n_feats}, {"n_classes", g.n_classes}};
    std::ofstream os(fs::path(dir) / "meta.json");
    os << meta.dump(2) << "\n";
    if (!os) throw IoError("save_graph: cannot write meta.json");
  }
  {
    std::ofstream os(fs::path(dir) / "features.bin", std::ios::binary);
    os.write(reinterpret_cast<const char*>(g.features.values().data()),
             static_cast<std::streamsize>(g.features.numel() * sizeof(float)));
    if (!os) throw IoError("save_graph: cannot write features.bin");
  }
  {
    std::ofstream os(fs::path(dir) / "labels.bin", std::ios::binary);
    os.write(reinterpret_cast<const char*>(g.labels.data()),
             static_cast<std::streamsize>(g.labels.size() * sizeof(std::int32_t)));
    if (!os) throw IoError("save_graph: cannot write labels.bin");
  }
  {
    std::ofstream os(fs::path(dir) / "edges.tsv");
    for (const auto& e : g.edge_list) os << e.u << "\t" << e.v << "\n";
    if (!os) throw IoError("save_graph: cannot write edges.tsv");
  }
}

inline Graph load_graph(const std::string& dir) {
  const fs::path root(dir);
  for (const char* name : {"meta.json", "features.bin", "labels.bin", "edges.tsv"})
    if (!fs::exists(root / name)) throw IoError("load_graph: missing " + (root / name).string());

  nlohmann::json meta;
  {
    std::ifstream is(root / "meta.json");
    try {
      is >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("load_graph: bad meta.json: " + std::string(e.what()));
    }
  }
  for (const char* key : {"n_nodes", "n_feats", "n_classes"})
    if (!meta.contains(key) || !meta[key].is_number_integer())
      throw IoError(std::string("load_graph: meta.json missing integer key ") + key);
  const auto n = meta["n_nodes"].get<std::int32_t>();
  const auto d = meta["n_feats"].get<std::int32_t>();
  const auto k = meta["n_classes"].get<std::int32_t>();
  if (n <= 0 || d <= 0 || k <= 0) throw IoError("load_graph: non-positive dimensions in meta.json");

  std::vector<float> feat(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  {
    std::ifstream is(root / "features.bin", std::ios::binary);
    const auto bytes = fs::file_size(root / "features.bin");
    if (bytes != feat.size() * sizeof(float))
      throw IoError("load_graph: features.bin holds " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(feat.size() * sizeof(float)));
    is.read(reinterpret_cast<char*>(feat.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw IoError("load_graph: failed reading features.bin");
  }
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  {
    std::ifstream is(root / "labels.bin", std::ios::binary);
    const auto bytes = fs::file_size(root / "labels.bin");
    if (bytes != labels.size() * sizeof(std::int32_t))
      throw IoError("load_graph: labels.bin holds " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(labels.size() * sizeof(std::int32_t)));
    is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw IoError("load_graph: failed reading labels.bin");
  }
  for (const auto y : labels)
    if (y < 0 || y >= k) throw IoError("load_graph: label out of range [0," + std::to_string(k) + ")");

  std::vector<Edge> edges;
  {
    std::ifstream is(root / "edges.tsv");
    std::set<std::pair<std::int32_t, std::int32_t>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto where = " at edges.tsv line " + std::to_string(lineno);
      std::int64_t a = 0, b = 0;
      char tab = 0;
      std::istringstream ls(line);
      if (!(ls >> a >> b) || (ls >> tab))
        throw IoError("load_graph: malformed edge" + where);
      if (line.find('.') != std::string::npos)
        throw IoError("load_graph: non-integer edge endpoint" + where);
      if (a < 0 || b < 0 || a >= n || b >= n)
        throw IoError("load_graph: edge endpoint out of range" + where);
      if (a == b) throw IoError("load_graph: self-loop rejected" + where);
      const std::pair<std::int32_t, std::int32_t> key{
          static_cast<std::int32_t>(std::min(a, b)), static_cast<std::int32_t>(std::max(a, b))};
      if (!seen.insert(key).second)
        throw IoError("load_graph: duplicate edge rejected" + where);
      edges.push_back({key.first, key.second});
    }
  }
  return make_graph(n, d, k, Tensor::from_data({static_cast<std::size_t>(n),
                                                static_cast<std::size_t>(d)},
                                               std::move(feat)),
                    std::move(labels), std::move(edges));
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// Symmetric normalization with self-loops added: D^{-1/2} (A + I) D^{-1/2}
// where D is the degree of A + I. Isolated nodes end up with a unit
// self-loop, never a division by zero.
inline CsrMatrix normalize_adjacency(const Graph& g) {
  const auto n = static_cast<std::size_t>(g.n_nodes);
  std::vector<float> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto deg = static_cast<double>(g.adj.row_ptr[i + 1] - g.adj.row_ptr[i]) + 1.0;
    inv_sqrt_deg[i] = static_cast<float>(1.0 / std::sqrt(deg));
  }
  CsrMatrix out;
  out.n_rows = out.n_cols = n;
  out.row_ptr.assign(n + 1, 0);
  out.col_idx.reserve(g.adj.nnz() + n);
  out.values.reserve(g.adj.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool self_emitted = false;
    const auto self = static_cast<std::int32_t>(i);
    for (std::int64_t p = g.adj.row_ptr[i]; p < g.adj.row_ptr[i + 1]; ++p) {
      const std::int32_t j = g.adj.col_idx[static_cast<std::size_t>(p)];
      if (!self_emitted && j > self) {
        out.col_idx.push_back(self);
        out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
        self_emitted = true;
      }
      out.col_idx.push_back(j);
      out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[static_cast<std::size_t>(j)]);
    }
    if (!self_emitted) {
      out.col_idx.push_back(self);
      out.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
    }
    out.row_ptr[i + 1] = static_cast<std::int64_t>(out.col_idx.size());
  }
  out.validate();
  return out;
}

// Row-normalized neighbor averaging operator D^{-1} A without self-loops;
// rows of isolated nodes are all zero.
inline CsrMatrix neighbor_mean_matrix(const Graph& g) {
  CsrMatrix out = g.adj;
  for (std::size_t i = 0; i < out.n_rows; ++i) {
    const auto deg = out.row_ptr[i + 1] - out.row_ptr[i];
    if (deg == 0) continue;
    const float inv = 1.0f / static_cast<float>(deg);
    for (std::int64_t p = out.row_ptr[i]; p < out.row_ptr[i + 1]; ++p)
      out.values[static_cast<std::size_t>(p)] = inv;
  }
  return out;
}

// Optional per-row L1 feature normalization (off by default across the repo).
inline void row_l1_normalize(Tensor& features) {
  const std::size_t m = features.rows(), d = features.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += std::abs(features.at(i, j));
    if (s == 0.0) continue;
    const float inv = static_cast<float>(1.0 / s);
    for (std::size_t j = 0; j < d; ++j) features.values()[i * d + j] *= inv;
  }
}

// The four-node fixture used across the test suites: path 0-1-2-3, two
// classes in homophilous blocks, two separable features.
inline Graph toy_graph() {
  std::vector<float> feats{1.0f, 0.1f, 0.8f, 0.0f, 0.2f, 0.9f, 0.1f, 1.1f};
  return make_graph(4, 2, 2,
                    Tensor::from_data({4, 2}, std::move(feats)),
                    {0, 0, 1, 1}, {{0, 1}, {1, 2}, {2, 3}});
}

}  // namespace kdst::graphio
