#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/graphio/graph.hpp"
#include "kdst/numkit/rng.hpp"
#include "kdst/numkit/segment.hpp"
#include "kdst/numkit/tensor.hpp"
#include "kdst/teachers/layers.hpp"

namespace kdst::sadsd {

using numkit::Rng;
using numkit::TensorT;
using teachers::AttentionEdges;

// Q/K/V projections plus the learnable sharpening coefficient beta
// (stored as log_beta so the effective beta = exp(log_beta) stays positive).
// V is produced for interface completeness; nothing downstream consumes it,
// so only the Q/K path and beta are treated as trainable.
template <class S>
struct AttentionSamplerT {
  std::size_t in_dim = 0;
  std::size_t attn_dim = 0;  // H
  TensorT<S> w_q, w_k, w_v;  // [D x H]
  TensorT<S> b_q, b_k, b_v;  // [H]
  TensorT<S> log_beta;       // [1]

  AttentionSamplerT() = default;

  AttentionSamplerT(std::size_t d, std::size_t h, Rng& rng) : in_dim(d), attn_dim(h) {
    w_q = TensorT<S>::glorot(d, h, rng, true);
    w_k = TensorT<S>::glorot(d, h, rng, true);
    w_v = TensorT<S>::glorot(d, h, rng, true);
    b_q = TensorT<S>::zeros({h}, true);
    b_k = TensorT<S>::zeros({h}, true);
    b_v = TensorT<S>::zeros({h}, true);
    log_beta = TensorT<S>::zeros({1}, true);
  }

  std::tuple<TensorT<S>, TensorT<S>, TensorT<S>> qkv_project(const TensorT<S>& x) const {
    if (x.cols() != in_dim)
      throw ShapeError("qkv_project: input width " + std::to_string(x.cols()) + ", sampler wants " +
                       std::to_string(in_dim));
    auto q = numkit::add_rowvec(numkit::matmul(x, w_q), b_q);
    auto k = numkit::add_rowvec(numkit::matmul(x, w_k), b_k);
    auto v = numkit::add_rowvec(numkit::matmul(x, w_v), b_v);
    return {q, k, v};
  }

  double beta() const { return std::exp(static_cast<double>(log_beta.at(0))); }

  // Parameters on the loss path (w_v/b_v excluded: giving the optimizer
  // parameters with no gradient would only decay them).
  std::vector<TensorT<S>> trainable_params() { return {w_q, w_k, b_q, b_k, log_beta}; }

  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& prefix) {
    return {{prefix + ".w_q", w_q}, {prefix + ".w_k", w_k}, {prefix + ".w_v", w_v},
            {prefix + ".b_q", b_q}, {prefix + ".b_k", b_k}, {prefix + ".b_v", b_v},
            {prefix + ".log_beta", log_beta}};
  }
};

using AttentionSampler = AttentionSamplerT<float>;

// Fixed per-graph structure for the sampling pipeline: directed attention
// entries (both edge directions plus self-loops), the undirected edge list,
// and the degree-based baseline that centers the edge aggregation so uniform
// attention maps to p = 0.5 exactly.
struct SamplerEdges {
  std::size_t n_nodes = 0;
  AttentionEdges att;                // dst attends over src
  std::vector<std::int32_t> edge_u;  // undirected edges, u < v
  std::vector<std::int32_t> edge_v;
  std::vector<float> inv_incident;   // 1/(deg+1) per node
  std::vector<float> edge_baseline;  // 0.5 (base_u + base_v) per undirected edge
};

inline SamplerEdges build_sampler_edges(const graphio::Graph& g) {
  SamplerEdges se;
  se.n_nodes = static_cast<std::size_t>(g.n_nodes);
  se.att = teachers::attention_edges(g);
  se.edge_u.reserve(g.edge_list.size());
  se.edge_v.reserve(g.edge_list.size());
  for (const auto& e : g.edge_list) {
    se.edge_u.push_back(e.u);
    se.edge_v.push_back(e.v);
  }
  std::vector<std::int32_t> deg(se.n_nodes, 0);
  for (const auto& e : g.edge_list) {
    deg[static_cast<std::size_t>(e.u)]++;
    deg[static_cast<std::size_t>(e.v)]++;
  }
  se.inv_incident.resize(se.n_nodes);
  for (std::size_t i = 0; i < se.n_nodes; ++i)
    se.inv_incident[i] = 1.0f / static_cast<float>(deg[i] + 1);
  // base_u: incoming attention mean at u when every node attends uniformly
  // over its neighborhood, i.e. alpha_{j,u} = 1/(deg_j + 1).
  std::vector<double> base(se.n_nodes, 0.0);
  for (std::size_t e = 0; e < se.att.dst.size(); ++e)
    base[static_cast<std::size_t>(se.att.src[e])] +=
        static_cast<double>(se.inv_incident[static_cast<std::size_t>(se.att.dst[e])]);
  for (std::size_t i = 0; i < se.n_nodes; ++i) base[i] *= se.inv_incident[i];
  se.edge_baseline.resize(se.edge_u.size());
  for (std::size_t m = 0; m < se.edge_u.size(); ++m)
    se.edge_baseline[m] = static_cast<float>(
        0.5 * (base[static_cast<std::size_t>(se.edge_u[m])] +
               base[static_cast<std::size_t>(se.edge_v[m])]));
  return se;
}

// Scaled dot-product attention restricted to graph edges + self-loops:
// score(i, j) = Q_i . K_j / sqrt(H), softmax over each node's neighborhood.
// One value per directed entry in edges.att, normalized per attending node.
template <class S>
TensorT<S> attention_weights(const TensorT<S>& q, const TensorT<S>& k, const SamplerEdges& edges) {
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto qi = numkit::gather_rows(q, edges.att.dst);
  auto kj = numkit::gather_rows(k, edges.att.src);
  auto scores = numkit::scale(numkit::rowsum(numkit::mul(qi, kj)), inv_sqrt_h);
  return numkit::segment_softmax(scores, edges.att.dst, edges.n_nodes);
}

// Dense cross-check path: materializes the masked N x N score matrix and
// normalizes each row over its neighborhood. Only for small graphs.
template <class S>
std::vector<double> attention_weights_dense(const TensorT<S>& q, const TensorT<S>& k,
                                            const SamplerEdges& edges) {
  const std::size_t n = edges.n_nodes;
  if (n > 3000) throw ConfigError("attention_weights_dense: graph too large for the dense path");
  const std::size_t h = q.cols();
  std::vector<double> scores(n * n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t e = 0; e < edges.att.dst.size(); ++e) {
    const auto i = static_cast<std::size_t>(edges.att.dst[e]);
    const auto j = static_cast<std::size_t>(edges.att.src[e]);
    double dot = 0.0;
    for (std::size_t c = 0; c < h; ++c)
      dot += static_cast<double>(q.at(i, c)) * static_cast<double>(k.at(j, c));
    scores[i * n + j] = dot / std::sqrt(static_cast<double>(h));
  }
  std::vector<double> alpha(edges.att.dst.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!std::isnan(scores[i * n + j])) mx = std::max(mx, scores[i * n + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (!std::isnan(scores[i * n + j])) denom += std::exp(scores[i * n + j] - mx);
    for (std::size_t e = 0; e < edges.att.dst.size(); ++e)
      if (static_cast<std::size_t>(edges.att.dst[e]) == i)
        alpha[e] = std::exp(scores[i * n + static_cast<std::size_t>(edges.att.src[e])] - mx) / denom;
  }
  return alpha;
}

// Edge sampling probabilities p = clamp(sigmoid(beta * Phi), floor, ceil).
// Phi averages the two endpoints' mean incoming attention and subtracts the
// degree-based baseline, so uniform attention yields Phi = 0 and p = 0.5.
template <class S>
TensorT<S> edge_sampling_probs(const TensorT<S>& alpha, const TensorT<S>& log_beta,
                               const SamplerEdges& edges, double prob_floor, double prob_ceil) {
  std::vector<S> inv(edges.inv_incident.begin(), edges.inv_incident.end());
  auto incoming_mean = numkit::scale_rows(
      numkit::scatter_add_rows(alpha, edges.att.src, edges.n_nodes),
      TensorT<S>::from_data({edges.n_nodes}, std::move(inv)));
  auto endpoint_mean = numkit::scale(numkit::add(numkit::gather_rows(incoming_mean, edges.edge_u),
                                                 numkit::gather_rows(incoming_mean, edges.edge_v)),
                                     0.5);
  std::vector<S> base(edges.edge_baseline.begin(), edges.edge_baseline.end());
  auto phi = numkit::sub(endpoint_mean,
                         TensorT<S>::from_data({edges.edge_u.size()}, std::move(base)));
  auto p = numkit::sigmoid(numkit::scale_by_scalar(phi, numkit::exp_(log_beta)));
  return numkit::clamp(p, prob_floor, prob_ceil);
}

// Multiplies p by weight_true where teacher and student agree on both
// endpoints' predictions, weight_false where they disagree on both, and
// leaves mixed edges alone; clamped back into [floor, ceil].
template <class S>
TensorT<S> consistency_reweight(const TensorT<S>& probs,
                                const std::vector<std::int32_t>& teacher_argmax,
                                const std::vector<std::int32_t>& student_argmax,
                                const SamplerEdges& edges, double weight_true, double weight_false,
                                double prob_floor, double prob_ceil) {
  if (teacher_argmax.size() != edges.n_nodes || student_argmax.size() != edges.n_nodes)
    throw ShapeError("consistency_reweight: argmax vectors must cover every node");
  const std::size_t n_edges = edges.edge_u.size();
  std::vector<S> factor(n_edges);
  for (std::size_t m = 0; m < factor.size(); ++m) {
    const auto u = static_cast<std::size_t>(edges.edge_u[m]);
    const auto v = static_cast<std::size_t>(edges.edge_v[m]);
    const bool agree_u = teacher_argmax[u] == student_argmax[u];
    const bool agree_v = teacher_argmax[v] == student_argmax[v];
    factor[m] = static_cast<S>(agree_u && agree_v ? weight_true
                               : (!agree_u && !agree_v ? weight_false : 1.0));
  }
  auto reweighted = numkit::mul(probs, TensorT<S>::from_data({n_edges}, std::move(factor)));
  return numkit::clamp(reweighted, prob_floor, prob_ceil);
}

// One Bernoulli draw per undirected edge; both directions share it.
template <class S>
std::vector<std::int32_t> sample_edges(const TensorT<S>& probs, Rng& rng) {
  std::vector<std::int32_t> sampled;
  sampled.reserve(probs.numel());
  for (std::size_t m = 0; m < probs.numel(); ++m)
    if (rng.bernoulli(static_cast<double>(probs.at(m))))
      sampled.push_back(static_cast<std::int32_t>(m));
  return sampled;
}

}  // namespace kdst::sadsd
