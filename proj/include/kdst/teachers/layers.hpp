#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/graphio/graph.hpp"
#include "kdst/numkit/rng.hpp"
#include "kdst/numkit/segment.hpp"
#include "kdst/numkit/tensor.hpp"

namespace kdst::teachers {

using numkit::CsrMatrixT;
using numkit::Rng;
using numkit::TensorT;

// GCN layer: H' = A_hat H W + b with the normalized adjacency applied after
// the dense projection (cheaper when D_out << D_in).
template <class S>
struct GcnLayerT {
  TensorT<S> weight;  // [D_in x D_out]
  TensorT<S> bias;    // [D_out]

  GcnLayerT() = default;
  GcnLayerT(std::size_t d_in, std::size_t d_out, Rng& rng) {
    weight = TensorT<S>::glorot(d_in, d_out, rng, true);
    bias = TensorT<S>::zeros({d_out}, true);
  }

  TensorT<S> forward(const CsrMatrixT<S>& a_hat, const TensorT<S>& h) const {
    return numkit::add_rowvec(numkit::spmm(a_hat, numkit::matmul(h, weight)), bias);
  }

  std::vector<TensorT<S>> params() { return {weight, bias}; }
  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& p) {
    return {{p + ".weight", weight}, {p + ".bias", bias}};
  }
  std::size_t count_params() const { return weight.numel() + bias.numel(); }
};

// GraphSAGE with mean aggregator: H' = H W_self + meanNeigh(H) W_neigh + b.
// The neighbor mean excludes self-loops; isolated nodes contribute a zero
// neighbor vector.
template <class S>
struct SageLayerT {
  TensorT<S> weight_self;   // [D_in x D_out]
  TensorT<S> weight_neigh;  // [D_in x D_out]
  TensorT<S> bias;          // [D_out]

  SageLayerT() = default;
  SageLayerT(std::size_t d_in, std::size_t d_out, Rng& rng) {
    weight_self = TensorT<S>::glorot(d_in, d_out, rng, true);
    weight_neigh = TensorT<S>::glorot(d_in, d_out, rng, true);
    bias = TensorT<S>::zeros({d_out}, true);
  }

  TensorT<S> forward(const CsrMatrixT<S>& mean_op, const TensorT<S>& h) const {
    auto self_part = numkit::matmul(h, weight_self);
    auto neigh_part = numkit::spmm(mean_op, numkit::matmul(h, weight_neigh));
    return numkit::add_rowvec(numkit::add(self_part, neigh_part), bias);
  }

  std::vector<TensorT<S>> params() { return {weight_self, weight_neigh, bias}; }
  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& p) {
    return {{p + ".weight_self", weight_self},
            {p + ".weight_neigh", weight_neigh},
            {p + ".bias", bias}};
  }
  std::size_t count_params() const {
    return weight_self.numel() + weight_neigh.numel() + bias.numel();
  }
};

// Directed attention entries for GAT/the sampler: both directions of every
// edge plus one self-loop per node. dst is the attending node.
struct AttentionEdges {
  std::vector<std::int32_t> dst;  // attending / destination node i
  std::vector<std::int32_t> src;  // attended / source node j
};

inline AttentionEdges attention_edges(const graphio::Graph& g) {
  AttentionEdges e;
  e.dst.reserve(g.edge_list.size() * 2 + static_cast<std::size_t>(g.n_nodes));
  e.src.reserve(e.dst.capacity());
  for (const auto& edge : g.edge_list) {
    e.dst.push_back(edge.u);
    e.src.push_back(edge.v);
    e.dst.push_back(edge.v);
    e.src.push_back(edge.u);
  }
  for (std::int32_t i = 0; i < g.n_nodes; ++i) {
    e.dst.push_back(i);
    e.src.push_back(i);
  }
  return e;
}

// GAT layer. Scores use the standard separable form
//   e_ij = leaky_relu(a_src . W h_j + a_dst . W h_i)
// softmaxed over each destination's neighborhood including its self-loop.
// Hidden layers concatenate heads, the output layer averages them.
template <class S>
struct GatLayerT {
  std::size_t heads = 1;
  std::size_t head_dim = 0;
  double leaky_slope = 0.2;
  bool concat_heads = true;
  TensorT<S> weight;    // [D_in x heads*head_dim]
  TensorT<S> attn_src;  // [heads x head_dim]
  TensorT<S> attn_dst;  // [heads x head_dim]

  GatLayerT() = default;
  GatLayerT(std::size_t d_in, std::size_t n_heads, std::size_t d_head, bool concat, Rng& rng)
      : heads(n_heads), head_dim(d_head), concat_heads(concat) {
    weight = TensorT<S>::glorot(d_in, n_heads * d_head, rng, true);
    attn_src = TensorT<S>::glorot(n_heads, d_head, rng, true);
    attn_dst = TensorT<S>::glorot(n_heads, d_head, rng, true);
  }

  TensorT<S> forward(const AttentionEdges& edges, std::size_t n_nodes, const TensorT<S>& h) const {
    auto proj = numkit::matmul(h, weight);  // [N x heads*head_dim]
    TensorT<S> out;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto ph = numkit::slice_cols(proj, hd * head_dim, head_dim);  // [N x head_dim]
      auto a_s = numkit::gather_rows(attn_src, {static_cast<std::int32_t>(hd)});  // [1 x head_dim]
      auto a_d = numkit::gather_rows(attn_dst, {static_cast<std::int32_t>(hd)});
      auto s_src = numkit::matmul_nt(ph, a_s);  // [N x 1]
      auto s_dst = numkit::matmul_nt(ph, a_d);
      auto scores = numkit::leaky_relu(
          numkit::add(numkit::gather_rows(s_src, edges.src), numkit::gather_rows(s_dst, edges.dst)),
          leaky_slope);                                                   // [E]
      auto alpha = numkit::segment_softmax(scores, edges.dst, n_nodes);   // [E]
      auto messages = numkit::scale_rows(numkit::gather_rows(ph, edges.src), alpha);
      auto head_out = numkit::scatter_add_rows(messages, edges.dst, n_nodes);  // [N x head_dim]
      if (hd == 0)
        out = head_out;
      else
        out = concat_heads ? numkit::concat_cols(out, head_out) : numkit::add(out, head_out);
    }
    if (!concat_heads && heads > 1) out = numkit::scale(out, 1.0 / static_cast<double>(heads));
    return out;
  }

  std::vector<TensorT<S>> params() { return {weight, attn_src, attn_dst}; }
  std::vector<std::pair<std::string, TensorT<S>>> named_params(const std::string& p) {
    return {{p + ".weight", weight}, {p + ".attn_src", attn_src}, {p + ".attn_dst", attn_dst}};
  }
  std::size_t count_params() const {
    return weight.numel() + attn_src.numel() + attn_dst.numel();
  }
};

using GcnLayer = GcnLayerT<float>;
using SageLayer = SageLayerT<float>;
using GatLayer = GatLayerT<float>;

}  // namespace kdst::teachers
