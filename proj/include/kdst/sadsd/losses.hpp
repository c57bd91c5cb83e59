#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/numkit/tensor.hpp"
#include "kdst/sadsd/sampler.hpp"

namespace kdst::sadsd {

using numkit::TensorT;

// Mean cross-entropy of the student's logits against the labels over the
// training indices.
template <class S>
TensorT<S> ce_loss(const TensorT<S>& student_logits, const std::vector<std::int32_t>& labels,
                   const std::vector<std::int32_t>& train_idx) {
  if (train_idx.empty()) throw ConfigError("ce_loss: empty training split");
  std::vector<std::int32_t> subset;
  subset.reserve(train_idx.size());
  for (const auto i : train_idx) subset.push_back(labels[static_cast<std::size_t>(i)]);
  return numkit::nll(numkit::gather_rows(numkit::log_softmax_rows(student_logits), train_idx),
                     subset);
}

// Per-node softened teacher constants: probabilities at temperature tau and
// the row-wise sum p log p, both treated as constants by the graph.
template <class S>
struct SoftTeacher {
  TensorT<S> probs;     // [N x K] = softmax(logits / tau)
  TensorT<S> plogp;     // [N] = sum_c p log p
  double tau = 1.0;
};

template <class S>
SoftTeacher<S> soften_teacher(const TensorT<S>& teacher_logits, double tau) {
  if (tau <= 0.0) throw ConfigError("soften_teacher: tau must be positive");
  SoftTeacher<S> t;
  t.tau = tau;
  auto logp = numkit::log_softmax_rows(numkit::scale(teacher_logits.detach(), 1.0 / tau));
  t.probs = numkit::exp_(logp).detach();
  const std::size_t n = t.probs.rows(), k = t.probs.cols();
  std::vector<S> plogp(n, S(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) plogp[i] += t.probs.at(i, c) * logp.at(i, c);
  t.plogp = TensorT<S>::from_data({n}, std::move(plogp));
  return t;
}

// KL(teacher || student) per selected node, at temperature tau:
// sum_c pt_c (log pt_c - log ps_c). Gradient reaches only the student.
template <class S>
TensorT<S> kl_per_node(const SoftTeacher<S>& teacher, const TensorT<S>& student_logits,
                       const std::vector<std::int32_t>& node_idx) {
  auto student_logp = numkit::log_softmax_rows(numkit::scale(student_logits, 1.0 / teacher.tau));
  auto cross = numkit::rowsum(numkit::mul(numkit::gather_rows(teacher.probs, node_idx),
                                          numkit::gather_rows(student_logp, node_idx)));
  return numkit::sub(numkit::gather_rows(teacher.plogp, node_idx), cross);
}

// Distillation loss over a sampled edge set: tau^2 times the mean KL between
// softened teacher and student distributions at the source endpoint of each
// sampled edge (optionally both endpoints averaged). Empty sample sets yield
// zero and bump the warning counter instead of failing the epoch.
template <class S>
TensorT<S> distill_loss(const SoftTeacher<S>& teacher, const TensorT<S>& student_logits,
                        const SamplerEdges& edges, const std::vector<std::int32_t>& sampled,
                        bool both_endpoints = false, std::size_t* empty_warnings = nullptr) {
  if (sampled.empty()) {
    if (empty_warnings) ++*empty_warnings;
    return TensorT<S>::scalar(S(0));
  }
  std::vector<std::int32_t> nodes;
  nodes.reserve(sampled.size() * (both_endpoints ? 2 : 1));
  for (const auto m : sampled) nodes.push_back(edges.edge_u[static_cast<std::size_t>(m)]);
  if (both_endpoints)
    for (const auto m : sampled) nodes.push_back(edges.edge_v[static_cast<std::size_t>(m)]);
  auto kl = kl_per_node(teacher, student_logits, nodes);
  return numkit::scale(numkit::mean(kl), teacher.tau * teacher.tau);
}

// The distillation term actually optimized: a self-normalized p-weighted
// mean of the per-edge KL, so the sampler (beta, W_Q, W_K) receives gradient
// through the live probabilities while the Bernoulli draw itself stays a
// non-differentiable mask. Coincides with distill_loss whenever the sampled
// probabilities are uniform.
template <class S>
TensorT<S> weighted_distill_loss(const SoftTeacher<S>& teacher, const TensorT<S>& student_logits,
                                 const SamplerEdges& edges, const TensorT<S>& probs,
                                 const std::vector<std::int32_t>& sampled,
                                 bool both_endpoints = false,
                                 std::size_t* empty_warnings = nullptr) {
  if (sampled.empty()) {
    if (empty_warnings) ++*empty_warnings;
    return TensorT<S>::scalar(S(0));
  }
  std::vector<std::int32_t> nodes;
  nodes.reserve(sampled.size());
  for (const auto m : sampled) nodes.push_back(edges.edge_u[static_cast<std::size_t>(m)]);
  auto kl = kl_per_node(teacher, student_logits, nodes);
  if (both_endpoints) {
    std::vector<std::int32_t> other;
    other.reserve(sampled.size());
    for (const auto m : sampled) other.push_back(edges.edge_v[static_cast<std::size_t>(m)]);
    kl = numkit::scale(numkit::add(kl, kl_per_node(teacher, student_logits, other)), 0.5);
  }
  auto p_sel = numkit::gather_rows(probs, sampled);
  auto weighted = numkit::div(numkit::sum(numkit::mul(p_sel, kl)), numkit::sum(p_sel));
  return numkit::scale(weighted, teacher.tau * teacher.tau);
}

// L_total = lambda * CE + (1 - lambda) * KD.
template <class S>
TensorT<S> total_loss(const TensorT<S>& ce, const TensorT<S>& kd, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("total_loss: lambda outside [0, 1]");
  return numkit::add(numkit::scale(ce, lambda), numkit::scale(kd, 1.0 - lambda));
}

}  // namespace kdst::sadsd
