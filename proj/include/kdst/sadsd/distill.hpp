#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/graphio/split.hpp"
#include "kdst/numkit/adam.hpp"
#include "kdst/sadsd/losses.hpp"
#include "kdst/sadsd/sampler.hpp"
#include "kdst/students/model.hpp"
#include "kdst/teachers/train.hpp"

namespace kdst::sadsd {

using graphio::Graph;
using graphio::Mode;
using graphio::Split;
using numkit::Tensor;
using students::StudentConfig;
using students::StudentModel;
using teachers::TeacherOutput;

struct DistillConfig {
  double tau = 2.0;
  double lambda = 0.3;
  double weight_true = 1.2;
  double weight_false = 0.8;
  double prob_floor = 0.05;
  double prob_ceil = 0.95;
  std::size_t attn_dim = 64;  // H
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 300;
  int patience = 50;
  bool kd_both_endpoints = false;  // average KL over both endpoints of a sampled edge
  bool train_sampler = true;       // backprop into beta, W_Q, W_K

  void validate() const {
    if (tau <= 0.0) throw ConfigError("distill: tau must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("distill: lambda outside [0, 1]");
    if (!(weight_true >= 1.0 && 1.0 >= weight_false && weight_false > 0.0))
      throw ConfigError("distill: expected weight_true >= 1 >= weight_false > 0");
    if (!(prob_floor > 0.0 && prob_ceil < 1.0 && prob_floor < prob_ceil))
      throw ConfigError("distill: clamp bounds must satisfy 0 < floor < ceil < 1");
    if (max_epochs <= 0) throw ConfigError("distill: max_epochs must be positive");
  }
};

struct EpochRecord {
  int epoch = 0;
  double ce = 0.0;
  double kd = 0.0;
  double total = 0.0;
  std::size_t n_sampled = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;  // transductive: test set; inductive: obs set
};

struct DistillResult {
  StudentModel student;
  AttentionSampler sampler;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  int epochs_run = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double obs_acc = 0.0;
  double ind_acc = 0.0;
  double epoch_ms_mean = 0.0;
  std::size_t empty_sample_warnings = 0;
  double min_prob_seen = 1.0;
  double max_prob_seen = 0.0;
};

// One SA-DSD distillation run. Per epoch: project Q/K/V, compute sparse
// attention and edge sampling probabilities, reweight them by the current
// teacher/student prediction agreement, draw the edge set, and minimize
// lambda * CE + (1 - lambda) * KD. The teacher is frozen throughout; the
// student and (for lambda < 1) the sampler train jointly. Early stopping
// restores the best-validation student.
//
// teacher_out must hold logits for every node of the training-visible graph
// (the observed subgraph in inductive mode).
inline DistillResult distill_train(const Graph& g_full, const Split& split,
                                   const TeacherOutput& teacher_out, const StudentConfig& scfg,
                                   const DistillConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (split.train_idx.empty()) throw ConfigError("distill: empty training split");
  const bool inductive = split.mode == Mode::kInductive;
  const Graph g_view = inductive ? graphio::observed_view(g_full, split) : Graph{};
  const Graph& g = inductive ? g_view : g_full;
  if (teacher_out.logits.rows() != static_cast<std::size_t>(g.n_nodes))
    throw ShapeError("distill: teacher logits row count does not match the training graph");

  const bool vanilla = cfg.lambda == 1.0;  // plain supervised student, no sampler
  numkit::Rng rng(seed);
  StudentModel student(scfg, static_cast<std::size_t>(g.n_feats),
                       static_cast<std::size_t>(g.n_classes), rng);
  student.fit_standardizer(g.features, split.train_idx);
  AttentionSampler sampler(static_cast<std::size_t>(g.n_feats), cfg.attn_dim, rng);

  auto params = student.params();
  if (!vanilla && cfg.train_sampler) {
    auto sp = sampler.trainable_params();
    params.insert(params.end(), sp.begin(), sp.end());
  }
  numkit::AdamState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const auto edges = build_sampler_edges(g);
  const auto teacher = soften_teacher<float>(teacher_out.logits, cfg.tau);

  DistillResult res;
  double best_val = -1.0;
  std::vector<std::vector<float>> best_params;
  int since_best = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    numkit::zero_grads(params);
    auto logits = student.forward(g.features);
    auto pred = numkit::argmax_rows(logits);

    auto ce = ce_loss(logits, g.labels, split.train_idx);
    Tensor kd = Tensor::scalar(0.0f);
    std::size_t n_sampled = 0;
    if (!vanilla) {
      auto [q, k, v] = sampler.qkv_project(g.features);
      (void)v;  // defined by the projection interface, unused by the loss
      auto alpha = attention_weights(q, k, edges);
      auto probs = edge_sampling_probs(alpha, sampler.log_beta, edges, cfg.prob_floor,
                                       cfg.prob_ceil);
      probs = consistency_reweight(probs, teacher_out.argmax, pred, edges, cfg.weight_true,
                                   cfg.weight_false, cfg.prob_floor, cfg.prob_ceil);
      for (std::size_t m = 0; m < probs.numel(); ++m) {
        const double p = probs.at(m);
        if (p < cfg.prob_floor - 1e-6 || p > cfg.prob_ceil + 1e-6)
          throw NumericError("distill: sampling probability escaped clamp bounds at epoch " +
                             std::to_string(epoch));
        res.min_prob_seen = std::min(res.min_prob_seen, p);
        res.max_prob_seen = std::max(res.max_prob_seen, p);
      }
      auto sampled = sample_edges(probs, rng);
      n_sampled = sampled.size();
      kd = weighted_distill_loss(teacher, logits, edges, probs, sampled, cfg.kd_both_endpoints,
                                 &res.empty_sample_warnings);
    }
    auto total = total_loss(ce, kd, cfg.lambda);
    if (!std::isfinite(total.item()))
      throw NumericError("distill: loss diverged at epoch " + std::to_string(epoch));
    numkit::backward(total);
    numkit::adam_step(params, opt);

    // Students carry no dropout: the training forward doubles as evaluation.
    const double train_acc = numkit::accuracy(pred, g.labels, split.train_idx);
    const double val_acc = numkit::accuracy(pred, g.labels, split.val_idx);
    const double test_acc =
        numkit::accuracy(pred, g.labels, inductive ? split.obs_idx : split.test_idx);
    res.history.push_back({epoch, static_cast<double>(ce.item()), static_cast<double>(kd.item()),
                           static_cast<double>(total.item()), n_sampled, train_acc, val_acc,
                           test_acc});
    res.epochs_run = epoch + 1;
    if (val_acc > best_val) {
      best_val = val_acc;
      res.best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      for (auto& p : params) best_params.push_back(p.values());
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  const auto t_end = std::chrono::steady_clock::now();
  res.epoch_ms_mean =
      std::chrono::duration<double, std::milli>(t_end - t_start).count() / res.epochs_run;

  for (std::size_t p = 0; p < params.size(); ++p) params[p].values() = best_params[p];

  auto logits = student.forward(g.features);
  auto pred = numkit::argmax_rows(logits);
  res.train_acc = numkit::accuracy(pred, g.labels, split.train_idx);
  res.val_acc = numkit::accuracy(pred, g.labels, split.val_idx);
  if (inductive) {
    res.obs_acc = numkit::accuracy(pred, g.labels, split.obs_idx);
    // The student is graph-free: unseen nodes are scored from features alone.
    auto full_pred = numkit::argmax_rows(student.forward(g_full.features));
    res.ind_acc = numkit::accuracy(full_pred, g_full.labels, split.ind_idx);
  } else {
    res.test_acc = numkit::accuracy(pred, g.labels, split.test_idx);
  }
  res.student = student;
  res.sampler = sampler;
  return res;
}

}  // namespace kdst::sadsd
