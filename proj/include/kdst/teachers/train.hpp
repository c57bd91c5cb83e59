#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/graphio/split.hpp"
#include "kdst/numkit/adam.hpp"
#include "kdst/teachers/model.hpp"

namespace kdst::teachers {

using graphio::Graph;
using graphio::Mode;
using graphio::Split;
using numkit::Tensor;

struct TeacherOutput {
  Tensor logits;    // [N x K] on the graph visible during distillation
  Tensor softened;  // softmax(logits / tau)
  std::vector<std::int32_t> argmax;
};

inline TeacherOutput make_teacher_output(const Tensor& logits, double tau) {
  TeacherOutput out;
  out.logits = logits.detach();
  out.softened = numkit::softmax_rows(numkit::scale(out.logits, 1.0 / tau)).detach();
  out.argmax = numkit::argmax_rows(out.logits);
  return out;
}

struct TeacherTrainResult {
  TeacherModel model;
  TeacherOutput output;  // computed on the training-visible graph
  int best_epoch = 0;
  int epochs_run = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;  // transductive only
  double obs_acc = 0.0;   // inductive only
  double ind_acc = 0.0;   // inductive only, full-graph inference
  double epoch_ms_mean = 0.0;
};

// Supervised full-batch training with early stopping on validation accuracy;
// the checkpoint with the best validation accuracy is restored before any
// reported metric or teacher output is computed. Inductive runs never touch
// ind nodes' edges until the single full-graph inference at the end.
inline TeacherTrainResult train_teacher(const Graph& g_full, const Split& split, TeacherArch arch,
                                        const TeacherHyper& hyper, double tau, std::uint64_t seed) {
  const bool inductive = split.mode == Mode::kInductive;
  const Graph g_train = inductive ? graphio::observed_view(g_full, split) : Graph{};
  const Graph& g = inductive ? g_train : g_full;

  auto ctx = make_context<float>(g);
  numkit::Rng rng(seed);
  TeacherModel model(arch, hyper, static_cast<std::size_t>(g.n_feats),
                     static_cast<std::size_t>(g.n_classes), rng);
  auto params = model.params();
  numkit::AdamState opt;
  opt.lr = hyper.lr;
  opt.weight_decay = hyper.weight_decay;

  std::vector<std::int32_t> train_labels;
  for (const auto i : split.train_idx) train_labels.push_back(g.labels[static_cast<std::size_t>(i)]);

  TeacherTrainResult res;
  double best_val = -1.0;
  std::vector<std::vector<float>> best_params;
  int since_best = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    numkit::zero_grads(params);
    auto logits = model.forward(ctx, g.features, /*training=*/true, rng);
    auto ce = numkit::nll(numkit::gather_rows(numkit::log_softmax_rows(logits), split.train_idx),
                          train_labels);
    if (!std::isfinite(ce.item()))
      throw NumericError("train_teacher: loss diverged at epoch " + std::to_string(epoch));
    numkit::backward(ce);
    numkit::adam_step(params, opt);

    numkit::Rng eval_rng(0);  // never consulted: dropout off outside training
    auto eval_logits = model.forward(ctx, g.features, /*training=*/false, eval_rng);
    auto pred = numkit::argmax_rows(eval_logits);
    const double val_acc = numkit::accuracy(pred, g.labels, split.val_idx);
    res.epochs_run = epoch + 1;
    if (val_acc > best_val) {
      best_val = val_acc;
      res.best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      for (auto& p : params) best_params.push_back(p.values());
    } else if (++since_best >= hyper.patience) {
      break;
    }
  }
  const auto t_end = std::chrono::steady_clock::now();
  res.epoch_ms_mean =
      std::chrono::duration<double, std::milli>(t_end - t_start).count() / res.epochs_run;

  for (std::size_t p = 0; p < params.size(); ++p) params[p].values() = best_params[p];

  numkit::Rng eval_rng(0);
  auto logits = model.forward(ctx, g.features, /*training=*/false, eval_rng);
  res.output = make_teacher_output(logits, tau);
  res.model = model;
  res.train_acc = numkit::accuracy(res.output.argmax, g.labels, split.train_idx);
  res.val_acc = numkit::accuracy(res.output.argmax, g.labels, split.val_idx);
  if (inductive) {
    res.obs_acc = numkit::accuracy(res.output.argmax, g.labels, split.obs_idx);
    // Unseen nodes and their edges participate only in this final inference.
    auto full_ctx = make_context<float>(g_full);
    auto full_logits = model.forward(full_ctx, g_full.features, /*training=*/false, eval_rng);
    res.ind_acc = numkit::accuracy(numkit::argmax_rows(full_logits), g_full.labels, split.ind_idx);
  } else {
    res.test_acc = numkit::accuracy(res.output.argmax, g.labels, split.test_idx);
  }
  return res;
}

}  // namespace kdst::teachers
