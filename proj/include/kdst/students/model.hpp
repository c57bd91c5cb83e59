#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kdst/common.hpp"
#include "kdst/numkit/checkpoint.hpp"
#include "kdst/students/layers.hpp"

namespace kdst::students {

enum class StudentKind { kFrKanPlus, kFrKan, kSplineKan, kMlp };

inline const char* student_kind_name(StudentKind k) {
  switch (k) {
    case StudentKind::kFrKanPlus: return "frkan_plus";
    case StudentKind::kFrKan: return "frkan";
    case StudentKind::kSplineKan: return "spline_kan";
    case StudentKind::kMlp: return "mlp";
  }
  return "?";
}

inline StudentKind parse_student_kind(const std::string& s) {
  if (s == "frkan_plus" || s == "frkan+") return StudentKind::kFrKanPlus;
  if (s == "frkan") return StudentKind::kFrKan;
  if (s == "spline_kan" || s == "kan") return StudentKind::kSplineKan;
  if (s == "mlp") return StudentKind::kMlp;
  throw ConfigError("unknown student: " + s + " (frkan_plus|frkan|spline_kan|mlp)");
}

struct StudentConfig {
  StudentKind kind = StudentKind::kFrKanPlus;
  std::vector<std::size_t> hidden;  // empty: single layer straight to logits
  std::size_t grid_size = 1;
  bool standardize = false;  // per-feature train-set standardization
};

// Feature-to-logit student: an ordered stack of layers with no graph access.
// MLP stacks interleave ReLU; KAN stacks are plain compositions.
template <class S>
struct StudentModelT {
  using Layer =
      std::variant<FrKanPlusLayerT<S>, FrKanLayerT<S>, SplineKanLayerT<S>, LinearLayerT<S>>;

  StudentConfig config;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<Layer> layers;
  // Standardization constants (identity when disabled); not trainable.
  TensorT<S> feat_shift;  // [D], negated mean
  TensorT<S> feat_scale;  // [D], 1/std

  StudentModelT() = default;

  StudentModelT(StudentConfig cfg, std::size_t d, std::size_t k, Rng& rng)
      : config(std::move(cfg)), in_dim(d), out_dim(k) {
    std::vector<std::size_t> dims{d};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(k);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::size_t d_in = dims[l];
      const std::size_t d_out = dims[l + 1];
      switch (config.kind) {
        case StudentKind::kFrKanPlus:
          layers.emplace_back(FrKanPlusLayerT<S>(d_in, d_out, config.grid_size, rng));
          break;
        case StudentKind::kFrKan:
          layers.emplace_back(FrKanLayerT<S>(d_in, d_out, config.grid_size, rng));
          break;
        case StudentKind::kSplineKan:
          layers.emplace_back(SplineKanLayerT<S>(d_in, d_out, rng));
          break;
        case StudentKind::kMlp:
          layers.emplace_back(LinearLayerT<S>(d_in, d_out, rng));
          break;
      }
    }
    feat_shift = TensorT<S>::zeros({d});
    feat_scale = TensorT<S>::full({d}, S(1));
  }

  // Train-set mean/std; inference uses the same constants everywhere.
  void fit_standardizer(const TensorT<S>& x, const std::vector<std::int32_t>& train_idx) {
    if (!config.standardize) return;
    const std::size_t d = x.cols();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto i : train_idx)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(static_cast<std::size_t>(i), j);
    for (auto& m : mean) m /= static_cast<double>(train_idx.size());
    for (const auto i : train_idx)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x.at(static_cast<std::size_t>(i), j) - mean[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(train_idx.size()) + 1e-8);
      feat_shift.values()[j] = static_cast<S>(-mean[j]);
      feat_scale.values()[j] = static_cast<S>(1.0 / sd);
    }
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    TensorT<S> h = x;
    if (config.standardize)
      h = numkit::mul_rowvec(numkit::add_rowvec(h, feat_shift), feat_scale);
    const bool is_mlp = config.kind == StudentKind::kMlp;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      h = std::visit([&](const auto& layer) { return layer.forward(h); }, layers[l]);
      if (is_mlp && l + 1 < layers.size()) h = numkit::relu(h);
    }
    return h;
  }

  // Representation fed to the last layer ([B x hidden]), or the logits for a
  // single-layer model; what the embedding exporter dumps.
  TensorT<S> last_hidden(const TensorT<S>& x) const {
    TensorT<S> h = x;
    if (config.standardize)
      h = numkit::mul_rowvec(numkit::add_rowvec(h, feat_shift), feat_scale);
    const bool is_mlp = config.kind == StudentKind::kMlp;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      h = std::visit([&](const auto& layer) { return layer.forward(h); }, layers[l]);
      if (is_mlp) h = numkit::relu(h);
    }
    if (layers.size() == 1)
      h = std::visit([&](const auto& layer) { return layer.forward(h); }, layers[0]);
    return h;
  }

  std::size_t count_params() const {
    std::size_t total = 0;
    for (const auto& layer : layers)
      total += std::visit([](const auto& l) { return l.count_params(); }, layer);
    return total;
  }

  std::vector<TensorT<S>> params() {
    std::vector<TensorT<S>> out;
    for (auto& layer : layers) {
      auto p = std::visit([](auto& l) { return l.params(); }, layer);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  std::vector<std::pair<std::string, TensorT<S>>> named_params() {
    std::vector<std::pair<std::string, TensorT<S>>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto p = std::visit(
          [&](auto& layer) { return layer.named_params("layers." + std::to_string(l)); },
          layers[l]);
      out.insert(out.end(), p.begin(), p.end());
    }
    out.emplace_back("standardize.shift", feat_shift);
    out.emplace_back("standardize.scale", feat_scale);
    return out;
  }
};

using StudentModel = StudentModelT<float>;

inline nlohmann::json student_arch_json(const StudentConfig& cfg, std::size_t in_dim,
                                        std::size_t out_dim) {
  return {{"kind", student_kind_name(cfg.kind)},
          {"hidden", cfg.hidden},
          {"grid_size", cfg.grid_size},
          {"standardize", cfg.standardize},
          {"in_dim", in_dim},
          {"out_dim", out_dim}};
}

inline StudentConfig student_config_from_json(const nlohmann::json& j) {
  StudentConfig cfg;
  cfg.kind = parse_student_kind(j.at("kind").get<std::string>());
  cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  cfg.grid_size = j.at("grid_size").get<std::size_t>();
  cfg.standardize = j.at("standardize").get<bool>();
  return cfg;
}

// Checkpoint + JSON sidecar.
inline void save_student(StudentModel& model, const std::string& ckpt_path) {
  std::vector<numkit::NamedParam> params;
  for (auto& [name, tensor] : model.named_params()) params.push_back({name, tensor});
  numkit::save_checkpoint(ckpt_path, params);
  std::ofstream os(ckpt_path + ".json");
  os << student_arch_json(model.config, model.in_dim, model.out_dim).dump(2) << "\n";
  if (!os) throw IoError("save_student: cannot write sidecar for " + ckpt_path);
}

inline StudentModel load_student(const std::string& ckpt_path) {
  std::ifstream is(ckpt_path + ".json");
  if (!is) throw IoError("load_student: missing sidecar " + ckpt_path + ".json");
  nlohmann::json j;
  is >> j;
  Rng rng(0);
  StudentModel model(student_config_from_json(j), j.at("in_dim").get<std::size_t>(),
                     j.at("out_dim").get<std::size_t>(), rng);
  auto loaded = numkit::load_checkpoint(ckpt_path);
  std::vector<numkit::NamedParam> params;
  for (auto& [name, tensor] : model.named_params()) params.push_back({name, tensor});
  numkit::restore_params(params, loaded);
  return model;
}

}  // namespace kdst::students
