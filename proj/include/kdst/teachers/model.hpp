#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kdst/common.hpp"
#include "kdst/graphio/graph.hpp"
#include "kdst/numkit/checkpoint.hpp"
#include "kdst/teachers/layers.hpp"

namespace kdst::teachers {

enum class TeacherArch { kGcn, kSage, kGat };

inline const char* teacher_arch_name(TeacherArch a) {
  switch (a) {
    case TeacherArch::kGcn: return "gcn";
    case TeacherArch::kSage: return "sage";
    case TeacherArch::kGat: return "gat";
  }
  return "?";
}

inline TeacherArch parse_teacher_arch(const std::string& s) {
  if (s == "gcn") return TeacherArch::kGcn;
  if (s == "sage" || s == "graphsage") return TeacherArch::kSage;
  if (s == "gat") return TeacherArch::kGat;
  throw ConfigError("unknown teacher: " + s + " (gcn|sage|gat)");
}

struct TeacherHyper {
  std::size_t hidden = 64;     // GCN/SAGE hidden width
  std::size_t heads = 8;       // GAT hidden heads
  std::size_t head_dim = 8;    // GAT per-head width
  double dropout = 0.5;        // on the inputs of each layer, training only
  double leaky_slope = 0.2;
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 300;
  int patience = 50;
};

// Precomputed graph operators shared by every forward pass on one graph.
template <class S>
struct GraphContextT {
  std::size_t n_nodes = 0;
  CsrMatrixT<S> a_hat;      // GCN
  CsrMatrixT<S> mean_op;    // SAGE
  AttentionEdges att_edges; // GAT
};

template <class S>
GraphContextT<S> make_context(const graphio::Graph& g) {
  GraphContextT<S> ctx;
  ctx.n_nodes = static_cast<std::size_t>(g.n_nodes);
  ctx.a_hat = graphio::normalize_adjacency(g).template cast<S>();
  ctx.mean_op = graphio::neighbor_mean_matrix(g).template cast<S>();
  ctx.att_edges = attention_edges(g);
  return ctx;
}

using GraphContext = GraphContextT<float>;

// Two-layer teacher of one of the three architectures.
template <class S>
struct TeacherModelT {
  TeacherArch arch = TeacherArch::kGcn;
  TeacherHyper hyper;
  std::size_t in_dim = 0;
  std::size_t n_classes = 0;
  std::vector<GcnLayerT<S>> gcn;
  std::vector<SageLayerT<S>> sage;
  std::vector<GatLayerT<S>> gat;

  TeacherModelT() = default;

  TeacherModelT(TeacherArch a, TeacherHyper h, std::size_t d, std::size_t k, Rng& rng)
      : arch(a), hyper(std::move(h)), in_dim(d), n_classes(k) {
    switch (arch) {
      case TeacherArch::kGcn:
        gcn.emplace_back(d, hyper.hidden, rng);
        gcn.emplace_back(hyper.hidden, k, rng);
        break;
      case TeacherArch::kSage:
        sage.emplace_back(d, hyper.hidden, rng);
        sage.emplace_back(hyper.hidden, k, rng);
        break;
      case TeacherArch::kGat:
        gat.emplace_back(d, hyper.heads, hyper.head_dim, /*concat=*/true, rng);
        gat.back().leaky_slope = hyper.leaky_slope;
        gat.emplace_back(hyper.heads * hyper.head_dim, std::size_t{1}, k, /*concat=*/false, rng);
        gat.back().leaky_slope = hyper.leaky_slope;
        break;
    }
  }

  TensorT<S> forward(const GraphContextT<S>& ctx, const TensorT<S>& x, bool training,
                     Rng& rng) const {
    auto h = numkit::dropout(x, training ? hyper.dropout : 0.0, rng, training);
    switch (arch) {
      case TeacherArch::kGcn: {
        h = numkit::relu(gcn[0].forward(ctx.a_hat, h));
        h = numkit::dropout(h, hyper.dropout, rng, training);
        return gcn[1].forward(ctx.a_hat, h);
      }
      case TeacherArch::kSage: {
        h = numkit::relu(sage[0].forward(ctx.mean_op, h));
        h = numkit::dropout(h, hyper.dropout, rng, training);
        return sage[1].forward(ctx.mean_op, h);
      }
      case TeacherArch::kGat: {
        h = numkit::relu(gat[0].forward(ctx.att_edges, ctx.n_nodes, h));
        h = numkit::dropout(h, hyper.dropout, rng, training);
        return gat[1].forward(ctx.att_edges, ctx.n_nodes, h);
      }
    }
    throw ConfigError("teacher: bad arch");
  }

  std::vector<TensorT<S>> params() {
    std::vector<TensorT<S>> out;
    for (auto& l : gcn) { auto p = l.params(); out.insert(out.end(), p.begin(), p.end()); }
    for (auto& l : sage) { auto p = l.params(); out.insert(out.end(), p.begin(), p.end()); }
    for (auto& l : gat) { auto p = l.params(); out.insert(out.end(), p.begin(), p.end()); }
    return out;
  }

  std::vector<std::pair<std::string, TensorT<S>>> named_params() {
    std::vector<std::pair<std::string, TensorT<S>>> out;
    const std::string base = teacher_arch_name(arch);
    std::size_t l = 0;
    auto absorb = [&](auto& layers) {
      for (auto& layer : layers) {
        auto p = layer.named_params(base + "." + std::to_string(l++));
        out.insert(out.end(), p.begin(), p.end());
      }
    };
    absorb(gcn);
    absorb(sage);
    absorb(gat);
    return out;
  }

  std::size_t count_params() const {
    std::size_t total = 0;
    for (const auto& l : gcn) total += l.count_params();
    for (const auto& l : sage) total += l.count_params();
    for (const auto& l : gat) total += l.count_params();
    return total;
  }
};

using TeacherModel = TeacherModelT<float>;

inline nlohmann::json teacher_arch_json(const TeacherModel& m) {
  return {{"arch", teacher_arch_name(m.arch)},
          {"in_dim", m.in_dim},
          {"n_classes", m.n_classes},
          {"hidden", m.hyper.hidden},
          {"heads", m.hyper.heads},
          {"head_dim", m.hyper.head_dim},
          {"dropout", m.hyper.dropout},
          {"leaky_slope", m.hyper.leaky_slope}};
}

// Checkpoint + JSON sidecar; `extra` lets callers record seed/accuracy.
inline void save_teacher(TeacherModel& model, const std::string& ckpt_path,
                         const nlohmann::json& extra = {}) {
  std::vector<numkit::NamedParam> params;
  for (auto& [name, tensor] : model.named_params()) params.push_back({name, tensor});
  numkit::save_checkpoint(ckpt_path, params);
  nlohmann::json sidecar = teacher_arch_json(model);
  for (auto it = extra.begin(); it != extra.end(); ++it) sidecar[it.key()] = it.value();
  std::ofstream os(ckpt_path + ".json");
  os << sidecar.dump(2) << "\n";
  if (!os) throw IoError("save_teacher: cannot write sidecar for " + ckpt_path);
}

inline TeacherModel load_teacher(const std::string& ckpt_path) {
  std::ifstream is(ckpt_path + ".json");
  if (!is) throw IoError("load_teacher: missing sidecar " + ckpt_path + ".json");
  nlohmann::json j;
  is >> j;
  TeacherHyper hyper;
  hyper.hidden = j.at("hidden").get<std::size_t>();
  hyper.heads = j.at("heads").get<std::size_t>();
  hyper.head_dim = j.at("head_dim").get<std::size_t>();
  hyper.dropout = j.at("dropout").get<double>();
  hyper.leaky_slope = j.at("leaky_slope").get<double>();
  numkit::Rng rng(0);
  TeacherModel model(parse_teacher_arch(j.at("arch").get<std::string>()), hyper,
                     j.at("in_dim").get<std::size_t>(), j.at("n_classes").get<std::size_t>(), rng);
  auto loaded = numkit::load_checkpoint(ckpt_path);
  std::vector<numkit::NamedParam> params;
  for (auto& [name, tensor] : model.named_params()) params.push_back({name, tensor});
  numkit::restore_params(params, loaded);
  return model;
}

}  // namespace kdst::teachers
