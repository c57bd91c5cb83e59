#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdst/bench/latency.hpp"
#include "kdst/bench/metrics.hpp"
#include "kdst/graphio/graph.hpp"
#include "kdst/graphio/split.hpp"
#include "kdst/graphio/synthetic.hpp"
#include "kdst/sadsd/distill.hpp"
#include "kdst/students/model.hpp"
#include "kdst/teachers/train.hpp"

namespace kdst::bench {

namespace fs = std::filesystem;
using graphio::Graph;
using graphio::Mode;
using graphio::Split;
using sadsd::DistillConfig;
using students::StudentConfig;
using teachers::TeacherArch;
using teachers::TeacherHyper;

// Everything a CLI invocation can configure. Precedence: built-in defaults,
// then --config JSON, then explicit flags.
struct RunConfig {
  std::string dataset_dir;
  Mode mode = Mode::kTransductive;
  std::string teacher_arch = "gcn";
  std::string student_arch = "frkan_plus";
  int n_seeds = 5;
  std::string out_dir = "out";

  int per_class_train = 20;
  int per_class_val = 30;
  double ind_fraction = 0.2;
  bool row_normalize = false;

  DistillConfig distill;
  StudentConfig student;
  TeacherHyper teacher_hyper;

  bool export_logits = false;
  std::string teacher_logits;  // decoupled distillation input (N x K f32)

  std::vector<double> lambda_grid{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::size_t> grid_sizes{1, 2, 4, 8};

  std::string teacher_ckpt;
  std::string student_ckpt;
  bool export_hidden = false;

  std::vector<std::uint64_t> seeds() const {
    if (n_seeds <= 0) throw ConfigError("seeds must be positive");
    std::vector<std::uint64_t> s(static_cast<std::size_t>(n_seeds));
    for (int i = 0; i < n_seeds; ++i) s[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
    return s;
  }
};

inline int worker_threads() {
  if (const char* env = std::getenv("KDST_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
  return {{"dataset", cfg.dataset_dir},
          {"mode", graphio::mode_name(cfg.mode)},
          {"teacher", cfg.teacher_arch},
          {"student", cfg.student_arch},
          {"seeds", cfg.n_seeds},
          {"out", cfg.out_dir},
          {"per_class_train", cfg.per_class_train},
          {"per_class_val", cfg.per_class_val},
          {"ind_fraction", cfg.ind_fraction},
          {"row_normalize", cfg.row_normalize},
          {"lambda", cfg.distill.lambda},
          {"tau", cfg.distill.tau},
          {"weight_true", cfg.distill.weight_true},
          {"weight_false", cfg.distill.weight_false},
          {"prob_floor", cfg.distill.prob_floor},
          {"prob_ceil", cfg.distill.prob_ceil},
          {"attn_dim", cfg.distill.attn_dim},
          {"lr", cfg.distill.lr},
          {"weight_decay", cfg.distill.weight_decay},
          {"epochs", cfg.distill.max_epochs},
          {"patience", cfg.distill.patience},
          {"kd_both_endpoints", cfg.distill.kd_both_endpoints},
          {"train_sampler", cfg.distill.train_sampler},
          {"grid_size", cfg.student.grid_size},
          {"hidden", cfg.student.hidden},
          {"standardize", cfg.student.standardize},
          {"lambda_grid", cfg.lambda_grid},
          {"grid_sizes", cfg.grid_sizes},
          {"export_logits", cfg.export_logits},
          {"teacher_logits", cfg.teacher_logits}};
}

// Merge a JSON config file under the current values (flags still win: the
// CLI applies them after this).
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  const auto j = read_json(path);
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dataset", cfg.dataset_dir);
  if (j.contains("mode")) cfg.mode = graphio::parse_mode(j.at("mode").get<std::string>());
  get("teacher", cfg.teacher_arch);
  get("student", cfg.student_arch);
  get("seeds", cfg.n_seeds);
  get("out", cfg.out_dir);
  get("per_class_train", cfg.per_class_train);
  get("per_class_val", cfg.per_class_val);
  get("ind_fraction", cfg.ind_fraction);
  get("row_normalize", cfg.row_normalize);
  get("lambda", cfg.distill.lambda);
  get("tau", cfg.distill.tau);
  get("weight_true", cfg.distill.weight_true);
  get("weight_false", cfg.distill.weight_false);
  get("prob_floor", cfg.distill.prob_floor);
  get("prob_ceil", cfg.distill.prob_ceil);
  get("attn_dim", cfg.distill.attn_dim);
  get("lr", cfg.distill.lr);
  get("weight_decay", cfg.distill.weight_decay);
  get("epochs", cfg.distill.max_epochs);
  get("patience", cfg.distill.patience);
  get("kd_both_endpoints", cfg.distill.kd_both_endpoints);
  get("train_sampler", cfg.distill.train_sampler);
  get("grid_size", cfg.student.grid_size);
  get("hidden", cfg.student.hidden);
  get("standardize", cfg.student.standardize);
  get("lambda_grid", cfg.lambda_grid);
  get("grid_sizes", cfg.grid_sizes);
  get("export_logits", cfg.export_logits);
  get("teacher_logits", cfg.teacher_logits);
  get("teacher_ckpt", cfg.teacher_ckpt);
  get("student_ckpt", cfg.student_ckpt);
  get("export_hidden", cfg.export_hidden);
}

inline Graph load_dataset(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty()) throw ConfigError("--dataset is required");
  auto g = graphio::load_graph(cfg.dataset_dir);
  if (cfg.row_normalize) graphio::row_l1_normalize(g.features);
  return g;
}

inline Split make_split(const Graph& g, const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.mode == Mode::kInductive)
    return graphio::make_inductive_split(g, seed, cfg.per_class_train, cfg.per_class_val,
                                         cfg.ind_fraction);
  return graphio::make_transductive_split(g, seed, cfg.per_class_train, cfg.per_class_val);
}

inline StudentConfig student_config(const RunConfig& cfg) {
  StudentConfig s = cfg.student;
  s.kind = students::parse_student_kind(cfg.student_arch);
  // The MLP baseline is two-layer by convention unless widths were given.
  if (s.kind == students::StudentKind::kMlp && s.hidden.empty()) s.hidden = {64};
  return s;
}

// Runs one job per seed, fanned out over at most KDST_THREADS workers; the
// fold back into seed order keeps every output deterministic.
template <class Job>
auto run_per_seed(const std::vector<std::uint64_t>& seeds, Job job)
    -> std::vector<decltype(job(std::uint64_t{}))> {
  using Result = decltype(job(std::uint64_t{}));
  const int threads = worker_threads();
  std::vector<Result> results(seeds.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) results[i] = job(seeds[i]);
    return results;
  }
  std::size_t next = 0;
  while (next < seeds.size()) {
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                    seeds.size() - next);
    std::vector<std::future<Result>> futs;
    for (std::size_t b = 0; b < batch; ++b)
      futs.push_back(std::async(std::launch::async, job, seeds[next + b]));
    for (std::size_t b = 0; b < batch; ++b) results[next + b] = futs[b].get();
    next += batch;
  }
  return results;
}

inline void write_logits_binary(const std::string& path, const numkit::Tensor& logits) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(logits.values().data()),
           static_cast<std::streamsize>(logits.numel() * sizeof(float)));
  if (!os) throw IoError("cannot write " + path);
}

inline numkit::Tensor read_logits_binary(const std::string& path, std::size_t rows,
                                         std::size_t cols) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::vector<float> data(rows * cols);
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!is || is.gcount() != static_cast<std::streamsize>(data.size() * sizeof(float)))
    throw IoError("teacher logits file " + path + " does not hold " + std::to_string(rows) + "x" +
                  std::to_string(cols) + " f32 values");
  return numkit::Tensor::from_data({rows, cols}, std::move(data));
}

// ---------------------------------------------------------------------------
// train-teacher
// ---------------------------------------------------------------------------

struct TeacherSeedOutcome {
  std::uint64_t seed = 0;
  teachers::TeacherTrainResult result;
};

struct TeacherRunSummary {
  std::vector<TeacherSeedOutcome> per_seed;
  std::size_t teacher_params = 0;
  double mean_test = 0.0, std_test = 0.0;  // transductive; inductive uses ind
};

inline TeacherRunSummary run_train_teacher(const RunConfig& cfg) {
  auto g = load_dataset(cfg);
  const auto arch = teachers::parse_teacher_arch(cfg.teacher_arch);
  fs::create_directories(cfg.out_dir);
  write_json((fs::path(cfg.out_dir) / "effective_config.json").string(), run_config_json(cfg));

  auto outcomes = run_per_seed(cfg.seeds(), [&](std::uint64_t seed) {
    auto split = make_split(g, cfg, seed);
    TeacherSeedOutcome out;
    out.seed = seed;
    out.result = teachers::train_teacher(g, split, arch, cfg.teacher_hyper, cfg.distill.tau, seed);
    return out;
  });

  const bool inductive = cfg.mode == Mode::kInductive;
  std::vector<double> train, val, test, obs, ind, epoch_ms;
  for (auto& o : outcomes) {
    auto& r = o.result;
    train.push_back(r.train_acc);
    val.push_back(r.val_acc);
    epoch_ms.push_back(r.epoch_ms_mean);
    if (inductive) {
      obs.push_back(r.obs_acc);
      ind.push_back(r.ind_acc);
    } else {
      test.push_back(r.test_acc);
    }
    const auto tag = "teacher_seed" + std::to_string(o.seed);
    nlohmann::json extra{{"seed", o.seed},
                         {"val_acc", r.val_acc},
                         {"test_acc", inductive ? r.ind_acc : r.test_acc},
                         {"best_epoch", r.best_epoch}};
    teachers::save_teacher(r.model, (fs::path(cfg.out_dir) / (tag + ".kdst")).string(), extra);
    if (cfg.export_logits)
      write_logits_binary((fs::path(cfg.out_dir) / (tag + "_logits.bin")).string(),
                          r.output.logits);
  }

  TeacherRunSummary summary;
  summary.per_seed = std::move(outcomes);
  summary.teacher_params = summary.per_seed.front().result.model.count_params();
  const auto& headline = inductive ? ind : test;
  summary.mean_test = mean_of(headline);
  summary.std_test = std_of(headline);

  nlohmann::json per_seed{{"train_acc", train}, {"val_acc", val}};
  nlohmann::json means{{"train_acc", mean_of(train)}, {"val_acc", mean_of(val)}};
  nlohmann::json stds{{"train_acc", std_of(train)}, {"val_acc", std_of(val)}};
  if (inductive) {
    per_seed["obs_acc"] = obs;
    per_seed["ind_acc"] = ind;
    means["obs_acc"] = mean_of(obs);
    means["ind_acc"] = mean_of(ind);
    stds["obs_acc"] = std_of(obs);
    stds["ind_acc"] = std_of(ind);
  } else {
    per_seed["test_acc"] = test;
    means["test_acc"] = mean_of(test);
    stds["test_acc"] = std_of(test);
  }
  nlohmann::json metrics{{"command", "train-teacher"},
                         {"dataset", cfg.dataset_dir},
                         {"mode", graphio::mode_name(cfg.mode)},
                         {"teacher", cfg.teacher_arch},
                         {"seeds", cfg.seeds()},
                         {"per_seed", per_seed},
                         {"mean", means},
                         {"std", stds},
                         {"params", {{"teacher", summary.teacher_params}}},
                         {"timing", {{"epoch_ms_mean", epoch_ms}}}};
  write_json((fs::path(cfg.out_dir) / "metrics.json").string(), metrics);
  return summary;
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

struct DistillSeedOutcome {
  std::uint64_t seed = 0;
  sadsd::DistillResult result;
  double teacher_headline_acc = 0.0;  // test (transductive) or ind (inductive)
};

struct DistillRunSummary {
  std::vector<DistillSeedOutcome> per_seed;
  std::size_t teacher_params = 0;  // zero in decoupled (logits-file) mode
  std::size_t student_params = 0;
  double mean_student = 0.0, std_student = 0.0;  // headline accuracy
  double mean_teacher = 0.0;
};

inline DistillRunSummary run_distill(const RunConfig& cfg) {
  auto g = load_dataset(cfg);
  const auto arch = teachers::parse_teacher_arch(cfg.teacher_arch);
  const auto scfg = student_config(cfg);
  const bool inductive = cfg.mode == Mode::kInductive;
  fs::create_directories(cfg.out_dir);
  write_json((fs::path(cfg.out_dir) / "effective_config.json").string(), run_config_json(cfg));

  std::size_t teacher_params = 0;
  auto outcomes = run_per_seed(cfg.seeds(), [&](std::uint64_t seed) {
    auto split = make_split(g, cfg, seed);
    DistillSeedOutcome out;
    out.seed = seed;
    teachers::TeacherOutput teacher_out;
    if (!cfg.teacher_logits.empty()) {
      auto logits = read_logits_binary(cfg.teacher_logits, static_cast<std::size_t>(g.n_nodes),
                                       static_cast<std::size_t>(g.n_classes));
      teacher_out = teachers::make_teacher_output(logits, cfg.distill.tau);
      out.teacher_headline_acc = numkit::accuracy(
          teacher_out.argmax, g.labels, inductive ? split.ind_idx : split.test_idx);
    } else {
      auto tr = teachers::train_teacher(g, split, arch, cfg.teacher_hyper, cfg.distill.tau, seed);
      teacher_out = tr.output;
      out.teacher_headline_acc = inductive ? tr.ind_acc : tr.test_acc;
    }
    out.result = sadsd::distill_train(g, split, teacher_out, scfg, cfg.distill, seed);
    return out;
  });
  if (cfg.teacher_logits.empty()) {
    numkit::Rng tmp(0);
    teachers::TeacherModel probe(arch, cfg.teacher_hyper, static_cast<std::size_t>(g.n_feats),
                                 static_cast<std::size_t>(g.n_classes), tmp);
    teacher_params = probe.count_params();
  }

  std::vector<double> train, val, student_headline, teacher_headline, obs, epoch_ms;
  for (auto& o : outcomes) {
    auto& r = o.result;
    train.push_back(r.train_acc);
    val.push_back(r.val_acc);
    epoch_ms.push_back(r.epoch_ms_mean);
    teacher_headline.push_back(o.teacher_headline_acc);
    if (inductive) {
      obs.push_back(r.obs_acc);
      student_headline.push_back(r.ind_acc);
    } else {
      student_headline.push_back(r.test_acc);
    }
    const auto tag = "student_seed" + std::to_string(o.seed);
    students::save_student(r.student, (fs::path(cfg.out_dir) / (tag + ".kdst")).string());
    std::ofstream hist((fs::path(cfg.out_dir) / ("history_seed" + std::to_string(o.seed) + ".jsonl"))
                           .string());
    for (const auto& rec : r.history) {
      nlohmann::json line{{"epoch", rec.epoch},   {"ce", rec.ce},
                          {"kd", rec.kd},         {"total", rec.total},
                          {"n_sampled", rec.n_sampled}, {"train_acc", rec.train_acc},
                          {"val_acc", rec.val_acc},     {"test_acc", rec.test_acc}};
      hist << line.dump() << "\n";
    }
    if (!hist) throw IoError("cannot write history for seed " + std::to_string(o.seed));
  }

  DistillRunSummary summary;
  summary.per_seed = std::move(outcomes);
  summary.teacher_params = teacher_params;
  summary.student_params = summary.per_seed.front().result.student.count_params();
  summary.mean_student = mean_of(student_headline);
  summary.std_student = std_of(student_headline);
  summary.mean_teacher = mean_of(teacher_headline);

  nlohmann::json per_seed{{"train_acc", train},
                          {"val_acc", val},
                          {"teacher_acc", teacher_headline}};
  nlohmann::json means{{"train_acc", mean_of(train)},
                       {"val_acc", mean_of(val)},
                       {"teacher_acc", mean_of(teacher_headline)}};
  nlohmann::json stds{{"train_acc", std_of(train)},
                      {"val_acc", std_of(val)},
                      {"teacher_acc", std_of(teacher_headline)}};
  const char* headline_key = inductive ? "ind_acc" : "test_acc";
  per_seed[headline_key] = student_headline;
  means[headline_key] = summary.mean_student;
  stds[headline_key] = summary.std_student;
  if (inductive) {
    per_seed["obs_acc"] = obs;
    means["obs_acc"] = mean_of(obs);
    stds["obs_acc"] = std_of(obs);
  }
  const double compression =
      teacher_params == 0
          ? 0.0
          : static_cast<double>(teacher_params) / static_cast<double>(summary.student_params);
  nlohmann::json metrics{{"command", "distill"},
                         {"dataset", cfg.dataset_dir},
                         {"mode", graphio::mode_name(cfg.mode)},
                         {"teacher", cfg.teacher_arch},
                         {"student", cfg.student_arch},
                         {"lambda", cfg.distill.lambda},
                         {"tau", cfg.distill.tau},
                         {"seeds", cfg.seeds()},
                         {"per_seed", per_seed},
                         {"mean", means},
                         {"std", stds},
                         {"params",
                          {{"teacher", teacher_params},
                           {"student", summary.student_params},
                           {"compression_teacher_vs_student", compression}}},
                         {"timing", {{"epoch_ms_mean", epoch_ms}}}};
  write_json((fs::path(cfg.out_dir) / "metrics.json").string(), metrics);
  return summary;
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

struct BenchmarkReport {
  std::size_t teacher_params = 0;
  std::size_t student_params = 0;
  double compression = 0.0;  // teacher / student, not a KRD comparison
  LatencyStats teacher_latency;
  LatencyStats student_latency;
};

inline BenchmarkReport run_benchmark(const RunConfig& cfg) {
  if (cfg.teacher_ckpt.empty() || cfg.student_ckpt.empty())
    throw ConfigError("benchmark needs --teacher-ckpt and --student-ckpt");
  auto g = load_dataset(cfg);
  auto teacher = teachers::load_teacher(cfg.teacher_ckpt);
  auto student = students::load_student(cfg.student_ckpt);
  auto ctx = teachers::make_context<float>(g);

  BenchmarkReport report;
  report.teacher_params = teacher.count_params();
  report.student_params = student.count_params();
  report.compression =
      static_cast<double>(report.teacher_params) / static_cast<double>(report.student_params);
  numkit::Rng rng(0);
  report.teacher_latency =
      measure_latency([&] { teacher.forward(ctx, g.features, false, rng); });
  report.student_latency = measure_latency([&] { student.forward(g.features); });

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    nlohmann::json j{
        {"command", "benchmark"},
        {"dataset", cfg.dataset_dir},
        {"comparison", "teacher_vs_student"},
        {"params",
         {{"teacher", report.teacher_params},
          {"student", report.student_params},
          {"compression_teacher_vs_student", report.compression}}},
        {"latency_ms",
         {{"teacher",
           {{"median", report.teacher_latency.median_ms},
            {"mean", report.teacher_latency.mean_ms},
            {"min", report.teacher_latency.min_ms},
            {"runs", report.teacher_latency.runs}}},
          {"student",
           {{"median", report.student_latency.median_ms},
            {"mean", report.student_latency.mean_ms},
            {"min", report.student_latency.min_ms},
            {"runs", report.student_latency.runs}}}}}};
    write_json((fs::path(cfg.out_dir) / "benchmark.json").string(), j);
  }
  return report;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  double lambda = 0.0;
  std::size_t grid_size = 0;
  double mean_acc = 0.0;
  std::size_t params = 0;
};

inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
  auto g = load_dataset(cfg);
  const auto arch = teachers::parse_teacher_arch(cfg.teacher_arch);
  const bool inductive = cfg.mode == Mode::kInductive;
  fs::create_directories(cfg.out_dir);
  write_json((fs::path(cfg.out_dir) / "effective_config.json").string(), run_config_json(cfg));

  // Teachers depend only on the seed, so each is trained once and shared
  // across the whole (lambda, g) grid.
  struct TeacherPerSeed {
    Split split;
    teachers::TeacherOutput output;
  };
  auto teachers_by_seed = run_per_seed(cfg.seeds(), [&](std::uint64_t seed) {
    TeacherPerSeed t;
    t.split = make_split(g, cfg, seed);
    t.output =
        teachers::train_teacher(g, t.split, arch, cfg.teacher_hyper, cfg.distill.tau, seed).output;
    return t;
  });

  std::vector<SweepRow> rows;
  for (const double lambda : cfg.lambda_grid) {
    for (const std::size_t gs : cfg.grid_sizes) {
      auto scfg = student_config(cfg);
      scfg.grid_size = gs;
      auto dcfg = cfg.distill;
      dcfg.lambda = lambda;
      std::vector<double> accs;
      std::size_t params = 0;
      const auto seeds = cfg.seeds();
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto res = sadsd::distill_train(g, teachers_by_seed[i].split, teachers_by_seed[i].output,
                                        scfg, dcfg, seeds[i]);
        accs.push_back(inductive ? res.ind_acc : res.test_acc);
        params = res.student.count_params();
      }
      rows.push_back({lambda, gs, mean_of(accs), params});
    }
  }

  std::ofstream csv((fs::path(cfg.out_dir) / "results.csv").string());
  csv << "lambda,grid_size,mean_acc,params\n";
  for (const auto& row : rows)
    csv << row.lambda << "," << row.grid_size << "," << row.mean_acc << "," << row.params << "\n";
  if (!csv) throw IoError("cannot write results.csv");
  return rows;
}

// ---------------------------------------------------------------------------
// export-embeddings
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[6] = {'K', 'D', 'S', 'T', 'E', '1'};

// "KDSTE1" + u32 rows + u32 cols + row-major f32 payload.
inline void write_embeddings(const std::string& path, const numkit::Tensor& rep) {
  std::ofstream os(path, std::ios::binary);
  os.write(kEmbeddingMagic, 6);
  const std::uint32_t rows = static_cast<std::uint32_t>(rep.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(rep.cols());
  os.write(reinterpret_cast<const char*>(&rows), 4);
  os.write(reinterpret_cast<const char*>(&cols), 4);
  os.write(reinterpret_cast<const char*>(rep.values().data()),
           static_cast<std::streamsize>(rep.numel() * sizeof(float)));
  if (!os) throw IoError("cannot write " + path);
}

inline numkit::Tensor read_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kEmbeddingMagic, 6) != 0)
    throw IoError("bad embeddings magic in " + path);
  std::uint32_t rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&rows), 4);
  is.read(reinterpret_cast<char*>(&cols), 4);
  std::vector<float> data(static_cast<std::size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!is) throw IoError("truncated embeddings file " + path);
  return numkit::Tensor::from_data({rows, cols}, std::move(data));
}

inline void run_export_embeddings(const RunConfig& cfg) {
  if (cfg.student_ckpt.empty()) throw ConfigError("export-embeddings needs --student-ckpt");
  auto g = load_dataset(cfg);
  auto student = students::load_student(cfg.student_ckpt);
  auto rep = cfg.export_hidden ? student.last_hidden(g.features) : student.forward(g.features);
  fs::create_directories(cfg.out_dir);
  write_embeddings((fs::path(cfg.out_dir) / "embeddings.bin").string(), rep);
  std::ofstream os((fs::path(cfg.out_dir) / "labels.bin").string(), std::ios::binary);
  os.write(reinterpret_cast<const char*>(g.labels.data()),
           static_cast<std::streamsize>(g.labels.size() * sizeof(std::int32_t)));
  if (!os) throw IoError("cannot write labels.bin");
}

// ---------------------------------------------------------------------------
// import-dataset
// ---------------------------------------------------------------------------

struct ImportConfig {
  std::string out_dir;
  bool toy = false;
  bool synthetic = false;
  graphio::SyntheticSpec synthetic_spec;
  std::string content_path;  // LINQS <id> <feat...> <label> lines
  std::string cites_path;    // LINQS <cited> <citing> lines
  // Optional shape expectations (0 = unchecked).
  std::int32_t expect_nodes = 0;
  std::int32_t expect_feats = 0;
  std::int32_t expect_classes = 0;
  std::size_t expect_edges = 0;
};

inline Graph import_linqs(const std::string& content_path, const std::string& cites_path,
                          std::size_t* skipped_edges = nullptr) {
  std::ifstream content(content_path);
  if (!content) throw IoError("cannot read " + content_path);
  std::vector<std::string> ids;
  std::map<std::string, std::int32_t> id_index;
  std::vector<std::vector<float>> feats;
  std::vector<std::string> label_names;
  std::map<std::string, std::int32_t> label_index;
  std::vector<std::int32_t> raw_labels;
  std::string line;
  while (std::getline(content, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty()) throw IoError("malformed content line for id " + id);
    const std::string label = tokens.back();
    tokens.pop_back();
    std::vector<float> row(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) row[i] = std::stof(tokens[i]);
    if (!feats.empty() && row.size() != feats.front().size())
      throw IoError("inconsistent feature width at id " + id);
    if (id_index.count(id)) throw IoError("duplicate node id " + id);
    id_index[id] = static_cast<std::int32_t>(ids.size());
    ids.push_back(id);
    feats.push_back(std::move(row));
    if (!label_index.count(label)) {
      label_index[label] = 0;  // reassigned after sorting
      label_names.push_back(label);
    }
    raw_labels.push_back(0);
    // remember the name; resolved to sorted ids below
    raw_labels.back() = static_cast<std::int32_t>(
        std::distance(label_names.begin(),
                      std::find(label_names.begin(), label_names.end(), label)));
  }
  // Deterministic class ids: sort label names.
  std::vector<std::string> sorted_names = label_names;
  std::sort(sorted_names.begin(), sorted_names.end());
  std::vector<std::int32_t> remap(label_names.size());
  for (std::size_t i = 0; i < label_names.size(); ++i)
    remap[i] = static_cast<std::int32_t>(
        std::distance(sorted_names.begin(),
                      std::find(sorted_names.begin(), sorted_names.end(), label_names[i])));
  for (auto& y : raw_labels) y = remap[static_cast<std::size_t>(y)];

  std::ifstream cites(cites_path);
  if (!cites) throw IoError("cannot read " + cites_path);
  std::set<std::pair<std::int32_t, std::int32_t>> seen;
  std::vector<graphio::Edge> edges;
  std::size_t skipped = 0;
  std::string a, b;
  while (cites >> a >> b) {
    const auto ia = id_index.find(a);
    const auto ib = id_index.find(b);
    if (ia == id_index.end() || ib == id_index.end()) {
      ++skipped;  // dangling reference, standard in the public dumps
      continue;
    }
    if (ia->second == ib->second) {
      ++skipped;
      continue;
    }
    const std::pair<std::int32_t, std::int32_t> key{std::min(ia->second, ib->second),
                                                    std::max(ia->second, ib->second)};
    if (!seen.insert(key).second) continue;  // reciprocal citation: one edge
    edges.push_back({key.first, key.second});
  }
  if (skipped_edges) *skipped_edges = skipped;

  const auto n = static_cast<std::int32_t>(ids.size());
  const auto d = static_cast<std::int32_t>(feats.front().size());
  std::vector<float> flat;
  flat.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  for (const auto& row : feats) flat.insert(flat.end(), row.begin(), row.end());
  return graphio::make_graph(
      n, d, static_cast<std::int32_t>(sorted_names.size()),
      numkit::Tensor::from_data({static_cast<std::size_t>(n), static_cast<std::size_t>(d)},
                                std::move(flat)),
      std::move(raw_labels), std::move(edges));
}

inline Graph run_import_dataset(const ImportConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("import-dataset needs --out");
  Graph g;
  if (cfg.toy) {
    g = graphio::toy_graph();
  } else if (cfg.synthetic) {
    g = graphio::make_synthetic_graph(cfg.synthetic_spec);
  } else if (!cfg.content_path.empty()) {
    if (cfg.cites_path.empty()) throw ConfigError("import-dataset needs --cites with --content");
    g = import_linqs(cfg.content_path, cfg.cites_path);
  } else {
    throw ConfigError("import-dataset needs one of --toy, --synthetic, --content/--cites");
  }
  if (cfg.expect_nodes && g.n_nodes != cfg.expect_nodes)
    throw IoError("imported " + std::to_string(g.n_nodes) + " nodes, expected " +
                  std::to_string(cfg.expect_nodes));
  if (cfg.expect_feats && g.n_feats != cfg.expect_feats)
    throw IoError("imported " + std::to_string(g.n_feats) + " features, expected " +
                  std::to_string(cfg.expect_feats));
  if (cfg.expect_classes && g.n_classes != cfg.expect_classes)
    throw IoError("imported " + std::to_string(g.n_classes) + " classes, expected " +
                  std::to_string(cfg.expect_classes));
  if (cfg.expect_edges && g.edge_list.size() != cfg.expect_edges)
    throw IoError("imported " + std::to_string(g.edge_list.size()) + " edges, expected " +
                  std::to_string(cfg.expect_edges));
  graphio::save_graph(g, cfg.out_dir);
  return g;
}

}  // namespace kdst::bench
