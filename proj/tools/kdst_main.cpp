// kdst: train GNN teachers, distill them into Fourier-KAN students, and
// benchmark the result. See README.md for the dataset format and examples.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdst/bench/run.hpp"

namespace {

using kdst::bench::ImportConfig;
using kdst::bench::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string find_config_flag(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return {};
}

void add_common_flags(CLI::App* cmd, RunConfig& cfg, std::string& mode, std::string& config_path) {
  cmd->add_option("--dataset", cfg.dataset_dir, "Dataset directory");
  cmd->add_option("--mode", mode, "transductive|inductive");
  cmd->add_option("--out", cfg.out_dir, "Output directory");
  cmd->add_option("--config", config_path, "JSON config file (flags override it)");
  cmd->add_option("--per-class-train", cfg.per_class_train, "Train nodes per class");
  cmd->add_option("--per-class-val", cfg.per_class_val, "Validation nodes per class");
  cmd->add_option("--ind-fraction", cfg.ind_fraction, "Unseen fraction of the test set");
  cmd->add_flag("--row-normalize", cfg.row_normalize, "L1-normalize feature rows");
}

void add_teacher_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--teacher", cfg.teacher_arch, "gcn|sage|gat");
  cmd->add_option("--teacher-hidden", cfg.teacher_hyper.hidden, "Teacher hidden width");
  cmd->add_option("--teacher-lr", cfg.teacher_hyper.lr, "Teacher learning rate");
  cmd->add_option("--teacher-epochs", cfg.teacher_hyper.max_epochs, "Teacher epoch cap");
  cmd->add_option("--teacher-patience", cfg.teacher_hyper.patience,
                  "Teacher early stopping patience");
}

void add_student_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--student", cfg.student_arch, "frkan_plus|frkan|spline_kan|mlp");
  cmd->add_option("--grid-size", cfg.student.grid_size, "Fourier terms per input feature");
  cmd->add_option("--hidden", cfg.student.hidden, "Student hidden widths");
  cmd->add_flag("--standardize", cfg.student.standardize,
                "Per-feature train-set standardization before the student");
}

void add_distill_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--lambda", cfg.distill.lambda, "CE/KD balance (1 = CE only)");
  cmd->add_option("--tau", cfg.distill.tau, "Distillation temperature");
  cmd->add_option("--weight-true", cfg.distill.weight_true, "Agreement reweight factor");
  cmd->add_option("--weight-false", cfg.distill.weight_false, "Disagreement reweight factor");
  cmd->add_option("--prob-floor", cfg.distill.prob_floor, "Sampling probability floor");
  cmd->add_option("--prob-ceil", cfg.distill.prob_ceil, "Sampling probability ceiling");
  cmd->add_option("--attn-dim", cfg.distill.attn_dim, "Sampler attention width H");
  cmd->add_option("--lr", cfg.distill.lr, "Student learning rate");
  cmd->add_option("--weight-decay", cfg.distill.weight_decay, "Student weight decay");
  cmd->add_option("--epochs", cfg.distill.max_epochs, "Student epoch cap");
  cmd->add_option("--patience", cfg.distill.patience, "Student early stopping patience");
  cmd->add_flag("--kd-both-endpoints", cfg.distill.kd_both_endpoints,
                "Average the KD term over both endpoints of each sampled edge");
  cmd->add_flag("!--no-train-sampler", cfg.distill.train_sampler,
                "Freeze the sampler (no gradient into beta/W_Q/W_K)");
}

int dispatch(int argc, char** argv) {
  RunConfig cfg;
  std::string config_path = find_config_flag(argc, argv);
  if (!config_path.empty()) kdst::bench::apply_config_file(cfg, config_path);
  std::string mode = kdst::graphio::mode_name(cfg.mode);
  int sweep_seeds = 1;  // reduced-seed default for the grid

  CLI::App app{"Graph knowledge distillation: GNN teachers, Fourier-KAN students"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train-teacher", "Train a GNN teacher over several seeds");
  add_common_flags(train, cfg, mode, config_path);
  add_teacher_flags(train, cfg);
  train->add_option("--seeds", cfg.n_seeds, "Number of seeds (0..n-1)");
  train->add_option("--tau", cfg.distill.tau, "Temperature for exported soft targets");
  train->add_flag("--export-logits", cfg.export_logits, "Write per-seed N x K f32 logit files");

  auto* distill = app.add_subcommand("distill", "Distill a teacher into a student");
  add_common_flags(distill, cfg, mode, config_path);
  add_teacher_flags(distill, cfg);
  add_student_flags(distill, cfg);
  add_distill_flags(distill, cfg);
  distill->add_option("--seeds", cfg.n_seeds, "Number of seeds (0..n-1)");
  distill->add_option("--teacher-logits", cfg.teacher_logits,
                      "Use exported teacher logits instead of training a teacher");

  auto* bench = app.add_subcommand("benchmark", "Parameter and latency comparison");
  add_common_flags(bench, cfg, mode, config_path);
  bench->add_option("--teacher-ckpt", cfg.teacher_ckpt, "Teacher checkpoint")->required();
  bench->add_option("--student-ckpt", cfg.student_ckpt, "Student checkpoint")->required();

  auto* sweep = app.add_subcommand("sweep", "Sensitivity grid over lambda and grid size");
  add_common_flags(sweep, cfg, mode, config_path);
  add_teacher_flags(sweep, cfg);
  add_student_flags(sweep, cfg);
  add_distill_flags(sweep, cfg);
  sweep->add_option("--seeds", sweep_seeds, "Seeds per grid cell");
  sweep->add_option("--lambda-grid", cfg.lambda_grid, "Lambda grid values");
  sweep->add_option("--grid-sizes", cfg.grid_sizes, "Grid-size values");

  auto* exporter = app.add_subcommand("export-embeddings", "Dump student representations");
  add_common_flags(exporter, cfg, mode, config_path);
  exporter->add_option("--student-ckpt", cfg.student_ckpt, "Student checkpoint")->required();
  exporter->add_flag("--hidden-layer", cfg.export_hidden,
                     "Export the last hidden representation instead of logits");

  ImportConfig icfg;
  auto* import = app.add_subcommand("import-dataset", "Write a dataset directory");
  import->add_option("--out", icfg.out_dir, "Output dataset directory")->required();
  import->add_flag("--toy", icfg.toy, "Bundled four-node fixture");
  import->add_flag("--synthetic", icfg.synthetic, "Planted-partition synthetic graph");
  import->add_option("--nodes", icfg.synthetic_spec.n_nodes, "Synthetic node count");
  import->add_option("--feats", icfg.synthetic_spec.n_feats, "Synthetic feature width");
  import->add_option("--classes", icfg.synthetic_spec.n_classes, "Synthetic class count");
  import->add_option("--avg-degree", icfg.synthetic_spec.avg_degree, "Synthetic mean degree");
  import->add_option("--homophily", icfg.synthetic_spec.homophily, "Same-class edge fraction");
  import->add_option("--feature-noise", icfg.synthetic_spec.feature_noise,
                     "Feature noise around class centers");
  import->add_option("--seed", icfg.synthetic_spec.seed, "Synthetic generator seed");
  import->add_option("--content", icfg.content_path, "LINQS .content file");
  import->add_option("--cites", icfg.cites_path, "LINQS .cites file");
  import->add_option("--expect-nodes", icfg.expect_nodes, "Fail unless this node count");
  import->add_option("--expect-feats", icfg.expect_feats, "Fail unless this feature width");
  import->add_option("--expect-classes", icfg.expect_classes, "Fail unless this class count");
  import->add_option("--expect-edges", icfg.expect_edges, "Fail unless this edge count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;  // help exits 0, usage errors 2
  }
  cfg.mode = kdst::graphio::parse_mode(mode);
  if (sweep->parsed()) cfg.n_seeds = sweep_seeds;

  if (train->parsed()) {
    auto summary = kdst::bench::run_train_teacher(cfg);
    std::printf("teacher=%s dataset=%s params=%zu %s=%.4f±%.4f (%d seeds)\n",
                cfg.teacher_arch.c_str(), cfg.dataset_dir.c_str(), summary.teacher_params,
                cfg.mode == kdst::graphio::Mode::kInductive ? "ind_acc" : "test_acc",
                summary.mean_test, summary.std_test, cfg.n_seeds);
  } else if (distill->parsed()) {
    auto summary = kdst::bench::run_distill(cfg);
    std::printf("student=%s params=%zu %s=%.4f±%.4f teacher=%.4f (%d seeds)\n",
                cfg.student_arch.c_str(), summary.student_params,
                cfg.mode == kdst::graphio::Mode::kInductive ? "ind_acc" : "test_acc",
                summary.mean_student, summary.std_student, summary.mean_teacher, cfg.n_seeds);
  } else if (bench->parsed()) {
    auto report = kdst::bench::run_benchmark(cfg);
    std::printf("params: teacher=%zu student=%zu compression(teacher/student)=%.2fx\n",
                report.teacher_params, report.student_params, report.compression);
    std::printf("latency median ms: teacher=%.3f student=%.3f (100 runs, 10 warmups)\n",
                report.teacher_latency.median_ms, report.student_latency.median_ms);
  } else if (sweep->parsed()) {
    auto rows = kdst::bench::run_sweep(cfg);
    for (const auto& row : rows)
      std::printf("lambda=%.2f g=%zu acc=%.4f params=%zu\n", row.lambda, row.grid_size,
                  row.mean_acc, row.params);
  } else if (exporter->parsed()) {
    kdst::bench::run_export_embeddings(cfg);
    std::printf("wrote %s/embeddings.bin and labels.bin\n", cfg.out_dir.c_str());
  } else if (import->parsed()) {
    auto g = kdst::bench::run_import_dataset(icfg);
    std::printf("wrote %s: N=%d D=%d K=%d edges=%zu\n", icfg.out_dir.c_str(), g.n_nodes,
                g.n_feats, g.n_classes, g.edge_list.size());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const kdst::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kdst::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kdst::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const kdst::AutodiffError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const kdst::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
