#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "semiseg/checkpoint.hpp"
#include "semiseg/config_json.hpp"
#include "semiseg/experiments.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/trainer.hpp"
#include "semiseg/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semiseg;

namespace {

struct RunConfig {
  TrainConfig train;
  NetworkConfig network;
  std::optional<PreprocessConfig> preprocess;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::uint64_t init_seed = 0;
};

RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k == "train") {
      rc.train = item.value().get<TrainConfig>();
    } else if (k == "network") {
      rc.network = item.value().get<NetworkConfig>();
    } else if (k == "preprocess") {
      rc.preprocess = item.value().get<PreprocessConfig>();
    } else if (k == "train_fraction") {
      rc.train_fraction = item.value().get<double>();
    } else if (k == "split_seed") {
      rc.split_seed = item.value().get<std::uint64_t>();
    } else if (k == "init_seed") {
      rc.init_seed = item.value().get<std::uint64_t>();
    } else {
      throw std::invalid_argument("config: unknown key '" + k + "'");
    }
  }
  rc.train.loss.validate(rc.network.num_classes);
  return rc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

std::string dice_line(const std::vector<std::string>& classes, const std::vector<double>& dice) {
  std::string s;
  char buf[48];
  for (std::size_t c = 0; c < dice.size() && c < classes.size(); ++c) {
    std::snprintf(buf, sizeof buf, " %s=%.4f", classes[c].c_str(), dice[c]);
    s += buf;
  }
  return s;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir) {
  const RunConfig rc = parse_run_config(read_json_file(config_path));
  const PreprocessConfig pre = rc.preprocess.value_or(PreprocessConfig::for_edge(rc.network.input_size));
  CaseSet cases = load_data_dir(data_dir, pre);
  if (cases.labeled.size() < 2) throw std::invalid_argument("train: need at least 2 labelled cases");
  auto [train_set, val_set] = shuffle_split(cases.labeled, rc.train_fraction, 0, rc.split_seed);

  DatasetSplit split;
  split.labeled = std::move(train_set);
  split.unlabeled = std::move(cases.unlabeled);
  split.split_seed = rc.split_seed;

  fs::create_directories(out_dir);
  json effective = {{"train", rc.train},           {"network", rc.network},       {"preprocess", pre},
                    {"train_fraction", rc.train_fraction}, {"split_seed", rc.split_seed}, {"init_seed", rc.init_seed}};
  write_json_file(effective, out_dir / "config.json");

  std::cerr << "train: " << split.labeled.size() << " labelled, " << split.unlabeled.size() << " unlabelled, "
            << val_set.size() << " validation\n";
  TrainOptions opts;
  opts.abort_checkpoint = out_dir / "abort.ckpt";
  opts.on_epoch = [&](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %3zu  loss_l=%.4f", e.epoch, e.loss_labeled);
    if (e.loss_unlabeled) std::fprintf(stderr, "  loss_u=%.4f", *e.loss_unlabeled);
    std::fprintf(stderr, "%s  (%.1fs)\n", dice_line(rc.network.class_names, e.val_dice).c_str(), e.wall_seconds);
  };
  const TrainResult result = train(build_model(rc.network, rc.init_seed), split, val_set, rc.train, opts);

  write_file(out_dir / "history.csv", history_csv(result.history));
  write_json_file(json(result.history), out_dir / "history.json");
  write_transform_log(result.transform_log, out_dir / "transforms.log");
  save_checkpoint(result.model, out_dir / "model.ckpt", false);
  save_checkpoint(result.teacher.model, out_dir / "teacher.ckpt", true);
  std::cerr << "wrote " << out_dir.string() << '\n';
  return 0;
}

int cmd_experiment(const fs::path& spec_path, const fs::path& out_dir) {
  const auto spec = read_json_file(spec_path).get<ExperimentSpec>();
  ExperimentOptions opts;
  opts.on_epoch = [&](const std::string& label, std::size_t rep, const EpochRecord& e) {
    if (e.epoch % 10 == 0 || e.epoch == spec.train.epochs) {
      std::fprintf(stderr, "%s r%zu epoch %zu%s\n", label.c_str(), rep, e.epoch,
                   dice_line(spec.network.class_names, e.val_dice).c_str());
    }
  };
  opts.on_run = [&](const RunRecord& r) {
    if (r.failed) {
      std::fprintf(stderr, "%s r%zu FAILED: %s\n", r.label.c_str(), r.repeat, r.error.c_str());
    } else {
      std::fprintf(stderr, "%s r%zu done:%s\n", r.label.c_str(), r.repeat,
                   dice_line(spec.network.class_names, r.final_dice).c_str());
    }
  };
  const ExperimentReport report = run_experiment(spec, opts);
  fs::create_directories(out_dir);
  write_json_file(json(spec), out_dir / "spec.json");
  save_report(report, out_dir / "report.json");
  emit_report(report, out_dir);
  std::cout << report_summary(report);
  return 0;
}

int cmd_report(const fs::path& in_dir, const fs::path& out_dir) {
  const ExperimentReport report = load_report(in_dir / "report.json");
  emit_report(report, out_dir);
  std::cout << report_summary(report);
  return 0;
}

int cmd_phantoms(const fs::path& out_dir, std::size_t count, std::size_t unlabeled, std::size_t edge,
                 std::uint64_t seed) {
  fs::create_directories(out_dir);
  const PhantomParams params;
  for (std::size_t i = 0; i < count + unlabeled; ++i) {
    const Phantom p = generate_phantom(mix_seed(seed, i), edge, params);
    char id[32];
    std::snprintf(id, sizeof id, "case_%04zu", i);
    save_volume(p.image, out_dir / (std::string(id) + ".vol"));
    if (i < count) {
      const auto label_path = out_dir / (std::string(id) + ".label.vol");
      save_label_volume(p.labels, label_path);
      write_label_sidecar(label_path);
    }
  }
  std::cerr << "wrote " << count << " labelled and " << unlabeled << " unlabelled phantoms to " << out_dir.string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised 3D segmentation toolkit"};
  app.require_subcommand(1);

  fs::path config_path, data_dir, out_dir, spec_path, in_dir;

  auto* train_cmd = app.add_subcommand("train", "Train a student/teacher pair on a data directory");
  train_cmd->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data-dir", data_dir, "Directory of <id>.vol / <id>.label.vol files")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* exp_cmd = app.add_subcommand("experiment", "Run repeated cross-validated experiment settings");
  exp_cmd->add_option("--spec", spec_path, "Experiment spec JSON")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", out_dir, "Results directory")->required();

  auto* rep_cmd = app.add_subcommand("report", "Render tables and curves from experiment results");
  rep_cmd->add_option("--in", in_dir, "Results directory containing report.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep_cmd->add_option("--out", out_dir, "Tables directory")->required();

  std::size_t count = 20, unlabeled = 0, edge = 32;
  std::uint64_t seed = 0;
  auto* ph_cmd = app.add_subcommand("phantoms", "Write a synthetic data directory");
  ph_cmd->add_option("--out", out_dir, "Output directory")->required();
  ph_cmd->add_option("--count", count, "Labelled cases")->capture_default_str();
  ph_cmd->add_option("--unlabeled", unlabeled, "Additional cases without masks")->capture_default_str();
  ph_cmd->add_option("--edge", edge, "Cubic grid edge")->capture_default_str();
  ph_cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, data_dir, out_dir);
    if (*exp_cmd) return cmd_experiment(spec_path, out_dir);
    if (*rep_cmd) return cmd_report(in_dir, out_dir);
    if (*ph_cmd) return cmd_phantoms(out_dir, count, unlabeled, edge, seed);
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
