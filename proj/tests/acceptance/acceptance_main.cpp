// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semiseg/augment.hpp"
#include "semiseg/config_json.hpp"
#include "semiseg/ema_teacher.hpp"
#include "semiseg/experiments.hpp"
#include "semiseg/losses.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/preprocess.hpp"
#include "semiseg/random.hpp"
#include "semiseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace semiseg;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path cli;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Volume random_volume(Dims d, Rng& rng, double lo, double hi) {
  Volume v(d);
  for (float& x : v.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

void run_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + ctx.cli.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw std::runtime_error("command failed (" + std::to_string(rc) + "): " + cmd);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// 1

Verdict criterion_1(const std::vector<std::string>& evaluated) {
  return {evaluated.size() == 8,
          "published table values are not reproduced; substitute criteria evaluated: " + std::to_string(evaluated.size()) +
              "/8"};
}

// ---------------------------------------------------------------------------
// 2

std::size_t class_index(const ExperimentReport& r, const std::string& name) {
  const auto it = std::find(r.classes.begin(), r.classes.end(), name);
  if (it == r.classes.end()) throw std::runtime_error("report lacks class " + name);
  return static_cast<std::size_t>(it - r.classes.begin());
}

Verdict criterion_2(const Context& ctx) {
  const fs::path dir = ctx.work / "c2";
  fs::create_directories(dir);
  // 50 phantoms at 32^3, 40/10 shuffle split, 3 seeds, 60 epochs. The teacher
  // smoothing factor is rescaled to the 60-epoch schedule (see README).
  const json spec = {{"settings", {"full_labeled", "half_labeled", "ssl_half"}},
                     {"n_repeats", 3},
                     {"train_fraction", 0.8},
                     {"base_seed", 0},
                     {"train", {{"epochs", 60}, {"mu", 0.5}}},
                     {"data", {{"kind", "phantom"}, {"count", 50}, {"edge", 32}, {"seed", 0}}}};
  write_json_file(spec, dir / "spec.json");
  run_cli(ctx, "experiment --spec \"" + (dir / "spec.json").string() + "\" --out \"" + (dir / "results").string() + "\"",
          dir / "log.txt");
  const ExperimentReport rep = load_report(dir / "results" / "report.json");
  const std::size_t all = class_index(rep, "ALL");

  std::map<std::string, std::vector<double>> dice;
  std::map<std::string, double> seconds;
  for (const auto& r : rep.runs) {
    if (r.failed) return {false, r.label + " repeat " + std::to_string(r.repeat) + " failed: " + r.error};
    if (r.val_ids.size() != 10 || r.labeled_ids.size() + r.unlabeled_ids.size() != 40 - (r.setting == Setting::kHalfLabeled ? 20 : 0)) {
      return {false, "unexpected split sizes for " + r.label};
    }
    dice[r.label].push_back(r.final_dice[all]);
    for (const auto& e : r.history.epochs) seconds[r.label] += e.wall_seconds;
  }
  const auto& full = dice["full_labeled"];
  const auto& half = dice["half_labeled"];
  const auto& ssl = dice["ssl_half"];
  if (full.size() != 3 || half.size() != 3 || ssl.size() != 3) return {false, "expected 3 repeats per setting"};
  const double m_full = median3(full), m_half = median3(half), m_ssl = median3(ssl);
  int wins = 0;
  for (std::size_t i = 0; i < 3; ++i) wins += ssl[i] > half[i] ? 1 : 0;
  double slowest = 0.0;
  for (const auto& [label, s] : seconds) slowest = std::max(slowest, s);

  const bool ok = m_full >= m_half && m_ssl >= m_half - 0.01 && wins >= 2 && slowest <= 1800.0;
  std::string per_seed;
  for (std::size_t i = 0; i < 3; ++i) per_seed += fmt(" r%zu[%.4f %.4f %.4f]", i, full[i], half[i], ssl[i]);
  return {ok, fmt("median ALL full=%.4f half=%.4f ssl=%.4f; ssl>half in %d/3 seeds; slowest setting %.0fs;", m_full,
                  m_half, m_ssl, wins, slowest) +
                  per_seed};
}

// ---------------------------------------------------------------------------
// 3

// Line-by-line port of the reference NumPy routine on a flat x-fastest array:
// clip, 2x2x1 grey erosion (scipy "reflect", even window origin), mask,
// subtract twice the mean, divide by std(data + 1e-6), exp, min-max.
std::vector<double> reference_routine(const Volume& in, double vmin, double vmax, double exp_coef) {
  const Dims d = in.dims();
  std::vector<double> data(in.data().begin(), in.data().end());
  for (double& v : data)
    if (v < vmin) v = 0;
  for (double& v : data)
    if (v > vmax) v = 0;

  auto reflect = [](long i, long n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
  };
  const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);
  std::vector<double> mask(data.size());
  for (long z = 0; z < nz; ++z)
    for (long y = 0; y < ny; ++y)
      for (long x = 0; x < nx; ++x) {
        double m = 1e300;
        for (long dy = -1; dy <= 0; ++dy)
          for (long dx = -1; dx <= 0; ++dx) {
            const long xx = reflect(x + dx, nx), yy = reflect(y + dy, ny);
            m = std::min(m, data[static_cast<std::size_t>((z * ny + yy) * nx + xx)]);
          }
        mask[static_cast<std::size_t>((z * ny + y) * nx + x)] = m;
      }
  for (std::size_t i = 0; i < data.size(); ++i)
    if (mask[i] == 0) data[i] = 0;

  const double n = static_cast<double>(data.size());
  double mean = 0;
  for (double v : data) mean += v;
  mean /= n;
  for (double& v : data) v -= 2 * mean;
  double m1 = 0;
  for (double v : data) m1 += v + 1e-6;
  m1 /= n;
  double var = 0;
  for (double v : data) var += (v + 1e-6 - m1) * (v + 1e-6 - m1);
  const double sd = std::sqrt(var / n);
  for (double& v : data) v /= sd;
  for (double& v : data) v = std::exp(exp_coef * v);
  const double lo = *std::min_element(data.begin(), data.end());
  for (double& v : data) v -= lo;
  const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
  const double range = *mx - *mn;
  for (double& v : data) v /= range;
  return data;
}

Verdict criterion_3() {
  const PreprocessConfig cfg = PreprocessConfig::for_edge(8);
  Rng rng(3);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Volume raw = random_volume({8, 8, 8}, rng, 900.0, 1800.0);
    const Volume out = preprocess_pipeline(raw, cfg);
    const std::vector<double> ref = reference_routine(resize_crop(raw, cfg), cfg.vmin, cfg.vmax, cfg.exp_coef);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(out[i]) - ref[i]));
  }
  return {worst < 1e-6, fmt("max abs diff %.3e over 50 random 8^3 volumes", worst)};
}

// ---------------------------------------------------------------------------
// 4

Verdict criterion_4() {
  const double eps = 1e-5;
  double worst = 0.0;
  for (unsigned a = 0; a < 256; ++a) {
    MaskTensor p({"C"}, {2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) p.at(0, i) = (a >> i) & 1u;
    for (unsigned b = 0; b < 256; ++b) {
      MaskTensor y({"C"}, {2, 2, 2});
      double inter = 0, sp = 0, sy = 0;
      for (std::size_t i = 0; i < 8; ++i) {
        const double pv = (a >> i) & 1u, yv = (b >> i) & 1u;
        y.at(0, i) = yv;
        inter += pv * yv;
        sp += pv * pv;
        sy += yv * yv;
      }
      const double expected = (2 * inter + eps) / (sp + sy + eps);
      worst = std::max(worst, std::abs(dice_score(p, y, eps)[0] - expected));
    }
  }
  return {worst < 1e-9, fmt("max abs diff %.3e over 65536 mask pairs", worst)};
}

// ---------------------------------------------------------------------------
// 5

MaskTensor two_class(Rng& rng, bool binary) {
  MaskTensor m({"A", "B"}, {4, 4, 4});
  for (double& v : m.values()) v = binary ? (rng.uniform() < 0.4 ? 1.0 : 0.0) : rng.uniform(0.05, 0.95);
  m.set_binary(binary);
  return m;
}

Verdict criterion_5() {
  LossConfig cfg;
  cfg.alpha = {0.8, 1.5};
  const double h = 1e-4;
  using Value = std::function<double(const MaskTensor&, const MaskTensor&)>;
  using Grad = std::function<LossWithGrad(const MaskTensor&, const MaskTensor&)>;
  const std::vector<std::tuple<std::string, Value, Grad>> losses{
      {"gdl", [](auto& p, auto& y) { return generalized_dice_loss(p, y); },
       [](auto& p, auto& y) { return generalized_dice_loss_grad(p, y); }},
      {"focal", [&](auto& p, auto& y) { return focal_loss(p, y, cfg); },
       [&](auto& p, auto& y) { return focal_loss_grad(p, y, cfg); }},
      {"combined", [&](auto& p, auto& y) { return combined_loss(p, y, cfg); },
       [&](auto& p, auto& y) { return combined_loss_grad(p, y, cfg); }},
  };
  Rng rng(5);
  std::map<std::string, double> worst;
  for (int inst = 0; inst < 20; ++inst) {
    const MaskTensor p = two_class(rng, false);
    const MaskTensor y = two_class(rng, true);
    for (const auto& [name, value, grad] : losses) {
      const std::vector<double> g = grad(p, y).grad;
      for (std::size_t i = 0; i < p.size(); ++i) {
        MaskTensor hi = p, lo = p;
        hi.values()[i] += h;
        lo.values()[i] -= h;
        const double fd = (value(hi, y) - value(lo, y)) / (2 * h);
        // Relative error; the floor keeps exact-zero entries from dividing by zero.
        const double rel = std::abs(g[i] - fd) / std::max({std::abs(fd), std::abs(g[i]), 1e-12});
        worst[name] = std::max(worst[name], rel);
      }
    }
  }
  LossConfig bce_cfg;
  bce_cfg.alpha = {1.0, 1.0};
  bce_cfg.gamma = 0.0;
  double bce_diff = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const MaskTensor p = two_class(rng, false);
    const MaskTensor y = two_class(rng, true);
    double bce = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pv = p.values()[i], yv = y.values()[i];
      bce -= yv * std::log(pv) + (1 - yv) * std::log(1 - pv);
    }
    bce /= static_cast<double>(p.size());
    bce_diff = std::max(bce_diff, std::abs(focal_loss(p, y, bce_cfg) - bce));
  }
  const bool ok = worst["gdl"] < 1e-3 && worst["focal"] < 1e-3 && worst["combined"] < 1e-3 && bce_diff < 1e-6;
  return {ok, fmt("max rel err gdl=%.2e focal=%.2e combined=%.2e (20 instances, step 1e-4); |focal-bce|=%.2e",
                  worst["gdl"], worst["focal"], worst["combined"], bce_diff)};
}

// ---------------------------------------------------------------------------
// 6

Verdict criterion_6(const Context& ctx) {
  const auto all = all_transforms();
  std::set<std::size_t> idx;
  std::set<std::string> distinct_maps;
  for (const auto& t : all) {
    idx.insert(t.group_index());
    std::string key;
    for (auto i : transform_index_map(t, 3)) key += std::to_string(i) + ",";
    distinct_maps.insert(key);
  }
  if (all.size() != 48 || idx.size() != 48 || distinct_maps.size() != 48) return {false, "group does not have 48 distinct elements"};

  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    const Volume v = random_volume({6, 6, 6}, rng, -1.0, 1.0);
    const SpatialTransform t = sample_transform(rng.next());
    if (apply_transform(invert(t), apply_transform(t, v)) != v) return {false, "inverse round trip is not exact"};
  }
  for (int k = 0; k < 100; ++k) {
    MaskTensor p({"A", "B"}, {5, 5, 5}), y({"A", "B"}, {5, 5, 5});
    for (double& x : p.values()) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (double& x : y.values()) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const SpatialTransform t = sample_transform(rng.next());
    if (dice_score(apply_transform(t, p), apply_transform(t, y)) != dice_score(p, y)) {
      return {false, "DICE changes under a joint transform"};
    }
  }

  // Live training run through the CLI: labelled augmentation on, unlabelled phase from epoch 2.
  const fs::path dir = ctx.work / "c6";
  fs::remove_all(dir);
  fs::create_directories(dir);
  run_cli(ctx, "phantoms --out \"" + (dir / "data").string() + "\" --count 6 --unlabeled 3 --edge 16 --seed 6",
          dir / "phantoms.log");
  const json cfg = {{"train", {{"epochs", 3}, {"batch_size", 2}, {"unlab_start_epoch", 1}, {"augment_labeled", true}, {"rng_seed", 6}}},
                    {"network", {{"input_size", 16}, {"stage_channels", {4, 8}}, {"bottleneck_dim", 8}, {"head_channels", 2}}},
                    {"train_fraction", 0.67}};
  write_json_file(cfg, dir / "cfg.json");
  run_cli(ctx,
          "train --config \"" + (dir / "cfg.json").string() + "\" --data-dir \"" + (dir / "data").string() + "\" --out \"" +
              (dir / "run").string() + "\"",
          dir / "train.log");
  const auto log = read_transform_log(dir / "run" / "transforms.log");
  const auto history = read_json_file(dir / "run" / "history.json").get<TrainHistory>();

  std::size_t pairs = 0, unlabeled_pairs = 0;
  for (const auto& rec : history.epochs) {
    std::vector<const TransformLogEntry*> entries;
    for (const auto& e : log)
      if (e.epoch == rec.epoch) entries.push_back(&e);
    if (entries.size() != 2 * rec.transform_seeds.size()) return {false, fmt("epoch %zu: log and seed counts differ", rec.epoch)};
    for (std::size_t i = 0; i < rec.transform_seeds.size(); ++i) {
      const TransformLogEntry& a = *entries[2 * i];
      const TransformLogEntry& b = *entries[2 * i + 1];
      const std::string partner = a.phase == "labeled" ? "mask" : "pseudo";
      if (a.branch != "student" || b.branch != partner || a.sample != b.sample) {
        return {false, fmt("epoch %zu: malformed branch pairing at entry %zu", rec.epoch, 2 * i)};
      }
      const SpatialTransform replay = sample_transform(rec.transform_seeds[i]);
      if (!(a.transform == replay && b.transform == replay)) return {false, fmt("epoch %zu: seed replay mismatch", rec.epoch)};
      ++pairs;
      unlabeled_pairs += a.phase == "unlabeled" ? 1 : 0;
    }
  }
  if (unlabeled_pairs == 0) return {false, "live run logged no unlabelled transforms"};
  return {true, fmt("48 distinct elements; 100 exact inverse round trips; 100 exact DICE invariances on binary masks; %zu logged branch pairs "
                    "(%zu unlabelled) replay from their seeds",
                    pairs, unlabeled_pairs)};
}

// ---------------------------------------------------------------------------
// 7

NetworkConfig small_network(std::size_t edge) {
  NetworkConfig cfg;
  cfg.stage_channels = {4, 8};
  cfg.bottleneck_dim = 8;
  cfg.head_channels = 2;
  cfg.input_size = edge;
  return cfg;
}

double distance(const ParameterSet& a, const ParameterSet& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.tensors().size(); ++t)
    for (std::size_t i = 0; i < a.tensors()[t].values.size(); ++i) {
      const double d = a.tensors()[t].values[i] - b.tensors()[t].values[i];
      s += d * d;
    }
  return std::sqrt(s);
}

std::vector<LabeledSample> phantom_set(std::size_t n, std::size_t edge, std::uint64_t seed) {
  std::vector<LabeledSample> out;
  const PreprocessConfig pre = PreprocessConfig::for_edge(edge);
  for (std::size_t i = 0; i < n; ++i) {
    const Phantom p = generate_phantom(mix_seed(seed, i), edge);
    out.push_back({"p" + std::to_string(i), preprocess_pipeline(p.image, pre), labels_to_masks(p.labels)});
  }
  return out;
}

std::vector<UnlabeledSample> without_labels(const std::vector<LabeledSample>& s) {
  std::vector<UnlabeledSample> out;
  for (const auto& c : s) out.push_back({c.id, c.image});
  return out;
}

Verdict criterion_7() {
  const SegmentationModel a = build_model(small_network(8), 1);
  const SegmentationModel b = build_model(small_network(8), 2);
  TeacherState copy = init_teacher(a, 0.0);
  update_teacher(copy, b);
  if (!(copy.model.params == b.params)) return {false, "mu=0 does not copy the student"};
  TeacherState frozen = init_teacher(a, 1.0);
  update_teacher(frozen, b);
  if (!(frozen.model.params == a.params)) return {false, "mu=1 does not freeze the teacher"};

  TeacherState decay = init_teacher(a, 0.95);
  const double d0 = distance(a.params, b.params);
  for (int k = 0; k < 10; ++k) update_teacher(decay, b);
  const double rel = std::abs(distance(decay.model.params, b.params) - std::pow(0.95, 10) * d0) / (std::pow(0.95, 10) * d0);
  if (!(rel < 1e-6)) return {false, fmt("geometric decay relative error %.3e", rel)};

  const auto cases = phantom_set(4, 16, 7);
  const auto unlabeled = without_labels(cases);
  TrainConfig cfg;
  cfg.rng_seed = 7;
  Trainer trainer(build_model(small_network(16), 3), cfg);
  std::size_t steps = 0;
  for (int rep = 0; rep < 3; ++rep) {
    const std::uint64_t before = trainer.teacher().model.params.hash();
    std::vector<const UnlabeledSample*> batch;
    for (const auto& u : unlabeled) batch.push_back(&u);
    trainer.unsupervised_step(batch);
    ++steps;
    if (trainer.teacher().model.params.hash() != before) return {false, "unsupervised_step changed the teacher"};
    update_teacher(trainer.teacher(), trainer.model());
  }
  return {true, fmt("mu=0 copy, mu=1 freeze exact; decay rel err %.2e (k=10, mu=0.95); teacher hash stable over %zu "
                    "unsupervised steps",
                    rel, steps)};
}

// ---------------------------------------------------------------------------
// 8

Verdict criterion_8() {
  const auto cases = phantom_set(12, 16, 8);
  const std::vector<LabeledSample> val(cases.begin() + 10, cases.end());
  DatasetSplit split;
  split.labeled.assign(cases.begin(), cases.begin() + 5);
  split.unlabeled = without_labels({cases.begin() + 5, cases.begin() + 10});

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.unlab_start_epoch = 2;
  cfg.rng_seed = 8;
  const TrainResult r = train(build_model(small_network(16), 8), split, val, cfg);
  const std::size_t lab_updates = (split.labeled.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t unlab_updates = (split.unlabeled.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (const auto& e : r.history.epochs) {
    const bool after = e.epoch > 2;
    if (e.loss_unlabeled.has_value() != after) return {false, fmt("epoch %zu: unlabelled loss presence wrong", e.epoch)};
    if (e.teacher_updated != after) return {false, fmt("epoch %zu: teacher update presence wrong", e.epoch)};
    if (e.labeled_updates != lab_updates || e.unlabeled_updates != (after ? unlab_updates : 0)) {
      return {false, fmt("epoch %zu: update counts %zu+%zu", e.epoch, e.labeled_updates, e.unlabeled_updates)};
    }
  }

  // Empty unlabelled set vs a run whose unlabelled phase never starts.
  TrainConfig early = cfg;
  early.unlab_start_epoch = 1;
  DatasetSplit labeled_only = split;
  labeled_only.unlabeled.clear();
  const TrainResult empty = train(build_model(small_network(16), 9), labeled_only, val, early);
  TrainConfig never = cfg;
  never.unlab_start_epoch = cfg.epochs;
  const TrainResult sup = train(build_model(small_network(16), 9), split, val, never);
  if (!(empty.model.params == sup.model.params)) return {false, "empty-unlabelled run differs from supervised run"};
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto& x = empty.history.epochs[e];
    const auto& y = sup.history.epochs[e];
    if (x.loss_labeled != y.loss_labeled || x.val_dice != y.val_dice || x.loss_unlabeled || y.loss_unlabeled) {
      return {false, fmt("epoch %zu: histories differ", e + 1)};
    }
  }
  return {true, fmt("unlabelled loss only after epoch 2 of 5; %zu (+%zu) updates per epoch; empty-unlabelled run "
                    "bit-identical to supervised run",
                    lab_updates, unlab_updates)};
}

// ---------------------------------------------------------------------------
// 9

Verdict criterion_9(const Context& ctx) {
  const fs::path dir = ctx.work / "c9";
  fs::create_directories(dir);
  const json spec = {{"settings", {"ssl_half"}},
                     {"n_repeats", 3},
                     {"train_fraction", 0.8},
                     {"base_seed", 0},
                     {"start_epoch_sweep", {10, 20, 30}},
                     {"train", {{"epochs", 60}, {"mu", 0.5}}},
                     {"data", {{"kind", "phantom"}, {"count", 50}, {"edge", 32}, {"seed", 0}}}};
  write_json_file(spec, dir / "spec.json");
  run_cli(ctx, "experiment --spec \"" + (dir / "spec.json").string() + "\" --out \"" + (dir / "results").string() + "\"",
          dir / "log.txt");
  run_cli(ctx, "report --in \"" + (dir / "results").string() + "\" --out \"" + (dir / "tables").string() + "\"",
          dir / "report.log");

  const ExperimentReport rep = load_report(dir / "results" / "report.json");
  if (rep.rows.size() != 3 || rep.classes.size() != 3) return {false, "report is not 3x3"};
  for (const auto& row : rep.rows) {
    if (row.completed != 3 || row.failed != 0) return {false, row.label + " has incomplete repeats"};
  }
  std::size_t data_lines = 0;
  for (char ch : slurp(dir / "tables" / "table.csv")) data_lines += ch == '\n' ? 1 : 0;
  if (data_lines != 1 + 9) return {false, fmt("table.csv has %zu lines", data_lines)};

  // Runs of one repeat differ only in the start epoch.
  for (std::size_t rep_i = 0; rep_i < 3; ++rep_i) {
    std::vector<const RunRecord*> in;
    for (const auto& r : rep.runs)
      if (r.repeat == rep_i) in.push_back(&r);
    if (in.size() != 3) return {false, "missing runs"};
    for (const auto* r : in) {
      json a = r->config, b = in[0]->config;
      a.erase("unlab_start_epoch");
      b.erase("unlab_start_epoch");
      if (a != b || r->labeled_ids != in[0]->labeled_ids || r->unlabeled_ids != in[0]->unlabeled_ids ||
          r->val_ids != in[0]->val_ids) {
        return {false, "controlled variables differ between sweep rows"};
      }
      // Epochs up to the earliest start are labelled-only and must match exactly.
      for (std::size_t e = 0; e < 10; ++e) {
        const auto& x = r->history.epochs[e];
        const auto& y = in[0]->history.epochs[e];
        if (x.loss_labeled != y.loss_labeled || x.val_dice != y.val_dice) {
          return {false, "sweep rows diverge before any unlabelled epoch"};
        }
      }
    }
  }
  std::string cells;
  for (const auto& row : rep.rows) cells += fmt(" %s=%.4f", row.label.c_str(), row.mean[0]);
  return {true, "3x3 report emitted; sweep rows share config, splits and early history; mean ALL:" + cells};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Context ctx;
  std::vector<int> only;
  app.add_option("--work-dir", ctx.work, "Scratch directory for experiment outputs")->required();
  app.add_option("--cli", ctx.cli, "Path to the semiseg executable")->default_str(SEMISEG_CLI_PATH);
  app.add_option("--only", only, "Run a subset of criteria (development use)");
  CLI11_PARSE(app, argc, argv);
  if (ctx.cli.empty()) ctx.cli = SEMISEG_CLI_PATH;
  fs::create_directories(ctx.work);

  const std::vector<std::pair<int, std::function<Verdict()>>> checks{
      {3, [] { return criterion_3(); }},          {4, [] { return criterion_4(); }},
      {5, [] { return criterion_5(); }},          {6, [&] { return criterion_6(ctx); }},
      {7, [] { return criterion_7(); }},          {8, [] { return criterion_8(); }},
      {2, [&] { return criterion_2(ctx); }},      {9, [&] { return criterion_9(ctx); }},
  };
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  std::map<int, Verdict> verdicts;
  std::vector<std::string> evaluated;
  for (const auto& [id, fn] : checks) {
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
      evaluated.push_back(std::to_string(id));
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.detail += fmt(" (%.1fs)", secs);
    std::fprintf(stderr, "criterion %d done in %.1fs\n", id, secs);
    verdicts[id] = v;
  }
  if (only.empty()) verdicts[1] = criterion_1(evaluated);

  bool all_pass = true;
  for (const auto& [id, v] : verdicts) {
    std::printf("%s %d: %s\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str());
    all_pass = all_pass && v.pass;
  }
  std::fflush(stdout);
  return all_pass ? 0 : 1;
}
