#include "semiseg/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "semiseg/config_json.hpp"
#include "semiseg/volume_io.hpp"

namespace semiseg {

std::string to_string(Setting s) {
  switch (s) {
    case Setting::kFullLabeled:
      return "full_labeled";
    case Setting::kHalfLabeled:
      return "half_labeled";
    case Setting::kSslHalf:
      return "ssl_half";
    case Setting::kSslHalfAug:
      return "ssl_half_aug";
  }
  throw std::invalid_argument("unknown setting");
}

Setting setting_from_string(const std::string& s) {
  for (Setting v : {Setting::kFullLabeled, Setting::kHalfLabeled, Setting::kSslHalf, Setting::kSslHalfAug}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown setting '" + s + "'");
}

bool uses_unlabeled(Setting s) { return s == Setting::kSslHalf || s == Setting::kSslHalfAug; }

void ExperimentSpec::validate() const {
  if (settings.empty()) throw std::invalid_argument("experiment: no settings");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw std::invalid_argument("experiment: labeled_fraction must lie in (0,1]");
  }
  if (n_repeats == 0) throw std::invalid_argument("experiment: n_repeats must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("experiment: train_fraction must lie in (0,1)");
  }
  train.validate();
  network.validate();
  train.loss.validate(network.num_classes);
  for (std::size_t e : start_epoch_sweep) {
    if (e > train.epochs) throw std::invalid_argument("experiment: sweep start epoch exceeds epochs");
  }
}

SettingSplit make_setting(Setting setting, const std::vector<LabeledSample>& train_set, double labeled_fraction) {
  if (train_set.empty()) throw std::invalid_argument("make_setting: empty training set");
  SettingSplit out;
  if (setting == Setting::kFullLabeled) {
    out.split.labeled = train_set;
    return out;
  }
  const std::size_t n = train_set.size();
  auto n_lab = static_cast<std::size_t>(std::llround(static_cast<double>(n) * labeled_fraction));
  n_lab = std::clamp<std::size_t>(n_lab, 1, n);
  out.split.labeled.assign(train_set.begin(), train_set.begin() + static_cast<std::ptrdiff_t>(n_lab));
  if (uses_unlabeled(setting)) {
    for (std::size_t i = n_lab; i < n; ++i) out.split.unlabeled.push_back({train_set[i].id, train_set[i].image});
  }
  out.augment_labeled = setting == Setting::kSslHalfAug;
  return out;
}

std::vector<ReportRow> aggregate(const std::vector<std::string>& row_labels, const std::vector<RunRecord>& runs,
                                 std::size_t classes) {
  std::vector<ReportRow> rows;
  for (const auto& label : row_labels) {
    ReportRow row;
    row.label = label;
    row.mean.assign(classes, 0.0);
    row.std.assign(classes, 0.0);
    std::vector<const RunRecord*> ok;
    for (const auto& r : runs) {
      if (r.label != label) continue;
      row.setting = r.setting;
      if (uses_unlabeled(r.setting)) row.start_epoch = r.config.start_epoch();
      if (r.failed) {
        ++row.failed;
      } else {
        ok.push_back(&r);
      }
    }
    row.completed = ok.size();
    if (!ok.empty()) {
      const double n = static_cast<double>(ok.size());
      for (std::size_t c = 0; c < classes; ++c) {
        double sum = 0.0;
        for (const auto* r : ok) sum += r->final_dice.at(c);
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto* r : ok) sq += (r->final_dice[c] - mean) * (r->final_dice[c] - mean);
        row.mean[c] = mean;
        row.std[c] = std::sqrt(sq / n);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

LabeledSample make_labeled(std::string id, const Volume& raw, const LabelVolume& labels,
                           const PreprocessConfig& cfg) {
  LabeledSample s;
  s.id = std::move(id);
  s.image = preprocess_pipeline(raw, cfg);
  s.mask = labels_to_masks(resize_crop(labels, cfg));
  return s;
}

}  // namespace

CaseSet load_data_dir(const std::filesystem::path& dir, const PreprocessConfig& preprocess) {
  if (!std::filesystem::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
  std::map<std::string, std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (ends_with(name, ".label.vol") || ends_with(name, ".json")) continue;
    if (ends_with(name, ".vol")) images[name.substr(0, name.size() - 4)] = entry.path();
    if (ends_with(name, ".nii")) images[name.substr(0, name.size() - 4)] = entry.path();
  }
  if (images.empty()) throw IoError("no volumes found in '" + dir.string() + "'");
  CaseSet out;
  for (const auto& [id, path] : images) {
    const Volume raw = load_volume(path);
    const auto label_path = dir / (id + ".label.vol");
    if (std::filesystem::exists(label_path)) {
      out.labeled.push_back(make_labeled(id, raw, load_label_volume(label_path), preprocess));
    } else {
      out.unlabeled.push_back({id, preprocess_pipeline(raw, preprocess)});
    }
  }
  return out;
}

std::vector<LabeledSample> load_dataset(const DataSource& source, std::size_t input_size) {
  if (source.kind == "dir") {
    const PreprocessConfig cfg = source.preprocess.value_or(PreprocessConfig::for_edge(input_size));
    CaseSet cases = load_data_dir(source.dir, cfg);
    if (!cases.unlabeled.empty()) {
      throw std::invalid_argument("experiment data: case '" + cases.unlabeled.front().id + "' has no label volume");
    }
    return std::move(cases.labeled);
  }
  const PreprocessConfig cfg = source.preprocess.value_or(PreprocessConfig::for_edge(source.edge));
  if (cfg.target_dims != Dims{input_size, input_size, input_size}) {
    throw std::invalid_argument("experiment data: preprocessing does not produce the network input size");
  }
  std::vector<LabeledSample> out;
  out.reserve(source.count);
  for (std::size_t i = 0; i < source.count; ++i) {
    const Phantom p = generate_phantom(mix_seed(source.seed, i), source.edge, source.phantom);
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%04zu", i);
    out.push_back(make_labeled(id, p.image, p.labels, cfg));
  }
  return out;
}

namespace {

struct PlannedRow {
  std::string label;
  Setting setting;
  std::optional<std::size_t> start;
};

std::vector<PlannedRow> plan_rows(const ExperimentSpec& spec) {
  std::vector<PlannedRow> rows;
  for (Setting s : spec.settings) {
    if (uses_unlabeled(s) && !spec.start_epoch_sweep.empty()) {
      for (std::size_t e : spec.start_epoch_sweep) {
        rows.push_back({to_string(s) + "@start=" + std::to_string(e), s, e});
      }
    } else {
      rows.push_back({to_string(s), s, std::nullopt});
    }
  }
  return rows;
}

std::vector<std::string> ids_of(const auto& samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::vector<LabeledSample>& dataset,
                                const ExperimentOptions& options) {
  spec.validate();
  const auto rows = plan_rows(spec);
  ExperimentReport report;
  report.classes = spec.network.class_names;

  for (std::size_t rep = 0; rep < spec.n_repeats; ++rep) {
    const auto [train_set, val_set] = shuffle_split(dataset, spec.train_fraction, rep, spec.base_seed);
    const std::uint64_t init_seed = mix_seed(spec.base_seed, 0x494e4954ULL + rep);
    const std::uint64_t train_seed = mix_seed(spec.base_seed, 0x5452414eULL + rep);
    const SegmentationModel initial = build_model(spec.network, init_seed);
    for (const auto& row : rows) {
      RunRecord rec;
      rec.label = row.label;
      rec.setting = row.setting;
      rec.repeat = rep;
      const SettingSplit setting = make_setting(row.setting, train_set, spec.labeled_fraction);
      rec.config = spec.train;
      rec.config.rng_seed = train_seed;
      rec.config.augment_labeled = setting.augment_labeled;
      if (row.start) rec.config.unlab_start_epoch = *row.start;
      rec.labeled_ids = ids_of(setting.split.labeled);
      rec.unlabeled_ids = ids_of(setting.split.unlabeled);
      rec.val_ids = ids_of(val_set);
      try {
        TrainOptions topts;
        if (options.on_epoch) {
          topts.on_epoch = [&](const EpochRecord& e) { options.on_epoch(rec.label, rep, e); };
        }
        TrainResult result = train(initial, setting.split, val_set, rec.config, topts);
        rec.history = std::move(result.history);
        rec.final_dice = evaluate(result.model, val_set, rec.config.threshold, rec.config.loss.epsilon);
        rec.model_hash = result.model.params.hash();
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
      if (options.on_run) options.on_run(rec);
      report.runs.push_back(std::move(rec));
    }
  }
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.label);
  report.rows = aggregate(labels, report.runs, report.classes.size());
  return report;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options) {
  spec.validate();
  return run_experiment(spec, load_dataset(spec.data, spec.network.input_size), options);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

std::string report_table_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "setting,class,mean,std\n";
  for (const auto& row : report.rows) {
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
      os << row.label << ',' << report.classes[c] << ',' << fmt(row.mean.at(c)) << ',' << fmt(row.std.at(c)) << '\n';
    }
  }
  return os.str();
}

std::string report_summary(const ExperimentReport& report) {
  std::ostringstream os;
  std::size_t width = 8;
  for (const auto& row : report.rows) width = std::max(width, row.label.size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), "setting");
  os << buf;
  for (const auto& c : report.classes) {
    std::snprintf(buf, sizeof buf, "  %-17s", c.c_str());
    os << buf;
  }
  os << "  runs\n";
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), row.label.c_str());
    os << buf;
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
      std::snprintf(buf, sizeof buf, "  %7.2f +- %5.2f  ", 100.0 * row.mean.at(c), 100.0 * row.std.at(c));
      os << buf;
    }
    os << "  " << row.completed;
    if (row.failed > 0) os << " (" << row.failed << " failed)";
    os << '\n';
  }
  os << "\nDICE in percent; +- is the population standard deviation over repeats.\n";
  for (const auto& run : report.runs) {
    if (run.failed) os << "failed: " << run.label << " repeat " << run.repeat << ": " << run.error << '\n';
  }
  return os.str();
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "curves");
  write_text(out_dir / "table.csv", report_table_csv(report));
  write_text(out_dir / "summary.txt", report_summary(report));
  for (const auto& run : report.runs) {
    if (run.failed) continue;
    write_text(out_dir / "curves" / (run.label + "_r" + std::to_string(run.repeat) + ".csv"), history_csv(run.history));
  }
}

void save_report(const ExperimentReport& report, const std::filesystem::path& path) {
  write_json_file(nlohmann::json(report), path);
}

ExperimentReport load_report(const std::filesystem::path& path) {
  return read_json_file(path).get<ExperimentReport>();
}

}  // namespace semiseg
