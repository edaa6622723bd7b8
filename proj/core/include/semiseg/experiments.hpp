#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semiseg/network.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/preprocess.hpp"
#include "semiseg/random.hpp"
#include "semiseg/trainer.hpp"

namespace semiseg {

enum class Setting { kFullLabeled, kHalfLabeled, kSslHalf, kSslHalfAug };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);
[[nodiscard]] bool uses_unlabeled(Setting s);

/// Where experiment cases come from: generated phantoms or a data directory
/// of `<id>.vol` images with `<id>.label.vol` masks.
struct DataSource {
  std::string kind = "phantom";  ///< "phantom" | "dir"
  std::size_t count = 50;
  std::size_t edge = 32;
  std::uint64_t seed = 0;
  PhantomParams phantom;
  std::filesystem::path dir;
  std::optional<PreprocessConfig> preprocess;  ///< defaults to PreprocessConfig::for_edge(network input)
};

struct ExperimentSpec {
  std::vector<Setting> settings{Setting::kFullLabeled, Setting::kHalfLabeled, Setting::kSslHalf,
                                Setting::kSslHalfAug};
  double labeled_fraction = 0.5;
  std::size_t n_repeats = 4;
  double train_fraction = 0.8;
  std::uint64_t base_seed = 0;
  TrainConfig train;
  NetworkConfig network;
  /// Each listed start epoch becomes its own row for settings that use unlabelled data.
  std::vector<std::size_t> start_epoch_sweep;
  DataSource data;

  void validate() const;
};

/// Deterministic per (base_seed, repeat_index) permutation, split at floor(n * train_fraction).
/// Throws std::invalid_argument when either side would be empty.
template <typename Sample>
std::pair<std::vector<Sample>, std::vector<Sample>> shuffle_split(const std::vector<Sample>& dataset,
                                                                  double train_fraction, std::size_t repeat_index,
                                                                  std::uint64_t base_seed) {
  const std::size_t n = dataset.size();
  if (n < 2) throw std::invalid_argument("shuffle_split: need at least 2 samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("shuffle_split: train_fraction must lie in (0,1)");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train == n) throw std::invalid_argument("shuffle_split: degenerate split");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(base_seed, 0x5350000000ULL + repeat_index));
  rng.shuffle(order.begin(), order.end());
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  out.first.reserve(n_train);
  out.second.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.first : out.second).push_back(dataset[order[i]]);
  return out;
}

struct SettingSplit {
  DatasetSplit split;
  bool augment_labeled = false;
};

/// Labelled head of the training side, by split order; the tail is dropped
/// (half_labeled) or kept as unlabelled volumes (ssl settings).
SettingSplit make_setting(Setting setting, const std::vector<LabeledSample>& train_set, double labeled_fraction = 0.5);

struct RunRecord {
  std::string label;
  Setting setting = Setting::kFullLabeled;
  std::size_t repeat = 0;
  TrainConfig config;
  TrainHistory history;
  std::vector<double> final_dice;
  std::vector<std::string> labeled_ids;
  std::vector<std::string> unlabeled_ids;
  std::vector<std::string> val_ids;
  std::uint64_t model_hash = 0;
  bool failed = false;
  std::string error;
};

struct ReportRow {
  std::string label;
  Setting setting = Setting::kFullLabeled;
  std::optional<std::size_t> start_epoch;
  std::vector<double> mean;
  std::vector<double> std;  ///< population deviation over successful repeats
  std::size_t completed = 0;
  std::size_t failed = 0;
};

struct ExperimentReport {
  std::vector<std::string> classes;
  std::vector<ReportRow> rows;
  std::vector<RunRecord> runs;
};

/// Row mean and population std recomputed from `runs`.
std::vector<ReportRow> aggregate(const std::vector<std::string>& row_labels, const std::vector<RunRecord>& runs,
                                 std::size_t classes);

struct CaseSet {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
};

/// Reads `<id>.vol` images (VOL1 or NIfTI `.nii`) with optional `<id>.label.vol`
/// masks, sorted by id, and preprocesses them. Cases without masks are unlabelled.
CaseSet load_data_dir(const std::filesystem::path& dir, const PreprocessConfig& preprocess);

/// Labelled cases only; throws when a directory case lacks a mask.
std::vector<LabeledSample> load_dataset(const DataSource& source, std::size_t input_size);

struct ExperimentOptions {
  std::function<void(const RunRecord&)> on_run;
  std::function<void(const std::string& label, std::size_t repeat, const EpochRecord&)> on_epoch;
};

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::vector<LabeledSample>& dataset,
                                const ExperimentOptions& options = {});
ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options = {});

/// table.csv, curves/<label>_r<repeat>.csv and summary.txt.
void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir);
void save_report(const ExperimentReport& report, const std::filesystem::path& path);
ExperimentReport load_report(const std::filesystem::path& path);

std::string report_table_csv(const ExperimentReport& report);
std::string report_summary(const ExperimentReport& report);

}  // namespace semiseg
