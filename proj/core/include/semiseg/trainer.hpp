#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semiseg/augment.hpp"
#include "semiseg/ema_teacher.hpp"
#include "semiseg/losses.hpp"
#include "semiseg/network.hpp"
#include "semiseg/optimizer.hpp"
#include "semiseg/random.hpp"
#include "semiseg/volume.hpp"

namespace semiseg {

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  /// Unlabelled training runs for epochs strictly greater than this; defaults to round(epochs / 3).
  std::optional<std::size_t> unlab_start_epoch;
  double mu = 0.95;
  double threshold = 0.5;
  LossConfig loss;
  bool augment_labeled = false;
  std::uint64_t rng_seed = 0;

  void validate() const;
  [[nodiscard]] std::size_t start_epoch() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double loss_labeled = 0.0;
  std::optional<double> loss_unlabeled;
  std::vector<double> val_dice;  ///< per class; empty without a validation set
  double wall_seconds = 0.0;
  std::size_t labeled_updates = 0;
  std::size_t unlabeled_updates = 0;
  bool teacher_updated = false;
  std::vector<std::uint64_t> transform_seeds;
};

struct TrainHistory {
  std::vector<std::string> classes;
  std::vector<EpochRecord> epochs;
};

/// One line of transforms.log.
struct TransformLogEntry {
  std::size_t epoch = 0;
  std::string phase;   ///< "labeled" | "unlabeled"
  std::string branch;  ///< "student" | "mask" | "pseudo"
  std::string sample;
  SpatialTransform transform;

  [[nodiscard]] std::string to_json() const;
  static TransformLogEntry from_json(const std::string& line);
};

/// Raised on a non-finite loss; carries the epoch and offending sample ids.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t epoch, std::vector<std::string> samples, const std::string& what);
  [[nodiscard]] std::size_t epoch() const { return epoch_; }
  [[nodiscard]] const std::vector<std::string>& samples() const { return samples_; }

 private:
  std::size_t epoch_;
  std::vector<std::string> samples_;
};

using Predictor = std::function<MaskTensor(const Volume&)>;

/// Mean over samples of per-class DICE between binarised predictions and targets.
/// Throws std::invalid_argument on an empty dataset.
std::vector<double> evaluate(const Predictor& predict, const std::vector<LabeledSample>& dataset,
                             double threshold = 0.5, double epsilon = 1e-5);
std::vector<double> evaluate(const SegmentationModel& m, const std::vector<LabeledSample>& dataset,
                             double threshold = 0.5, double epsilon = 1e-5);

/// Mutable training state: student, teacher, optimiser and random streams.
///
/// Labelled and unlabelled phases draw shuffles and transform seeds from
/// separate streams, so an empty unlabelled set leaves the labelled trajectory
/// untouched.
class Trainer {
 public:
  Trainer(SegmentationModel model, TrainConfig cfg);

  /// One optimiser update on a labelled mini-batch; returns the pre-update mean loss.
  double supervised_step(const std::vector<const LabeledSample*>& batch);
  /// One optimiser update against teacher pseudo-labels; the teacher is not modified.
  double unsupervised_step(const std::vector<const UnlabeledSample*>& batch);

  /// Labelled phase, then (past the start epoch, with unlabelled data) one
  /// teacher update and the unlabelled phase, then validation.
  EpochRecord run_epoch(const DatasetSplit& split, const std::vector<LabeledSample>& val);

  [[nodiscard]] const SegmentationModel& model() const { return model_; }
  SegmentationModel& model() { return model_; }
  [[nodiscard]] const TeacherState& teacher() const { return teacher_; }
  TeacherState& teacher() { return teacher_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] const TrainHistory& history() const { return history_; }
  [[nodiscard]] const std::vector<TransformLogEntry>& transform_log() const { return transform_log_; }
  [[nodiscard]] std::size_t epoch() const { return epoch_; }
  [[nodiscard]] std::uint64_t optimizer_steps() const { return optimizer_.steps(); }

 private:
  void check_finite(double loss, const std::vector<std::string>& ids) const;

  SegmentationModel model_;
  TrainConfig cfg_;
  TeacherState teacher_;
  AdamW optimizer_;
  Rng labeled_rng_;
  Rng unlabeled_rng_;
  TrainingPass<float> pass_;
  Gradients grads_;
  TrainHistory history_;
  std::vector<TransformLogEntry> transform_log_;
  std::size_t epoch_ = 0;
  std::vector<std::uint64_t> epoch_seeds_;
};

struct TrainOptions {
  /// Where to write the student checkpoint if training aborts.
  std::optional<std::filesystem::path> abort_checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  SegmentationModel model;
  TeacherState teacher;
  TrainHistory history;
  std::vector<TransformLogEntry> transform_log;
};

/// Full semi-supervised loop. The labelled set must be non-empty; an empty
/// unlabelled set degrades to supervised training.
TrainResult train(SegmentationModel m, const DatasetSplit& split, const std::vector<LabeledSample>& val,
                  const TrainConfig& cfg, const TrainOptions& options = {});

/// history.csv: epoch,loss_labeled,loss_unlabeled,dice_<class>...
std::string history_csv(const TrainHistory& h);
void write_transform_log(const std::vector<TransformLogEntry>& log, const std::filesystem::path& path);
std::vector<TransformLogEntry> read_transform_log(const std::filesystem::path& path);

}  // namespace semiseg
