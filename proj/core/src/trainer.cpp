#include "semiseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semiseg/checkpoint.hpp"

namespace semiseg {

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (start_epoch() > epochs) throw std::invalid_argument("train: unlab_start_epoch exceeds epochs");
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("train: mu must lie in [0,1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("train: threshold must lie in (0,1)");
}

std::size_t TrainConfig::start_epoch() const {
  if (unlab_start_epoch) return *unlab_start_epoch;
  return static_cast<std::size_t>(std::lround(static_cast<double>(epochs) / 3.0));
}

std::string TransformLogEntry::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["phase"] = phase;
  j["branch"] = branch;
  j["sample"] = sample;
  j["transform"] = nlohmann::json::parse(transform.to_json());
  return j.dump();
}

TransformLogEntry TransformLogEntry::from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TransformLogEntry e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.phase = j.at("phase").get<std::string>();
  e.branch = j.at("branch").get<std::string>();
  e.sample = j.at("sample").get<std::string>();
  e.transform = SpatialTransform::from_json(j.at("transform").dump());
  return e;
}

TrainingAborted::TrainingAborted(std::size_t epoch, std::vector<std::string> samples, const std::string& what)
    : std::runtime_error(what), epoch_(epoch), samples_(std::move(samples)) {}

std::vector<double> evaluate(const Predictor& predict, const std::vector<LabeledSample>& dataset, double threshold,
                             double epsilon) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<double> sum;
  for (const auto& s : dataset) {
    const MaskTensor pred = binarize(predict(s.image), threshold);
    const auto d = dice_score(pred, s.mask, epsilon);
    if (sum.empty()) sum.assign(d.size(), 0.0);
    for (std::size_t c = 0; c < d.size(); ++c) sum[c] += d[c];
  }
  for (double& v : sum) v /= static_cast<double>(dataset.size());
  return sum;
}

std::vector<double> evaluate(const SegmentationModel& m, const std::vector<LabeledSample>& dataset, double threshold,
                             double epsilon) {
  return evaluate([&m](const Volume& x) { return forward(m, x); }, dataset, threshold, epsilon);
}

namespace {

AdamWConfig adamw_from(const TrainConfig& cfg) {
  AdamWConfig a;
  a.learning_rate = cfg.learning_rate;
  a.weight_decay = cfg.weight_decay;
  return a;
}

void scale_into(std::vector<double>& g, double s) {
  for (double& v : g) v *= s;
}

}  // namespace

Trainer::Trainer(SegmentationModel model, TrainConfig cfg)
    : model_(std::move(model)),
      cfg_(std::move(cfg)),
      teacher_(init_teacher(model_, cfg_.mu, cfg_.threshold)),
      optimizer_(model_.params, adamw_from(cfg_)),
      labeled_rng_(mix_seed(cfg_.rng_seed, 1)),
      unlabeled_rng_(mix_seed(cfg_.rng_seed, 2)),
      grads_(zero_gradients(model_.params)) {
  cfg_.validate();
  cfg_.loss.validate(model_.config.num_classes);
  history_.classes = model_.config.class_names;
}

void Trainer::check_finite(double loss, const std::vector<std::string>& ids) const {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch_ << " for samples:";
  for (const auto& id : ids) os << ' ' << id;
  throw TrainingAborted(epoch_, ids, os.str());
}

double Trainer::supervised_step(const std::vector<const LabeledSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("supervised_step: empty batch");
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::string> ids;
  for (const LabeledSample* s : batch) {
    ids.push_back(s->id);
    const Volume* x = &s->image;
    const MaskTensor* y = &s->mask;
    Volume x_aug;
    MaskTensor y_aug;
    if (cfg_.augment_labeled) {
      const std::uint64_t seed = labeled_rng_.next();
      epoch_seeds_.push_back(seed);
      const SpatialTransform t_img = sample_transform(seed);
      const SpatialTransform t_mask = sample_transform(seed);
      x_aug = apply_transform(t_img, s->image);
      y_aug = apply_transform(t_mask, s->mask);
      x = &x_aug;
      y = &y_aug;
      transform_log_.push_back({epoch_, "labeled", "student", s->id, t_img});
      transform_log_.push_back({epoch_, "labeled", "mask", s->id, t_mask});
    }
    const MaskTensor& pred = pass_.forward(model_, *x);
    LossWithGrad lg = combined_loss_grad(pred, *y, cfg_.loss);
    check_finite(lg.value, {s->id});
    total += lg.value;
    scale_into(lg.grad, inv_b);
    pass_.backward(model_, lg.grad, grads_);
  }
  const double loss = total * inv_b;
  check_finite(loss, ids);
  optimizer_.step(model_.params, grads_);
  return loss;
}

double Trainer::unsupervised_step(const std::vector<const UnlabeledSample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("unsupervised_step: empty batch");
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::string> ids;
  for (const UnlabeledSample* s : batch) {
    ids.push_back(s->id);
    const std::uint64_t seed = unlabeled_rng_.next();
    epoch_seeds_.push_back(seed);
    // Both branches rebuild the transform from the seed alone.
    const SpatialTransform t_student = sample_transform(seed);
    const SpatialTransform t_pseudo = sample_transform(seed);
    transform_log_.push_back({epoch_, "unlabeled", "student", s->id, t_student});
    transform_log_.push_back({epoch_, "unlabeled", "pseudo", s->id, t_pseudo});

    const MaskTensor target = predict_pseudo_label(teacher_, s->image, t_pseudo);
    const Volume x = apply_transform(t_student, s->image);
    const MaskTensor& pred = pass_.forward(model_, x);
    LossWithGrad lg = combined_loss_grad(pred, target, cfg_.loss);
    check_finite(lg.value, {s->id});
    total += lg.value;
    scale_into(lg.grad, inv_b);
    pass_.backward(model_, lg.grad, grads_);
  }
  const double loss = total * inv_b;
  check_finite(loss, ids);
  optimizer_.step(model_.params, grads_);
  return loss;
}

EpochRecord Trainer::run_epoch(const DatasetSplit& split, const std::vector<LabeledSample>& val) {
  if (split.labeled.empty()) throw std::invalid_argument("train: labeled set is empty");
  ++epoch_;
  epoch_seeds_.clear();
  const auto t0 = std::chrono::steady_clock::now();
  EpochRecord rec;
  rec.epoch = epoch_;
  const std::size_t b = cfg_.batch_size;

  std::vector<std::size_t> order(split.labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  labeled_rng_.shuffle(order.begin(), order.end());
  double sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += b) {
    std::vector<const LabeledSample*> batch;
    for (std::size_t i = start; i < std::min(start + b, order.size()); ++i) batch.push_back(&split.labeled[order[i]]);
    sum += supervised_step(batch);
    ++rec.labeled_updates;
  }
  rec.loss_labeled = sum / static_cast<double>(rec.labeled_updates);

  if (epoch_ > cfg_.start_epoch() && !split.unlabeled.empty()) {
    update_teacher(teacher_, model_);
    rec.teacher_updated = true;
    std::vector<std::size_t> uorder(split.unlabeled.size());
    std::iota(uorder.begin(), uorder.end(), std::size_t{0});
    unlabeled_rng_.shuffle(uorder.begin(), uorder.end());
    double usum = 0.0;
    for (std::size_t start = 0; start < uorder.size(); start += b) {
      std::vector<const UnlabeledSample*> batch;
      for (std::size_t i = start; i < std::min(start + b, uorder.size()); ++i) {
        batch.push_back(&split.unlabeled[uorder[i]]);
      }
      usum += unsupervised_step(batch);
      ++rec.unlabeled_updates;
    }
    rec.loss_unlabeled = usum / static_cast<double>(rec.unlabeled_updates);
  }

  if (!val.empty()) rec.val_dice = evaluate(model_, val, cfg_.threshold, cfg_.loss.epsilon);
  rec.transform_seeds = epoch_seeds_;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  history_.epochs.push_back(rec);
  return rec;
}

TrainResult train(SegmentationModel m, const DatasetSplit& split, const std::vector<LabeledSample>& val,
                  const TrainConfig& cfg, const TrainOptions& options) {
  if (split.labeled.empty()) throw std::invalid_argument("train: labeled set is empty");
  split.check_disjoint();
  Trainer trainer(std::move(m), cfg);
  try {
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      const EpochRecord rec = trainer.run_epoch(split, val);
      if (options.on_epoch) options.on_epoch(rec);
    }
  } catch (const TrainingAborted&) {
    if (options.abort_checkpoint) save_checkpoint(trainer.model(), *options.abort_checkpoint, false);
    throw;
  }
  return {trainer.model(), trainer.teacher(), trainer.history(), trainer.transform_log()};
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,loss_labeled,loss_unlabeled";
  for (const auto& c : h.classes) os << ",dice_" << lower(c);
  os << '\n';
  char buf[64];
  for (const auto& r : h.epochs) {
    os << r.epoch;
    std::snprintf(buf, sizeof buf, ",%.8f", r.loss_labeled);
    os << buf;
    if (r.loss_unlabeled) {
      std::snprintf(buf, sizeof buf, ",%.8f", *r.loss_unlabeled);
      os << buf;
    } else {
      os << ',';
    }
    for (std::size_t c = 0; c < h.classes.size(); ++c) {
      if (c < r.val_dice.size()) {
        std::snprintf(buf, sizeof buf, ",%.8f", r.val_dice[c]);
        os << buf;
      } else {
        os << ',';
      }
    }
    os << '\n';
  }
  return os.str();
}

void write_transform_log(const std::vector<TransformLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& e : log) out << e.to_json() << '\n';
}

std::vector<TransformLogEntry> read_transform_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<TransformLogEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(TransformLogEntry::from_json(line));
  }
  return out;
}

}  // namespace semiseg
