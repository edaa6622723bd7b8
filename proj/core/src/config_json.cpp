#include "semiseg/config_json.hpp"

#include <fstream>
#include <set>

namespace semiseg {

using nlohmann::json;

namespace {

class Fields {
 public:
  Fields(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw std::invalid_argument(what_ + ": expected a JSON object");
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return false;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(what_ + "." + key + ": " + e.what());
    }
    return true;
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw std::invalid_argument(what_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const PhantomParams& p) {
  j = {{"tl_radius", p.tl_radius},
       {"fl_radius", p.fl_radius},
       {"radius_jitter", p.radius_jitter},
       {"thrombus_radius", p.thrombus_radius},
       {"thrombus_probability", p.thrombus_probability},
       {"noise_sd", p.noise_sd},
       {"background", p.background},
       {"tl_intensity", p.tl_intensity},
       {"fl_intensity", p.fl_intensity},
       {"thrombus_intensity", p.thrombus_intensity},
       {"intensity_jitter", p.intensity_jitter},
       {"wander", p.wander},
       {"spine", p.spine}};
}

void from_json(const json& j, PhantomParams& p) {
  Fields f(j, "phantom");
  f.get("tl_radius", p.tl_radius);
  f.get("fl_radius", p.fl_radius);
  f.get("radius_jitter", p.radius_jitter);
  f.get("thrombus_radius", p.thrombus_radius);
  f.get("thrombus_probability", p.thrombus_probability);
  f.get("noise_sd", p.noise_sd);
  f.get("background", p.background);
  f.get("tl_intensity", p.tl_intensity);
  f.get("fl_intensity", p.fl_intensity);
  f.get("thrombus_intensity", p.thrombus_intensity);
  f.get("intensity_jitter", p.intensity_jitter);
  f.get("wander", p.wander);
  f.get("spine", p.spine);
  f.finish();
}

void to_json(json& j, const PreprocessConfig& p) {
  j = {{"vmin", p.vmin},
       {"vmax", p.vmax},
       {"exp_coef", p.exp_coef},
       {"erosion_window", p.erosion_window},
       {"std_epsilon", p.std_epsilon},
       {"exp_clamp", p.exp_clamp},
       {"target_dims", {p.target_dims.nx, p.target_dims.ny, p.target_dims.nz}},
       {"xy_resize", p.xy_resize},
       {"xy_border_crop", p.xy_border_crop}};
}

void from_json(const json& j, PreprocessConfig& p) {
  Fields f(j, "preprocess");
  f.get("vmin", p.vmin);
  f.get("vmax", p.vmax);
  f.get("exp_coef", p.exp_coef);
  f.get("erosion_window", p.erosion_window);
  f.get("std_epsilon", p.std_epsilon);
  f.get("exp_clamp", p.exp_clamp);
  std::array<std::size_t, 3> dims{};
  if (f.get("target_dims", dims)) p.target_dims = {dims[0], dims[1], dims[2]};
  f.get("xy_resize", p.xy_resize);
  f.get("xy_border_crop", p.xy_border_crop);
  f.finish();
  p.validate();
}

void to_json(json& j, const LossConfig& p) {
  j = {{"gamma", p.gamma}, {"alpha", p.alpha},     {"w_gdl", p.w_gdl},
       {"w_fl", p.w_fl},   {"epsilon", p.epsilon}, {"reduction", to_string(p.reduction)}};
}

void from_json(const json& j, LossConfig& p) {
  Fields f(j, "loss");
  f.get("gamma", p.gamma);
  f.get("alpha", p.alpha);
  f.get("w_gdl", p.w_gdl);
  f.get("w_fl", p.w_fl);
  f.get("epsilon", p.epsilon);
  std::string red;
  if (f.get("reduction", red)) p.reduction = reduction_from_string(red);
  f.finish();
}

void to_json(json& j, const NetworkConfig& p) {
  j = {{"in_channels", p.in_channels},
       {"num_classes", p.num_classes},
       {"stage_channels", p.stage_channels},
       {"downscale_factor", p.downscale_factor},
       {"bottleneck_dim", p.bottleneck_dim},
       {"head_channels", p.head_channels},
       {"input_size", p.input_size},
       {"leaky_slope", p.leaky_slope},
       {"class_names", p.class_names}};
}

void from_json(const json& j, NetworkConfig& p) {
  Fields f(j, "network");
  f.get("in_channels", p.in_channels);
  f.get("num_classes", p.num_classes);
  f.get("stage_channels", p.stage_channels);
  f.get("downscale_factor", p.downscale_factor);
  f.get("bottleneck_dim", p.bottleneck_dim);
  f.get("head_channels", p.head_channels);
  f.get("input_size", p.input_size);
  f.get("leaky_slope", p.leaky_slope);
  f.get("class_names", p.class_names);
  f.finish();
  p.validate();
}

void to_json(json& j, const TrainConfig& p) {
  j = {{"epochs", p.epochs},
       {"batch_size", p.batch_size},
       {"learning_rate", p.learning_rate},
       {"weight_decay", p.weight_decay},
       {"unlab_start_epoch", p.unlab_start_epoch ? json(*p.unlab_start_epoch) : json(nullptr)},
       {"mu", p.mu},
       {"threshold", p.threshold},
       {"loss", p.loss},
       {"augment_labeled", p.augment_labeled},
       {"rng_seed", p.rng_seed}};
}

void from_json(const json& j, TrainConfig& p) {
  Fields f(j, "train");
  f.get("epochs", p.epochs);
  f.get("batch_size", p.batch_size);
  f.get("learning_rate", p.learning_rate);
  f.get("weight_decay", p.weight_decay);
  std::size_t start = 0;
  if (f.get("unlab_start_epoch", start)) p.unlab_start_epoch = start;
  f.get("mu", p.mu);
  f.get("threshold", p.threshold);
  f.get("loss", p.loss);
  f.get("augment_labeled", p.augment_labeled);
  f.get("rng_seed", p.rng_seed);
  f.finish();
  p.validate();
}

void to_json(json& j, const DataSource& p) {
  j = {{"kind", p.kind}};
  if (p.kind == "phantom") {
    j["count"] = p.count;
    j["edge"] = p.edge;
    j["seed"] = p.seed;
    j["phantom"] = p.phantom;
  } else {
    j["dir"] = p.dir.string();
  }
  if (p.preprocess) j["preprocess"] = *p.preprocess;
}

void from_json(const json& j, DataSource& p) {
  Fields f(j, "data");
  f.get("kind", p.kind);
  f.get("count", p.count);
  f.get("edge", p.edge);
  f.get("seed", p.seed);
  f.get("phantom", p.phantom);
  std::string dir;
  if (f.get("dir", dir)) p.dir = dir;
  PreprocessConfig pre;
  if (f.get("preprocess", pre)) p.preprocess = pre;
  f.finish();
  if (p.kind != "phantom" && p.kind != "dir") throw std::invalid_argument("data.kind must be 'phantom' or 'dir'");
}

void to_json(json& j, const ExperimentSpec& p) {
  json settings = json::array();
  for (Setting s : p.settings) settings.push_back(to_string(s));
  j = {{"settings", settings},
       {"labeled_fraction", p.labeled_fraction},
       {"n_repeats", p.n_repeats},
       {"train_fraction", p.train_fraction},
       {"base_seed", p.base_seed},
       {"train", p.train},
       {"network", p.network},
       {"start_epoch_sweep", p.start_epoch_sweep},
       {"data", p.data}};
}

void from_json(const json& j, ExperimentSpec& p) {
  Fields f(j, "experiment");
  std::string one;
  std::vector<std::string> many;
  const bool has_one = f.get("setting", one);
  const bool has_many = f.get("settings", many);
  if (has_one && has_many) throw std::invalid_argument("experiment: give either 'setting' or 'settings'");
  if (has_one) many = {one};
  if (has_one || has_many) {
    p.settings.clear();
    for (const auto& s : many) p.settings.push_back(setting_from_string(s));
  }
  f.get("labeled_fraction", p.labeled_fraction);
  f.get("n_repeats", p.n_repeats);
  f.get("train_fraction", p.train_fraction);
  f.get("base_seed", p.base_seed);
  f.get("train", p.train);
  f.get("network", p.network);
  f.get("start_epoch_sweep", p.start_epoch_sweep);
  f.get("data", p.data);
  f.finish();
  p.validate();
}

void to_json(json& j, const EpochRecord& p) {
  j = {{"epoch", p.epoch},
       {"loss_labeled", p.loss_labeled},
       {"loss_unlabeled", p.loss_unlabeled ? json(*p.loss_unlabeled) : json(nullptr)},
       {"val_dice", p.val_dice},
       {"wall_seconds", p.wall_seconds},
       {"labeled_updates", p.labeled_updates},
       {"unlabeled_updates", p.unlabeled_updates},
       {"teacher_updated", p.teacher_updated},
       {"transform_seeds", p.transform_seeds}};
}

void from_json(const json& j, EpochRecord& p) {
  Fields f(j, "epoch record");
  f.get("epoch", p.epoch);
  f.get("loss_labeled", p.loss_labeled);
  double u = 0.0;
  if (f.get("loss_unlabeled", u)) p.loss_unlabeled = u;
  f.get("val_dice", p.val_dice);
  f.get("wall_seconds", p.wall_seconds);
  f.get("labeled_updates", p.labeled_updates);
  f.get("unlabeled_updates", p.unlabeled_updates);
  f.get("teacher_updated", p.teacher_updated);
  f.get("transform_seeds", p.transform_seeds);
  f.finish();
}

void to_json(json& j, const TrainHistory& p) { j = {{"classes", p.classes}, {"epochs", p.epochs}}; }

void from_json(const json& j, TrainHistory& p) {
  Fields f(j, "history");
  f.get("classes", p.classes);
  f.get("epochs", p.epochs);
  f.finish();
}

void to_json(json& j, const RunRecord& p) {
  j = {{"label", p.label},
       {"setting", to_string(p.setting)},
       {"repeat", p.repeat},
       {"config", p.config},
       {"history", p.history},
       {"final_dice", p.final_dice},
       {"labeled_ids", p.labeled_ids},
       {"unlabeled_ids", p.unlabeled_ids},
       {"val_ids", p.val_ids},
       {"model_hash", p.model_hash},
       {"failed", p.failed},
       {"error", p.error}};
}

void from_json(const json& j, RunRecord& p) {
  Fields f(j, "run");
  f.get("label", p.label);
  std::string s;
  if (f.get("setting", s)) p.setting = setting_from_string(s);
  f.get("repeat", p.repeat);
  f.get("config", p.config);
  f.get("history", p.history);
  f.get("final_dice", p.final_dice);
  f.get("labeled_ids", p.labeled_ids);
  f.get("unlabeled_ids", p.unlabeled_ids);
  f.get("val_ids", p.val_ids);
  f.get("model_hash", p.model_hash);
  f.get("failed", p.failed);
  f.get("error", p.error);
  f.finish();
}

void to_json(json& j, const ReportRow& p) {
  j = {{"label", p.label},
       {"setting", to_string(p.setting)},
       {"start_epoch", p.start_epoch ? json(*p.start_epoch) : json(nullptr)},
       {"mean", p.mean},
       {"std", p.std},
       {"completed", p.completed},
       {"failed", p.failed}};
}

void from_json(const json& j, ReportRow& p) {
  Fields f(j, "row");
  f.get("label", p.label);
  std::string s;
  if (f.get("setting", s)) p.setting = setting_from_string(s);
  std::size_t start = 0;
  if (f.get("start_epoch", start)) p.start_epoch = start;
  f.get("mean", p.mean);
  f.get("std", p.std);
  f.get("completed", p.completed);
  f.get("failed", p.failed);
  f.finish();
}

void to_json(json& j, const ExperimentReport& p) {
  j = {{"classes", p.classes}, {"rows", p.rows}, {"runs", p.runs}};
}

void from_json(const json& j, ExperimentReport& p) {
  Fields f(j, "report");
  f.get("classes", p.classes);
  f.get("rows", p.rows);
  f.get("runs", p.runs);
  f.finish();
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace semiseg
