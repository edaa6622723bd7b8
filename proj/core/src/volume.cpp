#include "semiseg/volume.hpp"

#include <sstream>
#include <unordered_set>

namespace semiseg {

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << '(' << d.nx << ',' << d.ny << ',' << d.nz << ')';
  return os.str();
}

namespace {

void check_dims(const Dims& d) {
  if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
    throw ShapeError("volume dims must be >= 1, got " + to_string(d));
  }
}

}  // namespace

Volume::Volume(Dims dims, float fill) : dims_(dims) {
  check_dims(dims);
  data_.assign(dims.voxels(), fill);
}

Volume::Volume(Dims dims, std::vector<float> data, std::optional<Spacing> spacing)
    : dims_(dims), data_(std::move(data)), spacing_(spacing) {
  check_dims(dims);
  if (data_.size() != dims.voxels()) {
    throw ShapeError("volume payload has " + std::to_string(data_.size()) + " values, dims " +
                     to_string(dims) + " need " + std::to_string(dims.voxels()));
  }
}

LabelVolume::LabelVolume(Dims dims) : dims_(dims) {
  check_dims(dims);
  labels_.assign(dims.voxels(), 0);
}

LabelVolume::LabelVolume(Dims dims, std::vector<std::uint8_t> labels)
    : dims_(dims), labels_(std::move(labels)) {
  check_dims(dims);
  if (labels_.size() != dims.voxels()) {
    throw ShapeError("label payload size does not match dims " + to_string(dims));
  }
}

void LabelVolume::validate() const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > kThrombus) {
      throw std::invalid_argument("label " + std::to_string(labels_[i]) + " at voxel " +
                                  std::to_string(i) + " outside {0,1,2,3}");
    }
  }
}

MaskTensor::MaskTensor(std::vector<std::string> classes, Dims dims, double fill)
    : classes_(std::move(classes)), dims_(dims) {
  check_dims(dims);
  if (classes_.empty()) throw ShapeError("mask tensor needs at least one class");
  values_.assign(classes_.size() * dims.voxels(), fill);
}

void MaskTensor::validate() const {
  if (values_.size() != classes_.size() * dims_.voxels()) {
    throw ShapeError("mask tensor payload does not match C x dims");
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("mask value outside [0,1]");
    if (binary_ && v != 0.0 && v != 1.0) throw std::domain_error("binary mask holds non-{0,1} value");
  }
}

const ClassSpec& default_class_spec() {
  static const ClassSpec spec = {
      {"ALL", {kTrueLumen, kFalseLumen, kThrombus}},
      {"TL", {kTrueLumen}},
      {"FL", {kFalseLumen}},
  };
  return spec;
}

std::vector<std::string> default_class_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : default_class_spec()) names.push_back(name);
  return names;
}

MaskTensor labels_to_masks(const LabelVolume& lv, const ClassSpec& spec) {
  lv.validate();
  std::vector<std::string> names;
  names.reserve(spec.size());
  for (const auto& [name, _] : spec) names.push_back(name);
  MaskTensor m(std::move(names), lv.dims());
  const std::size_t n = lv.size();
  for (std::size_t c = 0; c < spec.size(); ++c) {
    // Lookup table over the four legal labels.
    std::array<double, 4> hit{};
    for (int l : spec[c].second) {
      if (l < 0 || l > 3) throw std::invalid_argument("class spec references label outside {0..3}");
      hit[static_cast<std::size_t>(l)] = 1.0;
    }
    double* ch = m.channel(c);
    for (std::size_t i = 0; i < n; ++i) ch[i] = hit[lv[i]];
  }
  m.set_binary(true);
  return m;
}

MaskTensor binarize(const MaskTensor& m, double threshold) {
  MaskTensor out = m;
  for (double& v : out.values()) v = v > threshold ? 1.0 : 0.0;
  out.set_binary(true);
  return out;
}

void DatasetSplit::check_disjoint() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : labeled) ids.insert(s.id);
  for (const auto& s : unlabeled) {
    if (ids.count(s.id)) throw std::invalid_argument("sample '" + s.id + "' is both labeled and unlabeled");
  }
}

}  // namespace semiseg
