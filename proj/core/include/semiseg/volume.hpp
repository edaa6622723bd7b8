#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace semiseg {

/// Thrown when two tensors that must agree in shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on file-system or format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dims {
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;

  [[nodiscard]] std::size_t voxels() const { return nx * ny * nz; }
  [[nodiscard]] bool cubic() const { return nx == ny && ny == nz; }
  [[nodiscard]] std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + nx * (y + ny * z);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

using Spacing = std::array<float, 3>;

/// 3D scalar grid, x index fastest.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, float fill = 0.0f);
  Volume(Dims dims, std::vector<float> data, std::optional<Spacing> spacing = std::nullopt);

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] const std::vector<float>& data() const { return data_; }
  [[nodiscard]] std::vector<float>& data() { return data_; }
  [[nodiscard]] const std::optional<Spacing>& spacing() const { return spacing_; }
  void set_spacing(std::optional<Spacing> s) { spacing_ = s; }

  float& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }
  [[nodiscard]] float at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[dims_.index(x, y, z)];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_{};
  std::vector<float> data_ = std::vector<float>(1, 0.0f);
  std::optional<Spacing> spacing_;
};

enum Label : std::uint8_t { kBackground = 0, kTrueLumen = 1, kFalseLumen = 2, kThrombus = 3 };

/// Integer label per voxel in {0 background, 1 TL, 2 FL, 3 FLT}.
class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Dims dims);
  LabelVolume(Dims dims, std::vector<std::uint8_t> labels);

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return labels_.size(); }
  [[nodiscard]] const std::vector<std::uint8_t>& labels() const { return labels_; }
  [[nodiscard]] std::vector<std::uint8_t>& labels() { return labels_; }
  std::uint8_t& operator[](std::size_t i) { return labels_[i]; }
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) { return labels_[dims_.index(x, y, z)]; }
  [[nodiscard]] std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
    return labels_[dims_.index(x, y, z)];
  }

  /// Throws std::invalid_argument if any label is outside {0..3}.
  void validate() const;

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Dims dims_{};
  std::vector<std::uint8_t> labels_ = std::vector<std::uint8_t>(1, 0);
};

/// Per-class channels over a 3D grid, channel-major (channel, z, y, x).
class MaskTensor {
 public:
  MaskTensor() = default;
  MaskTensor(std::vector<std::string> classes, Dims dims, double fill = 0.0);

  [[nodiscard]] const std::vector<std::string>& classes() const { return classes_; }
  [[nodiscard]] std::size_t channels() const { return classes_.size(); }
  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] std::size_t channel_size() const { return dims_.voxels(); }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool binary() const { return binary_; }
  void set_binary(bool b) { binary_ = b; }

  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] std::vector<double>& values() { return values_; }
  double* channel(std::size_t c) { return values_.data() + c * channel_size(); }
  [[nodiscard]] const double* channel(std::size_t c) const { return values_.data() + c * channel_size(); }
  double& at(std::size_t c, std::size_t voxel) { return values_[c * channel_size() + voxel]; }
  [[nodiscard]] double at(std::size_t c, std::size_t voxel) const { return values_[c * channel_size() + voxel]; }

  /// Checks the [0,1] range and, when flagged binary, {0,1} membership.
  void validate() const;

  /// True when classes and dims agree.
  [[nodiscard]] bool same_layout(const MaskTensor& other) const {
    return classes_ == other.classes_ && dims_ == other.dims_;
  }

  friend bool operator==(const MaskTensor&, const MaskTensor&) = default;

 private:
  std::vector<std::string> classes_;
  Dims dims_{};
  std::vector<double> values_;
  bool binary_ = false;
};

/// Class name → set of integer labels that belong to it.
using ClassSpec = std::vector<std::pair<std::string, std::set<int>>>;

/// {ALL:{1,2,3}, TL:{1}, FL:{2}}.
const ClassSpec& default_class_spec();
std::vector<std::string> default_class_names();

MaskTensor labels_to_masks(const LabelVolume& lv, const ClassSpec& spec = default_class_spec());

/// Strict `> threshold` rule; result flagged binary.
MaskTensor binarize(const MaskTensor& m, double threshold);

/// A labelled case with a stable identity used for disjointness checks.
struct LabeledSample {
  std::string id;
  Volume image;
  MaskTensor mask;
};

struct UnlabeledSample {
  std::string id;
  Volume image;
};

struct DatasetSplit {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  std::uint64_t split_seed = 0;

  /// Throws if any id appears on both sides.
  void check_disjoint() const;
};

}  // namespace semiseg
