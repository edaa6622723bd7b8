#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "semiseg/volume.hpp"

namespace semiseg {

/// Compact multi-output 3D segmentation network.
///
/// Trunk: a full-resolution stem convolution, one stride-2 3x3x3 convolution
/// per encoder stage, a bottleneck (1x1 projection, learned additive
/// positional embedding, 1x1 projection back, residual), and a decoder that
/// upsamples with 2x2x2 transposed convolutions, adds the matching encoder
/// skip and fuses with a convolution (3x3x3 below full resolution, 1x1 at full
/// resolution). Heads: one small 1x1 block per class ending in a logistic unit,
/// so each output channel depends on exactly one head parameter group.
struct NetworkConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 3;
  std::vector<std::size_t> stage_channels{8, 16, 32};
  std::size_t downscale_factor = 2;
  std::size_t bottleneck_dim = 32;
  std::size_t head_channels = 4;
  std::size_t input_size = 32;  ///< cubic input edge; fixes the positional embedding grid
  double leaky_slope = 0.01;
  std::vector<std::string> class_names{"ALL", "TL", "FL"};

  /// Throws std::invalid_argument on empty stages, a class-name/count mismatch,
  /// or an input edge not divisible by downscale_factor^stages.
  void validate() const;
  [[nodiscard]] std::size_t bottleneck_edge() const;
};

struct ParamTensor {
  std::string name;
  std::string group;  ///< "trunk" or "head<c>"
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Ordered named parameter arrays.
class ParameterSet {
 public:
  std::vector<ParamTensor>& tensors() { return tensors_; }
  [[nodiscard]] const std::vector<ParamTensor>& tensors() const { return tensors_; }

  ParamTensor& add(std::string name, std::string group, std::vector<std::size_t> shape);
  [[nodiscard]] const ParamTensor& get(const std::string& name) const;
  ParamTensor& get(const std::string& name);
  [[nodiscard]] std::size_t count() const;
  /// Same names, groups and shapes in the same order.
  [[nodiscard]] bool congruent(const ParameterSet& other) const;
  /// FNV-1a over names and value bits.
  [[nodiscard]] std::uint64_t hash() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.tensors_.size() != b.tensors_.size()) return false;
    for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
      const auto& x = a.tensors_[i];
      const auto& y = b.tensors_[i];
      if (x.name != y.name || x.group != y.group || x.shape != y.shape || x.values != y.values) return false;
    }
    return true;
  }

 private:
  std::vector<ParamTensor> tensors_;
};

/// Gradient buffers aligned with a ParameterSet.
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const ParameterSet& params);

struct SegmentationModel {
  NetworkConfig config;
  ParameterSet params;
};

/// Deterministic (Kaiming-uniform) initialisation from `init_seed`.
SegmentationModel build_model(const NetworkConfig& cfg, std::uint64_t init_seed);

/// Activations retained for the backward pass. `T` is the compute precision.
template <typename T>
struct ForwardTrace;

/// Per-item prediction with values strictly inside (0,1). Throws ShapeError
/// when the volume is not input_size^3. Computes in float.
MaskTensor forward(const SegmentationModel& m, const Volume& x);
std::vector<MaskTensor> forward(const SegmentationModel& m, const std::vector<Volume>& batch);
/// Double-precision forward, used for numerical checks.
MaskTensor forward_f64(const SegmentationModel& m, const Volume& x);

/// Forward that keeps the trace needed by `backward`.
template <typename T>
class TrainingPass {
 public:
  TrainingPass();
  ~TrainingPass();
  TrainingPass(TrainingPass&&) noexcept;
  TrainingPass& operator=(TrainingPass&&) noexcept;

  const MaskTensor& forward(const SegmentationModel& m, const Volume& x);
  /// Accumulates d(loss)/d(theta) into `grads`, given d(loss)/d(prediction).
  void backward(const SegmentationModel& m, const std::vector<double>& grad_pred, Gradients& grads);
  [[nodiscard]] const MaskTensor& prediction() const { return prediction_; }

 private:
  std::unique_ptr<ForwardTrace<T>> trace_;
  MaskTensor prediction_;
};

extern template class TrainingPass<float>;
extern template class TrainingPass<double>;

}  // namespace semiseg
