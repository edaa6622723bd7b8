#pragma once

#include <string>
#include <vector>

#include "semiseg/volume.hpp"

namespace semiseg {

enum class Reduction { kMean, kSum };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);

struct LossConfig {
  double gamma = 2.0;                      ///< focal focusing parameter
  std::vector<double> alpha{0.8, 0.9, 1.5};  ///< per-class focal weights
  double w_gdl = 1.0;
  double w_fl = 0.8;
  double epsilon = 1e-5;  ///< smoothing term of DICE and GDL
  Reduction reduction = Reduction::kMean;

  /// Throws std::invalid_argument unless alpha has `classes` entries, all
  /// weights are non-negative and epsilon is positive.
  void validate(std::size_t classes) const;
};

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside log/power terms.
inline constexpr double kProbClamp = 1e-6;

/// A scalar loss and its gradient with respect to every prediction value,
/// laid out like MaskTensor::values().
struct LossWithGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Soft DICE per class: (2 sum(p*y) + eps) / (sum p^2 + sum y^2 + eps).
std::vector<double> dice_score(const MaskTensor& pred, const MaskTensor& target, double epsilon = 1e-5);

/// 1 - (2 sum_c w_c sum(p*y) + eps) / (sum_c w_c (sum p^2 + sum y^2) + eps), w_c = 1/(sum y)^2.
/// Classes absent from the target borrow the largest present weight (0 when none is present).
double generalized_dice_loss(const MaskTensor& pred, const MaskTensor& target, double epsilon = 1e-5);
LossWithGrad generalized_dice_loss_grad(const MaskTensor& pred, const MaskTensor& target, double epsilon = 1e-5);

/// Per-channel binary focal loss weighted by alpha_c, mean or sum reduced.
double focal_loss(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg);
LossWithGrad focal_loss_grad(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg);

/// w_gdl * GDL + w_fl * focal.
double combined_loss(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg);
LossWithGrad combined_loss_grad(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg);

/// Per-class GDL weights after the absent-class rule.
std::vector<double> gdl_class_weights(const MaskTensor& target);

}  // namespace semiseg
