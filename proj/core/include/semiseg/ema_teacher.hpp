#pragma once

#include "semiseg/augment.hpp"
#include "semiseg/network.hpp"

namespace semiseg {

/// Exponential-moving-average copy of the student used to produce pseudo-labels.
struct TeacherState {
  SegmentationModel model;  ///< same config as the student; parameters are theta_ema
  double mu = 0.95;
  double threshold = 0.5;

  /// Throws std::invalid_argument unless mu in [0,1] and threshold in (0,1).
  void validate() const;
};

/// Deep copy of the student's parameters.
TeacherState init_teacher(const SegmentationModel& student, double mu = 0.95, double threshold = 0.5);

/// theta_ema <- mu * theta_ema + (1 - mu) * theta. Throws ShapeError when the
/// parameter structures differ.
void update_teacher(TeacherState& teacher, const SegmentationModel& student);

/// Teacher forward on the untransformed volume, then the student's transform,
/// then binarisation at the threshold (strict >).
MaskTensor predict_pseudo_label(const TeacherState& teacher, const Volume& x_unlabeled,
                                const SpatialTransform& transform);

}  // namespace semiseg
