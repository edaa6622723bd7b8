#include "semiseg/ema_teacher.hpp"

#include <stdexcept>

namespace semiseg {

void TeacherState::validate() const {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("teacher: mu must lie in [0,1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("teacher: threshold must lie in (0,1)");
}

TeacherState init_teacher(const SegmentationModel& student, double mu, double threshold) {
  TeacherState t{student, mu, threshold};
  t.validate();
  return t;
}

void update_teacher(TeacherState& teacher, const SegmentationModel& student) {
  teacher.validate();
  if (!teacher.model.params.congruent(student.params)) {
    throw ShapeError("teacher and student parameter structures differ");
  }
  const double mu = teacher.mu;
  auto& dst = teacher.model.params.tensors();
  const auto& src = student.params.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto& e = dst[i].values;
    const auto& s = src[i].values;
    for (std::size_t j = 0; j < e.size(); ++j) e[j] = mu * e[j] + (1.0 - mu) * s[j];
  }
}

MaskTensor predict_pseudo_label(const TeacherState& teacher, const Volume& x_unlabeled,
                                const SpatialTransform& transform) {
  const MaskTensor soft = forward(teacher.model, x_unlabeled);
  return binarize(apply_transform(transform, soft), teacher.threshold);
}

}  // namespace semiseg
