#pragma once

#include <array>

#include "semiseg/volume.hpp"

namespace semiseg {

/// Intensity windowing, erosion mask, exponential normalisation and cubic resampling.
struct PreprocessConfig {
  double vmin = 1100.0;
  double vmax = 1600.0;
  double exp_coef = 1.3;
  std::array<std::size_t, 3> erosion_window{2, 2, 1};
  double std_epsilon = 1e-6;
  double exp_clamp = 20.0;
  Dims target_dims{128, 128, 128};
  std::size_t xy_resize = 192;
  std::size_t xy_border_crop = 32;

  /// Throws std::invalid_argument on vmin >= vmax, exp_coef <= 0, zero window
  /// components, or a resize/crop combination that does not land on target_dims.
  void validate() const;

  /// Identity geometry for volumes already at `edge`^3.
  static PreprocessConfig for_edge(std::size_t edge);
};

/// Voxels strictly below vmin or strictly above vmax become 0.
Volume clip_window(const Volume& v, double vmin, double vmax);

/// Moving minimum over a (wx, wy, wz) box. For an axis of length w the window
/// spans offsets [-(w/2), w - 1 - w/2] around the output voxel, so even lengths
/// lean towards lower indices. Out-of-range reads reflect about the edge
/// (d c b a | a b c d | d c b a).
Volume grey_erosion(const Volume& v, std::array<std::size_t, 3> window);

/// Zero every voxel where `eroded` is zero.
Volume mask_zero(const Volume& v, const Volume& eroded);

/// Subtract twice the mean, standardise, clamp, exponentiate, min-max to [0,1].
/// A constant input yields an all-zero volume.
Volume normalize_exp(const Volume& v, double exp_coef, double std_epsilon = 1e-6, double exp_clamp = 20.0);

/// Trilinear (half-pixel aligned) resampling of an image to `out` dims.
Volume resize_trilinear(const Volume& v, Dims out);
/// Nearest-neighbour resampling of labels to `out` dims.
LabelVolume resize_nearest(const LabelVolume& lv, Dims out);

/// XY to xy_resize^2, crop xy_border_crop from each XY border, Z to target z.
Volume resize_crop(const Volume& v, const PreprocessConfig& cfg);
LabelVolume resize_crop(const LabelVolume& lv, const PreprocessConfig& cfg);

/// resize_crop -> clip_window -> grey_erosion -> mask_zero -> normalize_exp.
Volume preprocess_pipeline(const Volume& v, const PreprocessConfig& cfg);

}  // namespace semiseg
