#pragma once

#include <cstdint>
#include <utility>

#include "semiseg/volume.hpp"

namespace semiseg {

/// Geometry and intensity settings for synthetic dissection phantoms.
///
/// A phantom holds two adjacent, non-overlapping curved tubes running along z
/// (true lumen, label 1, and false lumen, label 2) that spiral around a shared
/// centre line, and, with probability `thrombus_probability`, a thrombus blob
/// (label 3) attached to the outer wall of the false lumen. Intensities are in
/// raw scanner units so that the default preprocessing window keeps the lumens
/// and discards soft tissue. Radii are given as fractions of the grid edge.
struct PhantomParams {
  double tl_radius = 0.10;
  double fl_radius = 0.12;
  double radius_jitter = 0.15;
  double thrombus_radius = 0.11;
  double thrombus_probability = 0.68;
  double noise_sd = 40.0;
  double background = 1030.0;
  double tl_intensity = 1460.0;
  double fl_intensity = 1340.0;
  double thrombus_intensity = 1190.0;
  double intensity_jitter = 25.0;
  double wander = 0.08;  ///< centre-line excursion amplitude, fraction of edge
  bool spine = true;     ///< bright (above window) distractor column
};

struct Phantom {
  Volume image;
  LabelVolume labels;
  bool has_thrombus = false;
};

/// Pure function of (seed, edge, params). Throws std::invalid_argument when the
/// edge is too small for the requested radii or the contrast is below 3 noise SDs.
Phantom generate_phantom(std::uint64_t seed, std::size_t edge, const PhantomParams& params = {});

/// Overload matching the generic dims signature; dims must be cubic.
Phantom generate_phantom(std::uint64_t seed, Dims dims, const PhantomParams& params = {});

}  // namespace semiseg
