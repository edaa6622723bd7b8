#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semiseg/volume.hpp"

namespace semiseg {

/// One of the 48 signed axis permutations of a cubic grid.
///
/// Output axis `i` reads input axis `perm[i]`, reversed when `flip[i]` is set:
///   out(o) = in(a) with a[perm[i]] = flip[i] ? n-1-o[i] : o[i].
/// Relocation only, so values (and binary masks) survive exactly.
struct SpatialTransform {
  std::array<std::uint8_t, 3> perm{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};
  std::uint64_t seed = 0;

  [[nodiscard]] bool is_identity() const { return perm == std::array<std::uint8_t, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2]; }
  /// Determinant of the signed permutation matrix: +1 for proper rotations.
  [[nodiscard]] int determinant() const;
  /// Index in [0, 48) enumerating (perm, flip) pairs.
  [[nodiscard]] std::size_t group_index() const;
  /// Compact JSON {"perm":[..],"signs":[..],"seed":n}; signs are 0/1 flip bits.
  [[nodiscard]] std::string to_json() const;
  static SpatialTransform from_json(const std::string& text);

  /// Same geometry; the seed is bookkeeping only.
  [[nodiscard]] bool same_geometry(const SpatialTransform& o) const { return perm == o.perm && flip == o.flip; }
  friend bool operator==(const SpatialTransform&, const SpatialTransform&) = default;
};

inline constexpr std::size_t kTransformGroupSize = 48;

/// Element `index` of the group (seed left at 0).
SpatialTransform transform_from_index(std::size_t index);
/// All 48 elements in index order.
std::vector<SpatialTransform> all_transforms();

/// Deterministic in seed, uniform over the group as the seed varies.
SpatialTransform sample_transform(std::uint64_t seed);

SpatialTransform invert(const SpatialTransform& t);
/// `outer` after `inner`.
SpatialTransform compose(const SpatialTransform& outer, const SpatialTransform& inner);

/// Throw ShapeError on non-cubic input.
Volume apply_transform(const SpatialTransform& t, const Volume& v);
MaskTensor apply_transform(const SpatialTransform& t, const MaskTensor& m);
LabelVolume apply_transform(const SpatialTransform& t, const LabelVolume& lv);

/// Source voxel index for every destination voxel of an n^3 grid.
std::vector<std::size_t> transform_index_map(const SpatialTransform& t, std::size_t n);

}  // namespace semiseg
