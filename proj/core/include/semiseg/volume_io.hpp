#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "semiseg/volume.hpp"

namespace semiseg {

/// VOL1 on-disk layout. 64-byte header:
///   [0,4)   magic "VOL1"
///   [4]     dtype code (0 = float32, 1 = int16)
///   [5,17)  nx, ny, nz as little-endian uint32
///   [17,29) spacing sx, sy, sz as little-endian float32 (all zero = unset)
///   [29,64) zero padding
/// followed by the little-endian voxel payload, x fastest.
namespace vol1 {
inline constexpr std::size_t kHeaderSize = 64;
inline constexpr char kMagic[4] = {'V', 'O', 'L', '1'};
enum class DType : std::uint8_t { kFloat32 = 0, kInt16 = 1 };
}  // namespace vol1

/// Reads a VOL1 file, or a NIfTI-1 file when the extension is `.nii`.
Volume load_volume(const std::filesystem::path& path);
/// Writes a float32 VOL1 file.
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Label volumes are stored as int16 VOL1 (or NIfTI-1) and validated on load.
LabelVolume load_label_volume(const std::filesystem::path& path);
void save_label_volume(const LabelVolume& lv, const std::filesystem::path& path);

/// Uncompressed single-file NIfTI-1 (`n+1`), float32 or int16, little-endian.
/// Orientation fields are ignored; scl_slope/scl_inter are applied when slope != 0.
Volume load_nifti(const std::filesystem::path& path);
void save_nifti(const Volume& v, const std::filesystem::path& path);

/// Optional `<path>.json` sidecar of the form {"labels": {"1":"TL","2":"FL","3":"FLT"}}.
using LabelNames = std::map<int, std::string>;
LabelNames default_label_names();
void write_label_sidecar(const std::filesystem::path& label_path, const LabelNames& names = default_label_names());
LabelNames read_label_sidecar(const std::filesystem::path& label_path);

}  // namespace semiseg
