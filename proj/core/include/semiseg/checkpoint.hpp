#pragma once

#include <filesystem>

#include "semiseg/network.hpp"

namespace semiseg {

/// Binary checkpoint: "SSCK", u32 manifest length, JSON manifest (network
/// config, teacher flag, tensor table), then float32 little-endian values.
void save_checkpoint(const SegmentationModel& m, const std::filesystem::path& path, bool is_teacher);

struct LoadedCheckpoint {
  SegmentationModel model;
  bool is_teacher = false;
};

/// Throws IoError on a malformed file and ShapeError when the tensor table does
/// not match the architecture named in the manifest.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace semiseg
