#include "semiseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "semiseg/config_json.hpp"

namespace semiseg {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const SegmentationModel& m, const std::filesystem::path& path, bool is_teacher) {
  nlohmann::json manifest;
  manifest["network"] = m.config;
  manifest["ema"] = is_teacher;
  auto& table = manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : m.params.tensors()) {
    table.push_back({{"name", t.name}, {"group", t.group}, {"shape", t.shape}, {"offset", offset},
                     {"count", t.values.size()}});
    offset += t.values.size();
  }
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : m.params.tensors()) {
    std::vector<float> buf(t.values.begin(), t.values.end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  std::uint32_t len = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad checkpoint magic in '" + path.string() + "'");
  if (!in.read(reinterpret_cast<char*>(&len), 4)) throw IoError("truncated checkpoint header");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw IoError("truncated checkpoint manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  LoadedCheckpoint r;
  r.model = build_model(manifest.at("network").get<NetworkConfig>(), 0);
  r.is_teacher = manifest.value("ema", false);
  auto& tensors = r.model.params.tensors();
  const auto& table = manifest.at("tensors");
  if (table.size() != tensors.size()) throw ShapeError("checkpoint tensor count does not match the architecture");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    const auto& e = table[i];
    if (e.at("name").get<std::string>() != t.name || e.at("shape").get<std::vector<std::size_t>>() != t.shape) {
      throw ShapeError("checkpoint tensor '" + e.at("name").get<std::string>() + "' does not match '" + t.name + "'");
    }
    std::vector<float> buf(t.values.size());
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw IoError("truncated checkpoint payload at '" + t.name + "'");
    }
    std::copy(buf.begin(), buf.end(), t.values.begin());
  }
  return r;
}

}  // namespace semiseg
