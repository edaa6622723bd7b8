#include "semiseg/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace semiseg {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put_le(std::vector<char>& buf, std::size_t offset, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    buf[offset + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
}

template <typename T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bits = static_cast<U>(bits | (static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b)));
  }
  return std::bit_cast<T>(bits);
}

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

bool is_nifti(const fs::path& path) { return path.extension() == ".nii"; }

struct RawGrid {
  Dims dims;
  std::optional<Spacing> spacing;
  std::vector<float> values;
};

std::vector<char> vol1_header(const Dims& d, vol1::DType dtype, const std::optional<Spacing>& spacing) {
  std::vector<char> buf(vol1::kHeaderSize, 0);
  std::memcpy(buf.data(), vol1::kMagic, 4);
  buf[4] = static_cast<char>(dtype);
  put_le<std::uint32_t>(buf, 5, static_cast<std::uint32_t>(d.nx));
  put_le<std::uint32_t>(buf, 9, static_cast<std::uint32_t>(d.ny));
  put_le<std::uint32_t>(buf, 13, static_cast<std::uint32_t>(d.nz));
  const Spacing s = spacing.value_or(Spacing{0.0f, 0.0f, 0.0f});
  put_le<float>(buf, 17, s[0]);
  put_le<float>(buf, 21, s[1]);
  put_le<float>(buf, 25, s[2]);
  return buf;
}

RawGrid read_vol1(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < vol1::kHeaderSize) throw IoError("'" + path.string() + "': truncated VOL1 header");
  if (std::memcmp(bytes.data(), vol1::kMagic, 4) != 0) throw IoError("'" + path.string() + "': bad VOL1 magic");
  const auto code = static_cast<std::uint8_t>(bytes[4]);
  if (code > 1) throw IoError("'" + path.string() + "': unsupported VOL1 dtype code " + std::to_string(code));
  const auto dtype = static_cast<vol1::DType>(code);

  RawGrid g;
  g.dims = {get_le<std::uint32_t>(&bytes[5]), get_le<std::uint32_t>(&bytes[9]), get_le<std::uint32_t>(&bytes[13])};
  if (g.dims.nx == 0 || g.dims.ny == 0 || g.dims.nz == 0) throw IoError("'" + path.string() + "': zero dimension");
  Spacing s{get_le<float>(&bytes[17]), get_le<float>(&bytes[21]), get_le<float>(&bytes[25])};
  if (s[0] != 0.0f || s[1] != 0.0f || s[2] != 0.0f) g.spacing = s;

  const std::size_t n = g.dims.voxels();
  const std::size_t width = dtype == vol1::DType::kFloat32 ? 4 : 2;
  const std::size_t payload = bytes.size() - vol1::kHeaderSize;
  if (payload != n * width) {
    throw IoError("'" + path.string() + "': payload holds " + std::to_string(payload / width) + " values, header " +
                  to_string(g.dims) + " declares " + std::to_string(n));
  }
  g.values.resize(n);
  const char* p = bytes.data() + vol1::kHeaderSize;
  if (dtype == vol1::DType::kFloat32) {
    for (std::size_t i = 0; i < n; ++i) g.values[i] = get_le<float>(p + 4 * i);
  } else {
    for (std::size_t i = 0; i < n; ++i) g.values[i] = static_cast<float>(get_le<std::int16_t>(p + 2 * i));
  }
  return g;
}

// NIfTI-1 header field offsets.
constexpr std::size_t kNiftiHeader = 348;
constexpr std::size_t kNiftiDim = 40;
constexpr std::size_t kNiftiDatatype = 70;
constexpr std::size_t kNiftiBitpix = 72;
constexpr std::size_t kNiftiPixdim = 76;
constexpr std::size_t kNiftiVoxOffset = 108;
constexpr std::size_t kNiftiSclSlope = 112;
constexpr std::size_t kNiftiSclInter = 116;
constexpr std::size_t kNiftiMagic = 344;
constexpr std::int16_t kNiftiInt16 = 4;
constexpr std::int16_t kNiftiFloat32 = 16;

RawGrid read_nifti_grid(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kNiftiHeader) throw IoError("'" + path.string() + "': truncated NIfTI header");
  if (get_le<std::uint32_t>(bytes.data()) != 348u) {
    throw IoError("'" + path.string() + "': not a little-endian NIfTI-1 file");
  }
  if (std::memcmp(&bytes[kNiftiMagic], "n+1", 4) != 0) {
    throw IoError("'" + path.string() + "': only single-file NIfTI-1 (n+1) is supported");
  }
  const auto ndim = get_le<std::int16_t>(&bytes[kNiftiDim]);
  if (ndim < 1 || ndim > 4) throw IoError("'" + path.string() + "': unsupported dimensionality");
  std::array<std::size_t, 3> extent{1, 1, 1};
  for (int i = 0; i < std::min<int>(ndim, 3); ++i) {
    const auto e = get_le<std::int16_t>(&bytes[kNiftiDim + 2 * (i + 1)]);
    if (e < 1) throw IoError("'" + path.string() + "': non-positive dimension");
    extent[static_cast<std::size_t>(i)] = static_cast<std::size_t>(e);
  }
  if (ndim == 4 && get_le<std::int16_t>(&bytes[kNiftiDim + 8]) > 1) {
    throw IoError("'" + path.string() + "': 4D NIfTI with more than one frame is unsupported");
  }
  const auto datatype = get_le<std::int16_t>(&bytes[kNiftiDatatype]);
  if (datatype != kNiftiInt16 && datatype != kNiftiFloat32) {
    throw IoError("'" + path.string() + "': unsupported NIfTI datatype " + std::to_string(datatype));
  }
  const std::size_t width = datatype == kNiftiFloat32 ? 4 : 2;
  const auto vox_offset = static_cast<std::size_t>(get_le<float>(&bytes[kNiftiVoxOffset]));
  const float slope = get_le<float>(&bytes[kNiftiSclSlope]);
  const float inter = get_le<float>(&bytes[kNiftiSclInter]);

  RawGrid g;
  g.dims = {extent[0], extent[1], extent[2]};
  Spacing s{get_le<float>(&bytes[kNiftiPixdim + 4]), get_le<float>(&bytes[kNiftiPixdim + 8]),
            get_le<float>(&bytes[kNiftiPixdim + 12])};
  if (s[0] > 0.0f || s[1] > 0.0f || s[2] > 0.0f) g.spacing = s;
  const std::size_t n = g.dims.voxels();
  if (vox_offset < kNiftiHeader || bytes.size() < vox_offset + n * width) {
    throw IoError("'" + path.string() + "': NIfTI payload shorter than header declares");
  }
  g.values.resize(n);
  const char* p = bytes.data() + vox_offset;
  for (std::size_t i = 0; i < n; ++i) {
    float v = width == 4 ? get_le<float>(p + 4 * i) : static_cast<float>(get_le<std::int16_t>(p + 2 * i));
    if (slope != 0.0f && std::isfinite(slope)) v = v * slope + inter;
    g.values[i] = v;
  }
  return g;
}

void write_nifti_grid(const fs::path& path, const Dims& d, const std::optional<Spacing>& spacing,
                      const std::vector<float>& values, bool as_int16) {
  constexpr std::size_t vox_offset = 352;
  const std::size_t width = as_int16 ? 2 : 4;
  std::vector<char> buf(vox_offset + values.size() * width, 0);
  put_le<std::uint32_t>(buf, 0, 348u);
  put_le<std::int16_t>(buf, kNiftiDim, 3);
  put_le<std::int16_t>(buf, kNiftiDim + 2, static_cast<std::int16_t>(d.nx));
  put_le<std::int16_t>(buf, kNiftiDim + 4, static_cast<std::int16_t>(d.ny));
  put_le<std::int16_t>(buf, kNiftiDim + 6, static_cast<std::int16_t>(d.nz));
  for (int i = 4; i < 8; ++i) put_le<std::int16_t>(buf, kNiftiDim + 2 * i, 1);
  put_le<std::int16_t>(buf, kNiftiDatatype, as_int16 ? kNiftiInt16 : kNiftiFloat32);
  put_le<std::int16_t>(buf, kNiftiBitpix, static_cast<std::int16_t>(8 * width));
  const Spacing s = spacing.value_or(Spacing{1.0f, 1.0f, 1.0f});
  put_le<float>(buf, kNiftiPixdim, 1.0f);
  put_le<float>(buf, kNiftiPixdim + 4, s[0]);
  put_le<float>(buf, kNiftiPixdim + 8, s[1]);
  put_le<float>(buf, kNiftiPixdim + 12, s[2]);
  put_le<float>(buf, kNiftiVoxOffset, static_cast<float>(vox_offset));
  std::memcpy(&buf[kNiftiMagic], "n+1", 4);
  char* p = buf.data() + vox_offset;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (as_int16) {
      const auto v = static_cast<std::int16_t>(values[i]);
      auto bits = std::bit_cast<std::uint16_t>(v);
      p[2 * i] = static_cast<char>(bits & 0xFF);
      p[2 * i + 1] = static_cast<char>(bits >> 8);
    } else {
      auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) p[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  write_all(path, buf);
}

}  // namespace

Volume load_volume(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("'" + path.string() + "' does not exist");
  RawGrid g = is_nifti(path) ? read_nifti_grid(path) : read_vol1(path);
  return Volume(g.dims, std::move(g.values), g.spacing);
}

void save_volume(const Volume& v, const fs::path& path) {
  if (is_nifti(path)) {
    write_nifti_grid(path, v.dims(), v.spacing(), v.data(), false);
    return;
  }
  auto buf = vol1_header(v.dims(), vol1::DType::kFloat32, v.spacing());
  const std::size_t n = v.size();
  buf.resize(vol1::kHeaderSize + 4 * n);
  for (std::size_t i = 0; i < n; ++i) put_le<float>(buf, vol1::kHeaderSize + 4 * i, v[i]);
  write_all(path, buf);
}

Volume load_nifti(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("'" + path.string() + "' does not exist");
  RawGrid g = read_nifti_grid(path);
  return Volume(g.dims, std::move(g.values), g.spacing);
}

void save_nifti(const Volume& v, const fs::path& path) {
  write_nifti_grid(path, v.dims(), v.spacing(), v.data(), false);
}

LabelVolume load_label_volume(const fs::path& path) {
  const Volume raw = load_volume(path);
  std::vector<std::uint8_t> labels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = raw[i];
    if (!(v >= 0.0f && v <= 3.0f) || v != std::floor(v)) {
      throw std::invalid_argument("'" + path.string() + "': label value " + std::to_string(v) + " outside {0,1,2,3}");
    }
    labels[i] = static_cast<std::uint8_t>(v);
  }
  return LabelVolume(raw.dims(), std::move(labels));
}

void save_label_volume(const LabelVolume& lv, const fs::path& path) {
  lv.validate();
  if (is_nifti(path)) {
    std::vector<float> values(lv.labels().begin(), lv.labels().end());
    write_nifti_grid(path, lv.dims(), std::nullopt, values, true);
    return;
  }
  auto buf = vol1_header(lv.dims(), vol1::DType::kInt16, std::nullopt);
  const std::size_t n = lv.size();
  buf.resize(vol1::kHeaderSize + 2 * n);
  for (std::size_t i = 0; i < n; ++i) put_le<std::int16_t>(buf, vol1::kHeaderSize + 2 * i, std::int16_t{lv[i]});
  write_all(path, buf);
}

LabelNames default_label_names() { return {{1, "TL"}, {2, "FL"}, {3, "FLT"}}; }

void write_label_sidecar(const fs::path& label_path, const LabelNames& names) {
  nlohmann::json j;
  for (const auto& [code, name] : names) j["labels"][std::to_string(code)] = name;
  const fs::path side = label_path.string() + ".json";
  std::ofstream out(side);
  if (!out) throw IoError("cannot write sidecar '" + side.string() + "'");
  out << j.dump(2) << '\n';
}

LabelNames read_label_sidecar(const fs::path& label_path) {
  const fs::path side = label_path.string() + ".json";
  if (!fs::exists(side)) return default_label_names();
  std::ifstream in(side);
  const auto j = nlohmann::json::parse(in);
  LabelNames names;
  for (const auto& [code, name] : j.at("labels").items()) names[std::stoi(code)] = name.get<std::string>();
  return names;
}

}  // namespace semiseg
