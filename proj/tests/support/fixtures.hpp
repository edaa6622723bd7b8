#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "semiseg/network.hpp"
#include "semiseg/phantom.hpp"
#include "semiseg/preprocess.hpp"
#include "semiseg/random.hpp"
#include "semiseg/volume.hpp"

namespace semiseg::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("semiseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Volume random_volume(Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Volume v(d);
  for (float& x : v.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

inline MaskTensor random_mask(std::size_t classes, Dims d, std::uint64_t seed, bool binary, double p_on = 0.5) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("C" + std::to_string(c));
  MaskTensor m(names, d);
  Rng rng(seed);
  for (double& v : m.values()) v = binary ? (rng.uniform() < p_on ? 1.0 : 0.0) : rng.uniform(0.02, 0.98);
  m.set_binary(binary);
  return m;
}

inline MaskTensor with_names(MaskTensor m, const std::vector<std::string>& names) {
  MaskTensor out(names, m.dims());
  out.values() = m.values();
  out.set_binary(m.binary());
  return out;
}

/// Small network for fast checks: 8^3 or 16^3 input, two stages.
inline NetworkConfig tiny_network(std::size_t edge = 8) {
  NetworkConfig cfg;
  cfg.stage_channels = {4, 8};
  cfg.bottleneck_dim = 8;
  cfg.head_channels = 2;
  cfg.input_size = edge;
  return cfg;
}

/// Preprocessed phantom cases at `edge`^3.
inline std::vector<LabeledSample> phantom_cases(std::size_t n, std::size_t edge, std::uint64_t seed,
                                                const std::string& prefix = "case") {
  std::vector<LabeledSample> out;
  const PreprocessConfig cfg = PreprocessConfig::for_edge(edge);
  for (std::size_t i = 0; i < n; ++i) {
    const Phantom p = generate_phantom(mix_seed(seed, i), edge);
    out.push_back({prefix + std::to_string(i), preprocess_pipeline(p.image, cfg), labels_to_masks(p.labels)});
  }
  return out;
}

inline std::vector<UnlabeledSample> strip_labels(const std::vector<LabeledSample>& cases) {
  std::vector<UnlabeledSample> out;
  for (const auto& c : cases) out.push_back({c.id, c.image});
  return out;
}

}  // namespace semiseg::testing
