#include "semiseg/augment.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "semiseg/random.hpp"

namespace semiseg {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 6> kPerms = {{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
}};

std::size_t cubic_edge(const Dims& d) {
  if (!d.cubic()) throw ShapeError("spatial transforms need a cubic grid, got " + to_string(d));
  return d.nx;
}

}  // namespace

int SpatialTransform::determinant() const {
  // Sign of the permutation times the product of the axis signs.
  int inversions = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (perm[static_cast<std::size_t>(i)] > perm[static_cast<std::size_t>(j)]) ++inversions;
  int det = inversions % 2 == 0 ? 1 : -1;
  for (bool f : flip) det *= f ? -1 : 1;
  return det;
}

std::size_t SpatialTransform::group_index() const {
  const auto it = std::find(kPerms.begin(), kPerms.end(), perm);
  if (it == kPerms.end()) throw std::logic_error("transform holds an invalid axis permutation");
  const auto p = static_cast<std::size_t>(it - kPerms.begin());
  return p * 8 + (flip[0] ? 1u : 0u) + (flip[1] ? 2u : 0u) + (flip[2] ? 4u : 0u);
}

std::string SpatialTransform::to_json() const {
  nlohmann::json j;
  j["perm"] = {perm[0], perm[1], perm[2]};
  j["signs"] = {int(flip[0]), int(flip[1]), int(flip[2])};
  j["seed"] = seed;
  return j.dump();
}

SpatialTransform SpatialTransform::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SpatialTransform t;
  const auto perm = j.at("perm").get<std::vector<int>>();
  const auto signs = j.at("signs").get<std::vector<int>>();
  if (perm.size() != 3 || signs.size() != 3) throw std::invalid_argument("transform json needs 3 perm/sign entries");
  for (std::size_t i = 0; i < 3; ++i) {
    t.perm[i] = static_cast<std::uint8_t>(perm[i]);
    t.flip[i] = signs[i] != 0;
  }
  t.seed = j.value("seed", std::uint64_t{0});
  if (std::find(kPerms.begin(), kPerms.end(), t.perm) == kPerms.end()) {
    throw std::invalid_argument("transform json holds an invalid permutation");
  }
  return t;
}

SpatialTransform transform_from_index(std::size_t index) {
  if (index >= kTransformGroupSize) throw std::out_of_range("transform index must be < 48");
  SpatialTransform t;
  t.perm = kPerms[index / 8];
  const std::size_t bits = index % 8;
  t.flip = {(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0};
  return t;
}

std::vector<SpatialTransform> all_transforms() {
  std::vector<SpatialTransform> all;
  all.reserve(kTransformGroupSize);
  for (std::size_t i = 0; i < kTransformGroupSize; ++i) all.push_back(transform_from_index(i));
  return all;
}

SpatialTransform sample_transform(std::uint64_t seed) {
  SpatialTransform t = transform_from_index(mix_seed(seed, 0x41554721) % kTransformGroupSize);
  t.seed = seed;
  return t;
}

SpatialTransform invert(const SpatialTransform& t) {
  SpatialTransform u;
  for (std::size_t i = 0; i < 3; ++i) {
    u.perm[t.perm[i]] = static_cast<std::uint8_t>(i);
    u.flip[t.perm[i]] = t.flip[i];
  }
  u.seed = t.seed;
  return u;
}

SpatialTransform compose(const SpatialTransform& outer, const SpatialTransform& inner) {
  SpatialTransform c;
  for (std::size_t i = 0; i < 3; ++i) {
    c.perm[i] = inner.perm[outer.perm[i]];
    c.flip[i] = outer.flip[i] != inner.flip[outer.perm[i]];
  }
  return c;
}

std::vector<std::size_t> transform_index_map(const SpatialTransform& t, std::size_t n) {
  std::vector<std::size_t> map(n * n * n);
  std::array<std::size_t, 3> o{};
  std::array<std::size_t, 3> a{};
  std::size_t dst = 0;
  for (o[2] = 0; o[2] < n; ++o[2])
    for (o[1] = 0; o[1] < n; ++o[1])
      for (o[0] = 0; o[0] < n; ++o[0], ++dst) {
        for (std::size_t i = 0; i < 3; ++i) a[t.perm[i]] = t.flip[i] ? n - 1 - o[i] : o[i];
        map[dst] = a[0] + n * (a[1] + n * a[2]);
      }
  return map;
}

Volume apply_transform(const SpatialTransform& t, const Volume& v) {
  const std::size_t n = cubic_edge(v.dims());
  if (t.is_identity()) return v;
  const auto map = transform_index_map(t, n);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[map[i]];
  std::optional<Spacing> spacing;
  if (v.spacing()) {
    const auto& s = *v.spacing();
    spacing = Spacing{s[t.perm[0]], s[t.perm[1]], s[t.perm[2]]};
  }
  return Volume(v.dims(), std::move(out), spacing);
}

MaskTensor apply_transform(const SpatialTransform& t, const MaskTensor& m) {
  const std::size_t n = cubic_edge(m.dims());
  if (t.is_identity()) return m;
  const auto map = transform_index_map(t, n);
  MaskTensor out = m;
  const std::size_t vox = m.channel_size();
  for (std::size_t c = 0; c < m.channels(); ++c) {
    const double* src = m.channel(c);
    double* dst = out.channel(c);
    for (std::size_t i = 0; i < vox; ++i) dst[i] = src[map[i]];
  }
  return out;
}

LabelVolume apply_transform(const SpatialTransform& t, const LabelVolume& lv) {
  const std::size_t n = cubic_edge(lv.dims());
  if (t.is_identity()) return lv;
  const auto map = transform_index_map(t, n);
  LabelVolume out(lv.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lv[map[i]];
  return out;
}

}  // namespace semiseg
