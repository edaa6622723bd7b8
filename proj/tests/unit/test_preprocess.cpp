#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "semiseg/preprocess.hpp"

using namespace semiseg;
using semiseg::testing::random_volume;

namespace {

Volume formula_volume() {
  Volume v({5, 4, 3});
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) v.at(x, y, z) = static_cast<float>((x * 7 + y * 13 + z * 29 + x * y * 3) % 17);
  return v;
}

std::vector<float> as_floats(std::initializer_list<int> xs) {
  std::vector<float> out;
  for (int x : xs) out.push_back(static_cast<float>(x));
  return out;
}

}  // namespace

TEST_CASE("clip window") {
  const Volume v({3, 1, 1}, std::vector<float>{1000.0f, 1200.0f, 1700.0f});
  CHECK(clip_window(v, 1100, 1600).data() == std::vector<float>{0.0f, 1200.0f, 0.0f});
  const Volume inside({2, 1, 1}, std::vector<float>{1100.0f, 1600.0f});
  CHECK(clip_window(inside, 1100, 1600) == inside);
  const Volume outside({2, 1, 1}, std::vector<float>{0.0f, 5000.0f});
  CHECK(clip_window(outside, 1100, 1600).data() == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("clip keeps the order of surviving voxels") {
  const Volume v = random_volume({6, 6, 6}, 3, 900, 1800);
  const Volume c = clip_window(v, 1100, 1600);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (c[i] == 0.0f || c[i + 1] == 0.0f) continue;
    CHECK((v[i] < v[i + 1]) == (c[i] < c[i + 1]));
  }
}

TEST_CASE("grey erosion reference values") {
  CHECK(grey_erosion(Volume({3, 1, 1}, std::vector<float>{5, 1, 9}), {2, 1, 1}).data() ==
        std::vector<float>{5, 1, 1});
  // Frozen from scipy.ndimage.grey_erosion(mode="reflect") on formula_volume().
  CHECK(grey_erosion(formula_volume(), {2, 2, 1}).data() ==
        as_floats({0, 0, 7, 4, 4, 0, 0, 6, 4, 2, 9, 5, 1, 1, 2, 5, 4, 1, 1, 1, 12, 2, 2, 9, 6, 8, 1, 1, 4, 4,
                   4, 0, 0, 4, 4, 0, 0, 0, 9, 5, 7, 7, 4, 4, 1, 3, 3, 4, 4, 1, 3, 3, 6, 4, 0, 12, 11, 8, 4, 0}));
  CHECK(grey_erosion(formula_volume(), {3, 1, 2}).data() ==
        as_floats({0, 0, 4, 4, 4, 6, 6, 6, 2, 2, 5, 1, 1, 1, 10, 4, 3, 2, 1, 1, 0, 0, 2, 4, 4, 1, 1, 1, 2, 2,
                   0, 0, 0, 1, 5, 0, 0, 2, 1, 1, 2, 2, 2, 1, 1, 1, 1, 1, 4, 4, 0, 0, 0, 0, 0, 0, 0, 9, 8, 8}));
}

TEST_CASE("grey erosion properties") {
  const Volume v = random_volume({7, 6, 5}, 9, -5, 5);
  CHECK(grey_erosion(v, {1, 1, 1}) == v);
  const Volume c({4, 4, 4}, 3.5f);
  CHECK(grey_erosion(c, {2, 2, 1}) == c);
  const Volume e = grey_erosion(v, {2, 2, 1});
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(e[i] <= v[i]);
  CHECK_THROWS_AS(grey_erosion(v, {0, 1, 1}), std::invalid_argument);
}

TEST_CASE("mask zero") {
  const Volume v({2, 1, 1}, std::vector<float>{3, 4});
  CHECK(mask_zero(v, Volume({2, 1, 1}, std::vector<float>{0, 2})).data() == std::vector<float>{0, 4});
  CHECK(mask_zero(v, Volume({2, 1, 1}, 1.0f)) == v);
  CHECK(mask_zero(v, Volume({2, 1, 1}, 0.0f)).data() == std::vector<float>{0, 0});
  CHECK_THROWS_AS(mask_zero(v, Volume({1, 1, 1})), ShapeError);
}

TEST_CASE("exponential normalisation") {
  SUBCASE("range") {
    const Volume out = normalize_exp(random_volume({5, 5, 5}, 1, 0, 1000), 1.3);
    const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
    CHECK(*lo == 0.0f);
    CHECK(*hi == 1.0f);
  }
  SUBCASE("constant input gives zeros") {
    const Volume out = normalize_exp(Volume({3, 3, 3}, 42.0f), 1.3);
    for (float x : out.data()) CHECK(x == 0.0f);
  }
  SUBCASE("2x2x1 against the reference routine") {
    const Volume v({2, 2, 1}, std::vector<float>{0.0f, 1200.0f, 1350.0f, 1500.0f});
    std::vector<double> d(v.data().begin(), v.data().end());
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= 4.0;
    for (double& x : d) x -= 2.0 * mean;
    double m2 = 0.0;
    for (double x : d) m2 += x + 1e-6;
    m2 /= 4.0;
    double var = 0.0;
    for (double x : d) var += (x + 1e-6 - m2) * (x + 1e-6 - m2);
    const double sd = std::sqrt(var / 4.0);
    for (double& x : d) x = std::exp(1.3 * (x / sd));
    const double lo = *std::min_element(d.begin(), d.end());
    for (double& x : d) x -= lo;
    const double hi = *std::max_element(d.begin(), d.end());
    const Volume out = normalize_exp(v, 1.3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(out[i] - d[i] / hi) < 1e-6);
  }
  SUBCASE("positive rescaling inside the clamp region") {
    const Volume v = random_volume({4, 4, 4}, 5, 100, 200);
    Volume scaled = v;
    for (float& x : scaled.data()) x *= 4.0f;
    const Volume a = normalize_exp(v, 1.3);
    const Volume b = normalize_exp(scaled, 1.3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  }
}

TEST_CASE("resampling") {
  SUBCASE("identity at target dims") {
    const Volume v = random_volume({8, 8, 8}, 2);
    CHECK(resize_crop(v, PreprocessConfig::for_edge(8)).data() == v.data());
  }
  SUBCASE("constant stays constant") {
    const Volume out = resize_trilinear(Volume({5, 7, 3}, 2.5f), {11, 4, 9});
    for (float x : out.data()) CHECK(x == doctest::Approx(2.5f));
  }
  SUBCASE("default geometry lands on 128 cubed") {
    PreprocessConfig cfg;
    const Volume big({384, 384, 256}, 1.0f);
    CHECK(resize_crop(big, cfg).dims() == Dims{128, 128, 128});
  }
  SUBCASE("nearest keeps label values") {
    LabelVolume lv({4, 4, 4});
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = static_cast<std::uint8_t>(i % 4);
    const LabelVolume out = resize_nearest(lv, {7, 3, 5});
    for (auto l : out.labels()) CHECK(l <= 3);
  }
}

TEST_CASE("pipeline") {
  const PreprocessConfig cfg = PreprocessConfig::for_edge(8);
  const Volume v = random_volume({8, 8, 8}, 77, 900, 1800);
  const Volume a = preprocess_pipeline(v, cfg);
  CHECK(a == preprocess_pipeline(v, cfg));
  for (float x : a.data()) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
  }
  PreprocessConfig bad = cfg;
  bad.vmin = 2000;
  CHECK_THROWS_AS(preprocess_pipeline(v, bad), std::invalid_argument);
}
