#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "semiseg/checkpoint.hpp"
#include "semiseg/losses.hpp"
#include "semiseg/network.hpp"

using namespace semiseg;
using semiseg::testing::random_mask;
using semiseg::testing::random_volume;
using semiseg::testing::tiny_network;
using semiseg::testing::with_names;

namespace {

// Layer arithmetic, written independently of the parameter declarations.
std::size_t expected_parameter_count(const NetworkConfig& c) {
  const auto& ch = c.stage_channels;
  const std::size_t S = ch.size();
  std::size_t m = c.input_size;
  for (std::size_t i = 0; i < S; ++i) m /= 2;
  std::size_t n = 27 * c.in_channels * ch[0] + ch[0];
  for (std::size_t i = 0; i < S; ++i) n += 27 * (i == 0 ? ch[0] : ch[i - 1]) * ch[i] + ch[i];
  const std::size_t b = c.bottleneck_dim;
  n += ch[S - 1] * b + b + b * m * m * m + b * ch[S - 1] + ch[S - 1];
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t t = s == 0 ? ch[0] : ch[s - 1];
    const std::size_t k3 = s == 0 ? 1 : 27;
    n += 8 * ch[s] * t + t + k3 * t * t + t;
  }
  n += c.num_classes * (ch[0] * c.head_channels + c.head_channels + c.head_channels + 1);
  return n;
}

double loss_f64(const SegmentationModel& m, const Volume& x, const MaskTensor& y, const LossConfig& cfg) {
  return combined_loss(forward_f64(m, x), y, cfg);
}

}  // namespace

TEST_CASE("construction") {
  const NetworkConfig cfg;
  const SegmentationModel a = build_model(cfg, 5);
  CHECK(a.params == build_model(cfg, 5).params);
  CHECK_FALSE(a.params == build_model(cfg, 6).params);
  CHECK(a.params.count() == expected_parameter_count(cfg));
  CHECK(a.params.count() == 37971);
  std::set<std::string> heads;
  for (const auto& t : a.params.tensors()) {
    if (t.group != "trunk") heads.insert(t.group);
  }
  CHECK(heads == std::set<std::string>{"head0", "head1", "head2"});

  NetworkConfig other = tiny_network(16);
  other.stage_channels = {3, 5, 7};
  other.head_channels = 3;
  CHECK(build_model(other, 0).params.count() == expected_parameter_count(other));
}

TEST_CASE("configuration errors") {
  NetworkConfig cfg;
  cfg.input_size = 20;
  CHECK_THROWS_AS(build_model(cfg, 0), std::invalid_argument);
  cfg = NetworkConfig{};
  cfg.class_names = {"ALL"};
  CHECK_THROWS_AS(build_model(cfg, 0), std::invalid_argument);
  const SegmentationModel m = build_model(tiny_network(8), 0);
  CHECK_THROWS_AS(forward(m, Volume({8, 8, 4})), ShapeError);
}

TEST_CASE("forward shape and range") {
  const SegmentationModel m = build_model(NetworkConfig{}, 1);
  const MaskTensor out = forward(m, random_volume({32, 32, 32}, 2));
  CHECK(out.dims() == Dims{32, 32, 32});
  CHECK(out.channels() == 3);
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("zeroing one head changes only its channel") {
  const SegmentationModel m = build_model(tiny_network(8), 3);
  const Volume x = random_volume({8, 8, 8}, 4);
  const MaskTensor base = forward(m, x);
  for (std::size_t c = 0; c < 3; ++c) {
    SegmentationModel z = m;
    for (auto& t : z.params.tensors())
      if (t.group == "head" + std::to_string(c)) std::fill(t.values.begin(), t.values.end(), 0.0);
    const MaskTensor out = forward(z, x);
    for (std::size_t k = 0; k < 3; ++k) {
      const bool same = std::equal(out.channel(k), out.channel(k) + out.channel_size(), base.channel(k));
      CHECK(same == (k != c));
    }
  }
}

TEST_CASE("batch forward is order equivariant") {
  const SegmentationModel m = build_model(tiny_network(8), 3);
  const std::vector<Volume> batch{random_volume({8, 8, 8}, 1), random_volume({8, 8, 8}, 2), random_volume({8, 8, 8}, 3)};
  const auto out = forward(m, batch);
  const auto rev = forward(m, std::vector<Volume>{batch[2], batch[1], batch[0]});
  CHECK(out[0] == rev[2]);
  CHECK(out[1] == rev[1]);
  CHECK(out[2] == rev[0]);
}

TEST_CASE("float and double forward agree") {
  const SegmentationModel m = build_model(tiny_network(8), 9);
  const Volume x = random_volume({8, 8, 8}, 9);
  const MaskTensor a = forward(m, x);
  const MaskTensor b = forward_f64(m, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-5);
}

TEST_CASE("backward matches central differences") {
  SegmentationModel m = build_model(tiny_network(8), 17);
  const Volume x = random_volume({8, 8, 8}, 18);
  const MaskTensor y = with_names(random_mask(3, {8, 8, 8}, 19, true, 0.3), m.config.class_names);
  const LossConfig cfg;

  TrainingPass<double> pass;
  Gradients grads = zero_gradients(m.params);
  const MaskTensor& pred = pass.forward(m, x);
  pass.backward(m, combined_loss_grad(pred, y, cfg).grad, grads);

  Rng pick(5);
  int checked = 0;
  int agreed = 0;
  for (std::size_t t = 0; t < m.params.tensors().size(); ++t) {
    auto& values = m.params.tensors()[t].values;
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = pick.below(values.size());
      const double keep = values[i];
      const double h = 1e-7;
      values[i] = keep + h;
      const double up = loss_f64(m, x, y, cfg);
      values[i] = keep - h;
      const double down = loss_f64(m, x, y, cfg);
      values[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[t][i];
      ++checked;
      // A kink of the leaky unit inside [-h, h] can spoil a single sample.
      if (std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)) + 1e-3 * std::abs(fd)) ++agreed;
    }
  }
  CHECK(agreed >= checked - 1);
}

TEST_CASE("gradient reaches every parameter") {
  const SegmentationModel m = build_model(tiny_network(16), 23);
  const Volume x = random_volume({16, 16, 16}, 24);
  const MaskTensor y = with_names(random_mask(3, {16, 16, 16}, 25, true, 0.3), m.config.class_names);
  TrainingPass<float> pass;
  Gradients grads = zero_gradients(m.params);
  pass.backward(m, combined_loss_grad(pass.forward(m, x), y, LossConfig{}).grad, grads);
  std::size_t trunk = 0, trunk_nonzero = 0;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const auto& pt = m.params.tensors()[t];
    bool any = false;
    for (double g : grads[t]) {
      CHECK(std::isfinite(g));
      any = any || g != 0.0;
      if (pt.group == "trunk") {
        ++trunk;
        trunk_nonzero += g != 0.0 ? 1 : 0;
      }
    }
    CHECK_MESSAGE(any, pt.name);
  }
  CHECK(static_cast<double>(trunk_nonzero) >= 0.99 * static_cast<double>(trunk));
}

TEST_CASE("head gradients stay local") {
  const SegmentationModel m = build_model(tiny_network(8), 31);
  const Volume x = random_volume({8, 8, 8}, 32);
  for (std::size_t c = 0; c < 3; ++c) {
    // Loss depends on channel c only.
    TrainingPass<double> pass;
    Gradients grads = zero_gradients(m.params);
    const MaskTensor& pred = pass.forward(m, x);
    std::vector<double> g(pred.size(), 0.0);
    for (std::size_t i = 0; i < pred.channel_size(); ++i) g[c * pred.channel_size() + i] = 1.0;
    pass.backward(m, g, grads);
    for (std::size_t t = 0; t < grads.size(); ++t) {
      const auto& group = m.params.tensors()[t].group;
      if (group == "trunk" || group == "head" + std::to_string(c)) continue;
      for (double v : grads[t]) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  semiseg::testing::TempDir dir("ckpt");
  const SegmentationModel m = build_model(tiny_network(8), 41);
  save_checkpoint(m, dir / "m.ckpt", true);
  const LoadedCheckpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.is_teacher);
  CHECK(back.model.params.congruent(m.params));
  const auto& a = m.params.tensors();
  const auto& b = back.model.params.tensors();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].values.size(); ++i)
      CHECK(b[t].values[i] == static_cast<double>(static_cast<float>(a[t].values[i])));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
