#include "semiseg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "semiseg/random.hpp"

namespace semiseg {

// ---------------------------------------------------------------- config / params

void NetworkConfig::validate() const {
  if (in_channels != 1) throw std::invalid_argument("network: only single-channel input is supported");
  if (num_classes == 0) throw std::invalid_argument("network: need at least one class");
  if (class_names.size() != num_classes) throw std::invalid_argument("network: class_names size != num_classes");
  if (stage_channels.empty()) throw std::invalid_argument("network: need at least one encoder stage");
  for (auto c : stage_channels)
    if (c == 0) throw std::invalid_argument("network: zero-width stage");
  if (downscale_factor != 2) throw std::invalid_argument("network: downscale_factor must be 2");
  if (bottleneck_dim == 0 || head_channels == 0) throw std::invalid_argument("network: zero-width layer");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw std::invalid_argument("network: leaky_slope must be in (0,1)");
  std::size_t div = 1;
  for (std::size_t i = 0; i < stage_channels.size(); ++i) div *= downscale_factor;
  if (input_size == 0 || input_size % div != 0) {
    throw std::invalid_argument("network: input edge " + std::to_string(input_size) + " not divisible by " +
                                std::to_string(div));
  }
}

std::size_t NetworkConfig::bottleneck_edge() const {
  return input_size >> stage_channels.size();
}

ParamTensor& ParameterSet::add(std::string name, std::string group, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  tensors_.push_back({std::move(name), std::move(group), std::move(shape), std::vector<double>(n, 0.0)});
  return tensors_.back();
}

const ParamTensor& ParameterSet::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("no parameter named '" + name + "'");
}

ParamTensor& ParameterSet::get(const std::string& name) {
  return const_cast<ParamTensor&>(std::as_const(*this).get(name));
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

bool ParameterSet::congruent(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.group != b.group || a.shape != b.shape || a.values.size() != b.values.size()) return false;
  }
  return true;
}

std::uint64_t ParameterSet::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& t : tensors_) {
    mix(t.name.data(), t.name.size());
    mix(t.values.data(), t.values.size() * sizeof(double));
  }
  return h;
}

Gradients zero_gradients(const ParameterSet& params) {
  Gradients g;
  g.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) g.emplace_back(t.values.size(), 0.0);
  return g;
}

namespace {

std::string head_group(std::size_t c) { return "head" + std::to_string(c); }

std::size_t decoder_width(const NetworkConfig& cfg, std::size_t stage) {
  return stage == 0 ? cfg.stage_channels[0] : cfg.stage_channels[stage - 1];
}

std::size_t fuse_kernel(std::size_t stage) { return stage == 0 ? 1 : 3; }

void declare(const NetworkConfig& cfg, ParameterSet& p) {
  const auto& ch = cfg.stage_channels;
  const std::size_t S = ch.size();
  const std::size_t B = cfg.bottleneck_dim;
  const std::size_t M = cfg.bottleneck_edge();
  p.add("stem.weight", "trunk", {ch[0], cfg.in_channels, 3, 3, 3});
  p.add("stem.bias", "trunk", {ch[0]});
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t in = i == 0 ? ch[0] : ch[i - 1];
    p.add("enc" + std::to_string(i) + ".weight", "trunk", {ch[i], in, 3, 3, 3});
    p.add("enc" + std::to_string(i) + ".bias", "trunk", {ch[i]});
  }
  p.add("bottleneck.proj_in.weight", "trunk", {B, ch[S - 1]});
  p.add("bottleneck.proj_in.bias", "trunk", {B});
  p.add("bottleneck.pos_embed", "trunk", {B, M, M, M});
  p.add("bottleneck.proj_out.weight", "trunk", {ch[S - 1], B});
  p.add("bottleneck.proj_out.bias", "trunk", {ch[S - 1]});
  for (std::size_t s = S; s-- > 0;) {
    const std::size_t t = decoder_width(cfg, s);
    const std::size_t k = fuse_kernel(s);
    const std::string pre = "dec" + std::to_string(s);
    p.add(pre + ".up.weight", "trunk", {t, 2, 2, 2, ch[s]});
    p.add(pre + ".up.bias", "trunk", {t});
    p.add(pre + ".fuse.weight", "trunk", {t, t, k, k, k});
    p.add(pre + ".fuse.bias", "trunk", {t});
  }
  const std::size_t H = cfg.head_channels;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::string pre = "head" + std::to_string(c);
    p.add(pre + ".hidden.weight", head_group(c), {H, ch[0]});
    p.add(pre + ".hidden.bias", head_group(c), {H});
    p.add(pre + ".out.weight", head_group(c), {1, H});
    p.add(pre + ".out.bias", head_group(c), {1});
  }
}

}  // namespace

SegmentationModel build_model(const NetworkConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  SegmentationModel m{cfg, {}};
  declare(cfg, m.params);
  Rng rng(mix_seed(init_seed, 0x4E4554));
  const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
  for (auto& t : m.params.tensors()) {
    if (t.shape.size() == 1) continue;  // biases start at zero
    if (t.name == "bottleneck.pos_embed") {
      for (double& v : t.values) v = 0.02 * rng.normal();
      continue;
    }
    // Fan-in is everything but the output dimension, except for transposed
    // convolutions whose output voxels each see one input voxel per channel.
    std::size_t fan_in = t.values.size() / t.shape[0];
    if (t.name.find(".up.") != std::string::npos) fan_in = t.shape.back();
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& v : t.values) v = rng.uniform(-bound, bound);
  }
  return m;
}

// ---------------------------------------------------------------- compute kernels

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

/// Channel-major activation grid.
template <typename T>
struct Act {
  std::size_t channels = 0;
  std::size_t edge = 0;
  std::vector<T> data;

  void reset(std::size_t c, std::size_t e) {
    channels = c;
    edge = e;
    data.assign(c * e * e * e, T(0));
  }
  [[nodiscard]] std::size_t vox() const { return edge * edge * edge; }
  T* ch(std::size_t c) { return data.data() + c * vox(); }
  const T* ch(std::size_t c) const { return data.data() + c * vox(); }
};

struct Conv {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t k = 1;
  std::size_t stride = 1;
  [[nodiscard]] std::size_t pad() const { return k / 2; }
  [[nodiscard]] std::size_t out_edge(std::size_t in) const { return (in + 2 * pad() - k) / stride + 1; }
};

struct Up {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;
};

struct Layout {
  Conv stem;
  std::vector<Conv> enc;
  Conv proj_in;
  std::size_t pos = 0;
  Conv proj_out;
  std::vector<Up> up;      // by stage
  std::vector<Conv> fuse;  // by stage
  std::vector<Conv> head_hidden;
  std::vector<Conv> head_out;
};

std::size_t index_of(const ParameterSet& p, const std::string& name) {
  const auto& ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i].name == name) return i;
  throw std::out_of_range("model lacks parameter '" + name + "'");
}

Layout layout_of(const SegmentationModel& m) {
  const auto& cfg = m.config;
  const auto& p = m.params;
  const auto& ch = cfg.stage_channels;
  const std::size_t S = ch.size();
  Layout L;
  L.stem = {index_of(p, "stem.weight"), index_of(p, "stem.bias"), cfg.in_channels, ch[0], 3, 1};
  for (std::size_t i = 0; i < S; ++i) {
    const std::string pre = "enc" + std::to_string(i);
    L.enc.push_back({index_of(p, pre + ".weight"), index_of(p, pre + ".bias"), i == 0 ? ch[0] : ch[i - 1], ch[i], 3, 2});
  }
  L.proj_in = {index_of(p, "bottleneck.proj_in.weight"), index_of(p, "bottleneck.proj_in.bias"), ch[S - 1],
               cfg.bottleneck_dim, 1, 1};
  L.pos = index_of(p, "bottleneck.pos_embed");
  L.proj_out = {index_of(p, "bottleneck.proj_out.weight"), index_of(p, "bottleneck.proj_out.bias"),
                cfg.bottleneck_dim, ch[S - 1], 1, 1};
  L.up.resize(S);
  L.fuse.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const std::string pre = "dec" + std::to_string(s);
    const std::size_t t = decoder_width(cfg, s);
    L.up[s] = {index_of(p, pre + ".up.weight"), index_of(p, pre + ".up.bias"), ch[s], t};
    L.fuse[s] = {index_of(p, pre + ".fuse.weight"), index_of(p, pre + ".fuse.bias"), t, t, fuse_kernel(s), 1};
  }
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::string pre = "head" + std::to_string(c);
    L.head_hidden.push_back({index_of(p, pre + ".hidden.weight"), index_of(p, pre + ".hidden.bias"), ch[0],
                             cfg.head_channels, 1, 1});
    L.head_out.push_back({index_of(p, pre + ".out.weight"), index_of(p, pre + ".out.bias"), cfg.head_channels, 1, 1, 1});
  }
  // Shapes must agree with the configuration (guards against foreign checkpoints).
  ParameterSet expected;
  declare(cfg, expected);
  if (!expected.congruent(p)) throw std::invalid_argument("model parameters do not match its configuration");
  return L;
}

template <typename T>
void im2col(const Act<T>& in, const Conv& c, std::size_t out_edge, std::vector<T>& col) {
  const std::size_t k = c.k;
  const std::size_t n = in.edge;
  const std::size_t m = out_edge;
  const std::size_t mv = m * m * m;
  const auto pad = static_cast<std::ptrdiff_t>(c.pad());
  const auto s = static_cast<std::ptrdiff_t>(c.stride);
  col.resize(c.cin * k * k * k * mv);
  T* row = col.data();
  for (std::size_t ci = 0; ci < c.cin; ++ci) {
    const T* src = in.ch(ci);
    for (std::size_t kz = 0; kz < k; ++kz)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx, row += mv) {
          T* dst = row;
          for (std::size_t oz = 0; oz < m; ++oz) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz) * s + static_cast<std::ptrdiff_t>(kz) - pad;
            for (std::size_t oy = 0; oy < m; ++oy, dst += m) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(n) || iy < 0 || iy >= static_cast<std::ptrdiff_t>(n)) {
                std::fill(dst, dst + m, T(0));
                continue;
              }
              const T* line = src + (static_cast<std::size_t>(iz) * n + static_cast<std::size_t>(iy)) * n;
              for (std::size_t ox = 0; ox < m; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
                dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(n)) ? T(0) : line[ix];
              }
            }
          }
        }
  }
}

template <typename T>
void col2im(const std::vector<T>& dcol, const Conv& c, std::size_t out_edge, Act<T>& din) {
  const std::size_t k = c.k;
  const std::size_t n = din.edge;
  const std::size_t m = out_edge;
  const std::size_t mv = m * m * m;
  const auto pad = static_cast<std::ptrdiff_t>(c.pad());
  const auto s = static_cast<std::ptrdiff_t>(c.stride);
  const T* row = dcol.data();
  for (std::size_t ci = 0; ci < c.cin; ++ci) {
    T* dst = din.ch(ci);
    for (std::size_t kz = 0; kz < k; ++kz)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx, row += mv) {
          const T* src = row;
          for (std::size_t oz = 0; oz < m; ++oz) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz) * s + static_cast<std::ptrdiff_t>(kz) - pad;
            for (std::size_t oy = 0; oy < m; ++oy, src += m) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(n) || iy < 0 || iy >= static_cast<std::ptrdiff_t>(n)) continue;
              T* line = dst + (static_cast<std::size_t>(iz) * n + static_cast<std::size_t>(iy)) * n;
              for (std::size_t ox = 0; ox < m; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
                if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(n)) line[ix] += src[ox];
              }
            }
          }
        }
  }
}

template <typename T>
struct Weights {
  std::vector<std::vector<T>> w;
  explicit Weights(const ParameterSet& p) {
    w.reserve(p.tensors().size());
    for (const auto& t : p.tensors()) w.emplace_back(t.values.begin(), t.values.end());
  }
  const T* operator[](std::size_t i) const { return w[i].data(); }
};

/// out = W * col + b. `col` is the im2col matrix, or the input itself for 1x1 convs.
template <typename T>
void conv_forward(const Weights<T>& W, const Conv& c, const Act<T>& in, std::vector<T>& col, Act<T>& out) {
  const std::size_t m = c.out_edge(in.edge);
  out.reset(c.cout, m);
  const std::size_t K = c.cin * c.k * c.k * c.k;
  const std::size_t M = out.vox();
  const T* colp = in.data.data();
  if (c.k != 1 || c.stride != 1) {
    im2col(in, c, m, col);
    colp = col.data();
  }
  MatMap<T> O(out.data.data(), static_cast<Eigen::Index>(c.cout), static_cast<Eigen::Index>(M));
  CMatMap<T> Wm(W[c.w], static_cast<Eigen::Index>(c.cout), static_cast<Eigen::Index>(K));
  CMatMap<T> C(colp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
  O.noalias() = Wm * C;
  const T* b = W[c.b];
  for (std::size_t o = 0; o < c.cout; ++o) O.row(static_cast<Eigen::Index>(o)).array() += b[o];
}

/// Accumulates weight/bias gradients; adds the input gradient to `din` when non-null.
template <typename T>
void conv_backward(const Weights<T>& W, const Conv& c, const Act<T>& in, const std::vector<T>& col,
                   const Act<T>& dout, Gradients& grads, Act<T>* din, std::vector<T>& scratch) {
  const std::size_t K = c.cin * c.k * c.k * c.k;
  const std::size_t M = dout.vox();
  const bool direct = c.k == 1 && c.stride == 1;
  const T* colp = direct ? in.data.data() : col.data();
  CMatMap<T> D(dout.data.data(), static_cast<Eigen::Index>(c.cout), static_cast<Eigen::Index>(M));
  CMatMap<T> C(colp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
  RowMat<T> dW = D * C.transpose();
  auto& gw = grads[c.w];
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += static_cast<double>(dW.data()[i]);
  auto& gb = grads[c.b];
  for (std::size_t o = 0; o < c.cout; ++o) {
    // Plain loop: Eigen's reduction order depends on buffer alignment.
    const T* row = dout.data.data() + o * M;
    double sum = 0.0;
    for (std::size_t i = 0; i < M; ++i) sum += static_cast<double>(row[i]);
    gb[o] += sum;
  }
  if (!din) return;
  CMatMap<T> Wm(W[c.w], static_cast<Eigen::Index>(c.cout), static_cast<Eigen::Index>(K));
  if (direct) {
    MatMap<T> DI(din->data.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
    DI.noalias() += Wm.transpose() * D;
    return;
  }
  scratch.resize(K * M);
  MatMap<T> DC(scratch.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M));
  DC.noalias() = Wm.transpose() * D;
  col2im(scratch, c, dout.edge, *din);
}

/// 2x2x2 stride-2 transposed convolution. Weight layout (cout, dz, dy, dx, cin).
template <typename T>
void up_forward(const Weights<T>& W, const Up& u, const Act<T>& in, std::vector<T>& scratch, Act<T>& out) {
  const std::size_t m = in.edge;
  const std::size_t mv = in.vox();
  out.reset(u.cout, 2 * m);
  scratch.resize(u.cout * 8 * mv);
  MatMap<T> Y(scratch.data(), static_cast<Eigen::Index>(u.cout * 8), static_cast<Eigen::Index>(mv));
  CMatMap<T> Wm(W[u.w], static_cast<Eigen::Index>(u.cout * 8), static_cast<Eigen::Index>(u.cin));
  CMatMap<T> X(in.data.data(), static_cast<Eigen::Index>(u.cin), static_cast<Eigen::Index>(mv));
  Y.noalias() = Wm * X;
  const T* b = W[u.b];
  const std::size_t n = 2 * m;
  for (std::size_t co = 0; co < u.cout; ++co) {
    T* dst = out.ch(co);
    for (std::size_t d = 0; d < 8; ++d) {
      const std::size_t dz = d >> 2, dy = (d >> 1) & 1u, dx = d & 1u;
      const T* src = scratch.data() + (co * 8 + d) * mv;
      for (std::size_t z = 0; z < m; ++z)
        for (std::size_t y = 0; y < m; ++y) {
          T* line = dst + ((2 * z + dz) * n + (2 * y + dy)) * n + dx;
          const T* s = src + (z * m + y) * m;
          for (std::size_t x = 0; x < m; ++x) line[2 * x] = s[x] + b[co];
        }
    }
  }
}

template <typename T>
void up_backward(const Weights<T>& W, const Up& u, const Act<T>& in, const Act<T>& dout, Gradients& grads,
                 Act<T>& din, std::vector<T>& scratch) {
  const std::size_t m = in.edge;
  const std::size_t mv = in.vox();
  const std::size_t n = 2 * m;
  scratch.resize(u.cout * 8 * mv);
  auto& gb = grads[u.b];
  for (std::size_t co = 0; co < u.cout; ++co) {
    const T* src = dout.ch(co);
    double bsum = 0.0;
    for (std::size_t d = 0; d < 8; ++d) {
      const std::size_t dz = d >> 2, dy = (d >> 1) & 1u, dx = d & 1u;
      T* dst = scratch.data() + (co * 8 + d) * mv;
      for (std::size_t z = 0; z < m; ++z)
        for (std::size_t y = 0; y < m; ++y) {
          const T* line = src + ((2 * z + dz) * n + (2 * y + dy)) * n + dx;
          T* s = dst + (z * m + y) * m;
          for (std::size_t x = 0; x < m; ++x) {
            s[x] = line[2 * x];
            bsum += static_cast<double>(line[2 * x]);
          }
        }
    }
    gb[co] += bsum;
  }
  CMatMap<T> DY(scratch.data(), static_cast<Eigen::Index>(u.cout * 8), static_cast<Eigen::Index>(mv));
  CMatMap<T> X(in.data.data(), static_cast<Eigen::Index>(u.cin), static_cast<Eigen::Index>(mv));
  RowMat<T> dW = DY * X.transpose();
  auto& gw = grads[u.w];
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += static_cast<double>(dW.data()[i]);
  CMatMap<T> Wm(W[u.w], static_cast<Eigen::Index>(u.cout * 8), static_cast<Eigen::Index>(u.cin));
  MatMap<T> DX(din.data.data(), static_cast<Eigen::Index>(u.cin), static_cast<Eigen::Index>(mv));
  DX.noalias() += Wm.transpose() * DY;
}

template <typename T>
void leaky_relu(Act<T>& a, T slope) {
  for (T& v : a.data) v = v > T(0) ? v : v * slope;
}

/// In place: g *= f'(pre) using the post-activation sign.
template <typename T>
void leaky_relu_backward(const Act<T>& post, Act<T>& g, T slope) {
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(post.data[i] > T(0))) g.data[i] *= slope;
}

template <typename T>
void add_into(Act<T>& dst, const Act<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr double kOutputFloor = 1e-12;

}  // namespace

template <typename T>
struct ForwardTrace {
  Layout layout;
  Act<T> input;
  std::vector<T> stem_col;
  Act<T> stem;
  std::vector<std::vector<T>> enc_col;
  std::vector<Act<T>> enc;
  Act<T> bn_hidden;  // post-activation after positional embedding
  Act<T> bn_proj;    // post-activation of proj_out
  Act<T> bn_out;     // residual sum
  std::vector<Act<T>> dec_sum;  // upsampled + skip
  std::vector<std::vector<T>> dec_col;
  std::vector<Act<T>> dec_out;
  std::vector<Act<T>> head_hidden;
  std::vector<Act<T>> logits;
  std::vector<T> scratch;
};

namespace {

template <typename T>
void run_forward(const SegmentationModel& m, const Volume& x, ForwardTrace<T>& tr, MaskTensor& pred) {
  const auto& cfg = m.config;
  const std::size_t N = cfg.input_size;
  if (x.dims() != Dims{N, N, N}) {
    throw ShapeError("network expects input " + to_string(Dims{N, N, N}) + ", got " + to_string(x.dims()));
  }
  tr.layout = layout_of(m);
  const Layout& L = tr.layout;
  const Weights<T> W(m.params);
  const T slope = static_cast<T>(cfg.leaky_slope);
  const std::size_t S = cfg.stage_channels.size();

  tr.input.reset(1, N);
  std::copy(x.data().begin(), x.data().end(), tr.input.data.begin());

  conv_forward(W, L.stem, tr.input, tr.stem_col, tr.stem);
  leaky_relu(tr.stem, slope);

  tr.enc.resize(S);
  tr.enc_col.resize(S);
  for (std::size_t i = 0; i < S; ++i) {
    conv_forward(W, L.enc[i], i == 0 ? tr.stem : tr.enc[i - 1], tr.enc_col[i], tr.enc[i]);
    leaky_relu(tr.enc[i], slope);
  }

  const Act<T>& deepest = tr.enc[S - 1];
  conv_forward(W, L.proj_in, deepest, tr.scratch, tr.bn_hidden);
  const T* pos = W[L.pos];
  for (std::size_t i = 0; i < tr.bn_hidden.data.size(); ++i) tr.bn_hidden.data[i] += pos[i];
  leaky_relu(tr.bn_hidden, slope);
  conv_forward(W, L.proj_out, tr.bn_hidden, tr.scratch, tr.bn_proj);
  leaky_relu(tr.bn_proj, slope);
  tr.bn_out = tr.bn_proj;
  add_into(tr.bn_out, deepest);

  tr.dec_sum.resize(S);
  tr.dec_col.resize(S);
  tr.dec_out.resize(S);
  for (std::size_t s = S; s-- > 0;) {
    const Act<T>& below = s == S - 1 ? tr.bn_out : tr.dec_out[s + 1];
    up_forward(W, L.up[s], below, tr.scratch, tr.dec_sum[s]);
    add_into(tr.dec_sum[s], s == 0 ? tr.stem : tr.enc[s - 1]);
    conv_forward(W, L.fuse[s], tr.dec_sum[s], tr.dec_col[s], tr.dec_out[s]);
    leaky_relu(tr.dec_out[s], slope);
  }

  const std::size_t C = cfg.num_classes;
  tr.head_hidden.resize(C);
  tr.logits.resize(C);
  pred = MaskTensor(cfg.class_names, x.dims());
  for (std::size_t c = 0; c < C; ++c) {
    conv_forward(W, L.head_hidden[c], tr.dec_out[0], tr.scratch, tr.head_hidden[c]);
    leaky_relu(tr.head_hidden[c], slope);
    conv_forward(W, L.head_out[c], tr.head_hidden[c], tr.scratch, tr.logits[c]);
    double* out = pred.channel(c);
    const T* z = tr.logits[c].data.data();
    for (std::size_t i = 0; i < pred.channel_size(); ++i) {
      out[i] = std::clamp(stable_sigmoid(static_cast<double>(z[i])), kOutputFloor, 1.0 - kOutputFloor);
    }
  }
}

template <typename T>
void run_backward(const SegmentationModel& m, ForwardTrace<T>& tr, const MaskTensor& pred,
                  const std::vector<double>& grad_pred, Gradients& grads) {
  const auto& cfg = m.config;
  if (grad_pred.size() != pred.size()) throw ShapeError("backward: gradient size does not match prediction");
  if (grads.size() != m.params.tensors().size()) throw ShapeError("backward: gradient buffers do not match model");
  const Layout& L = tr.layout;
  const Weights<T> W(m.params);
  const T slope = static_cast<T>(cfg.leaky_slope);
  const std::size_t S = cfg.stage_channels.size();
  const std::size_t C = cfg.num_classes;
  const std::size_t N = cfg.input_size;
  std::vector<T> col_scratch;

  // Heads.
  Act<T> d_top;
  d_top.reset(cfg.stage_channels[0], N);
  for (std::size_t c = 0; c < C; ++c) {
    Act<T> dz;
    dz.reset(1, N);
    const double* p = pred.channel(c);
    const double* g = grad_pred.data() + c * pred.channel_size();
    for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] = static_cast<T>(g[i] * p[i] * (1.0 - p[i]));
    Act<T> dh;
    dh.reset(cfg.head_channels, N);
    conv_backward(W, L.head_out[c], tr.head_hidden[c], tr.scratch, dz, grads, &dh, col_scratch);
    leaky_relu_backward(tr.head_hidden[c], dh, slope);
    conv_backward(W, L.head_hidden[c], tr.dec_out[0], tr.scratch, dh, grads, &d_top, col_scratch);
  }

  // Decoder, top to bottom.
  std::vector<Act<T>> d_enc(S);
  for (std::size_t i = 0; i < S; ++i) d_enc[i].reset(tr.enc[i].channels, tr.enc[i].edge);
  Act<T> d_stem;
  d_stem.reset(tr.stem.channels, tr.stem.edge);
  Act<T> d_bn;
  Act<T> d_out = std::move(d_top);
  for (std::size_t s = 0; s < S; ++s) {
    leaky_relu_backward(tr.dec_out[s], d_out, slope);
    Act<T> d_sum;
    d_sum.reset(tr.dec_sum[s].channels, tr.dec_sum[s].edge);
    conv_backward(W, L.fuse[s], tr.dec_sum[s], tr.dec_col[s], d_out, grads, &d_sum, col_scratch);
    add_into(s == 0 ? d_stem : d_enc[s - 1], d_sum);
    const Act<T>& below = s == S - 1 ? tr.bn_out : tr.dec_out[s + 1];
    Act<T> d_below;
    d_below.reset(below.channels, below.edge);
    up_backward(W, L.up[s], below, d_sum, grads, d_below, col_scratch);
    d_out = std::move(d_below);
  }
  d_bn = std::move(d_out);

  // Bottleneck: residual + projection branch.
  add_into(d_enc[S - 1], d_bn);
  leaky_relu_backward(tr.bn_proj, d_bn, slope);
  Act<T> d_hidden;
  d_hidden.reset(tr.bn_hidden.channels, tr.bn_hidden.edge);
  conv_backward(W, L.proj_out, tr.bn_hidden, tr.scratch, d_bn, grads, &d_hidden, col_scratch);
  leaky_relu_backward(tr.bn_hidden, d_hidden, slope);
  auto& gpos = grads[L.pos];
  for (std::size_t i = 0; i < gpos.size(); ++i) gpos[i] += static_cast<double>(d_hidden.data[i]);
  conv_backward(W, L.proj_in, tr.enc[S - 1], tr.scratch, d_hidden, grads, &d_enc[S - 1], col_scratch);

  // Encoder, deepest first.
  for (std::size_t i = S; i-- > 0;) {
    leaky_relu_backward(tr.enc[i], d_enc[i], slope);
    Act<T>& d_in = i == 0 ? d_stem : d_enc[i - 1];
    conv_backward(W, L.enc[i], i == 0 ? tr.stem : tr.enc[i - 1], tr.enc_col[i], d_enc[i], grads, &d_in, col_scratch);
  }
  leaky_relu_backward(tr.stem, d_stem, slope);
  conv_backward(W, L.stem, tr.input, tr.stem_col, d_stem, grads, static_cast<Act<T>*>(nullptr), col_scratch);
}

}  // namespace

MaskTensor forward(const SegmentationModel& m, const Volume& x) {
  ForwardTrace<float> tr;
  MaskTensor pred;
  run_forward(m, x, tr, pred);
  return pred;
}

std::vector<MaskTensor> forward(const SegmentationModel& m, const std::vector<Volume>& batch) {
  std::vector<MaskTensor> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(forward(m, x));
  return out;
}

MaskTensor forward_f64(const SegmentationModel& m, const Volume& x) {
  ForwardTrace<double> tr;
  MaskTensor pred;
  run_forward(m, x, tr, pred);
  return pred;
}

template <typename T>
TrainingPass<T>::TrainingPass() : trace_(std::make_unique<ForwardTrace<T>>()) {}
template <typename T>
TrainingPass<T>::~TrainingPass() = default;
template <typename T>
TrainingPass<T>::TrainingPass(TrainingPass&&) noexcept = default;
template <typename T>
TrainingPass<T>& TrainingPass<T>::operator=(TrainingPass&&) noexcept = default;

template <typename T>
const MaskTensor& TrainingPass<T>::forward(const SegmentationModel& m, const Volume& x) {
  run_forward(m, x, *trace_, prediction_);
  return prediction_;
}

template <typename T>
void TrainingPass<T>::backward(const SegmentationModel& m, const std::vector<double>& grad_pred, Gradients& grads) {
  if (trace_->logits.empty()) throw std::logic_error("backward called before forward");
  run_backward(m, *trace_, prediction_, grad_pred, grads);
}

template class TrainingPass<float>;
template class TrainingPass<double>;

}  // namespace semiseg
