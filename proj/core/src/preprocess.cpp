#include "semiseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace semiseg {

void PreprocessConfig::validate() const {
  if (!(vmin < vmax)) throw std::invalid_argument("preprocess: vmin must be below vmax");
  if (!(exp_coef > 0.0)) throw std::invalid_argument("preprocess: exp_coef must be positive");
  if (erosion_window[0] < 1 || erosion_window[1] < 1 || erosion_window[2] < 1) {
    throw std::invalid_argument("preprocess: erosion window components must be >= 1");
  }
  if (!(std_epsilon >= 0.0) || !(exp_clamp > 0.0)) throw std::invalid_argument("preprocess: bad epsilon/clamp");
  if (2 * xy_border_crop >= xy_resize) {
    throw std::invalid_argument("preprocess: crop larger than resized extent");
  }
  const std::size_t xy = xy_resize - 2 * xy_border_crop;
  if (xy != target_dims.nx || xy != target_dims.ny || target_dims.nz == 0) {
    throw std::invalid_argument("preprocess: xy_resize - 2*xy_border_crop must equal target x/y dims");
  }
}

PreprocessConfig PreprocessConfig::for_edge(std::size_t edge) {
  PreprocessConfig cfg;
  cfg.target_dims = {edge, edge, edge};
  cfg.xy_resize = edge;
  cfg.xy_border_crop = 0;
  return cfg;
}

Volume clip_window(const Volume& v, double vmin, double vmax) {
  Volume out = v;
  for (float& x : out.data()) {
    if (x < vmin || x > vmax) x = 0.0f;
  }
  return out;
}

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

// One-dimensional moving minimum along `axis`, applied line by line.
std::vector<float> erode_axis(const std::vector<float>& in, const Dims& d, int axis, std::size_t w) {
  if (w == 1) return in;
  const std::size_t len = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
  const auto lo = -static_cast<std::ptrdiff_t>(w / 2);
  std::vector<float> out(in.size());
  std::vector<float> line(len);
  for (std::size_t z = 0; z < (axis == 2 ? 1 : d.nz); ++z) {
    for (std::size_t y = 0; y < (axis == 1 ? 1 : d.ny); ++y) {
      for (std::size_t x = 0; x < (axis == 0 ? 1 : d.nx); ++x) {
        const std::size_t base = d.index(x, y, z);
        for (std::size_t i = 0; i < len; ++i) line[i] = in[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          float m = std::numeric_limits<float>::infinity();
          for (std::size_t k = 0; k < w; ++k) {
            const auto j = static_cast<std::ptrdiff_t>(i) + lo + static_cast<std::ptrdiff_t>(k);
            m = std::min(m, line[reflect_index(j, len)]);
          }
          out[base + i * stride] = m;
        }
      }
    }
  }
  return out;
}

}  // namespace

Volume grey_erosion(const Volume& v, std::array<std::size_t, 3> window) {
  const Dims& d = v.dims();
  if (window[0] < 1 || window[1] < 1 || window[2] < 1) {
    throw std::invalid_argument("grey_erosion: window components must be >= 1");
  }
  if (window[0] > d.nx || window[1] > d.ny || window[2] > d.nz) {
    throw std::invalid_argument("grey_erosion: window larger than volume " + to_string(d));
  }
  // A box minimum is separable.
  std::vector<float> data = erode_axis(v.data(), d, 0, window[0]);
  data = erode_axis(data, d, 1, window[1]);
  data = erode_axis(data, d, 2, window[2]);
  return Volume(d, std::move(data), v.spacing());
}

Volume mask_zero(const Volume& v, const Volume& eroded) {
  if (v.dims() != eroded.dims()) throw ShapeError("mask_zero: dims differ");
  Volume out = v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (eroded[i] == 0.0f) out[i] = 0.0f;
  }
  return out;
}

Volume normalize_exp(const Volume& v, double exp_coef, double std_epsilon, double exp_clamp) {
  const std::size_t n = v.size();
  if (n < 2) throw std::invalid_argument("normalize_exp: volume needs more than one voxel");

  double mean = 0.0;
  for (float x : v.data()) mean += x;
  mean /= static_cast<double>(n);

  std::vector<double> work(n);
  for (std::size_t i = 0; i < n; ++i) work[i] = static_cast<double>(v[i]) - 2.0 * mean;

  // The shift leaves the spread unchanged; mean of the shifted data is -mean.
  double var = 0.0;
  for (double x : work) var += (x + mean) * (x + mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  Volume out(v.dims(), 0.0f);
  out.set_spacing(v.spacing());
  if (sd == 0.0) return out;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double& x : work) {
    x = std::clamp(x / (sd + std_epsilon), -exp_clamp, exp_clamp);
    x = std::exp(exp_coef * x);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>((work[i] - lo) / range);
  return out;
}

namespace {

struct AxisSample {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<AxisSample> linear_taps(std::size_t in, std::size_t out) {
  std::vector<AxisSample> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

std::vector<std::size_t> nearest_taps(std::size_t in, std::size_t out) {
  std::vector<std::size_t> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const auto s = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) * scale));
    taps[o] = std::min(s, in - 1);
  }
  return taps;
}

}  // namespace

Volume resize_trilinear(const Volume& v, Dims out) {
  const Dims in = v.dims();
  if (in == out) return v;
  const auto tx = linear_taps(in.nx, out.nx);
  const auto ty = linear_taps(in.ny, out.ny);
  const auto tz = linear_taps(in.nz, out.nz);

  // Separable passes in double: x, then y, then z.
  std::vector<double> a(out.nx * in.ny * in.nz);
  for (std::size_t z = 0; z < in.nz; ++z)
    for (std::size_t y = 0; y < in.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x) {
        const auto& t = tx[x];
        const double p = v.at(t.i0, y, z);
        const double q = v.at(t.i1, y, z);
        a[x + out.nx * (y + in.ny * z)] = p + t.frac * (q - p);
      }
  std::vector<double> b(out.nx * out.ny * in.nz);
  for (std::size_t z = 0; z < in.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x) {
        const auto& t = ty[y];
        const double p = a[x + out.nx * (t.i0 + in.ny * z)];
        const double q = a[x + out.nx * (t.i1 + in.ny * z)];
        b[x + out.nx * (y + out.ny * z)] = p + t.frac * (q - p);
      }
  std::vector<float> c(out.voxels());
  for (std::size_t z = 0; z < out.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x) {
        const auto& t = tz[z];
        const double p = b[x + out.nx * (y + out.ny * t.i0)];
        const double q = b[x + out.nx * (y + out.ny * t.i1)];
        c[out.index(x, y, z)] = static_cast<float>(p + t.frac * (q - p));
      }
  std::optional<Spacing> spacing;
  if (v.spacing()) {
    const auto& s = *v.spacing();
    spacing = Spacing{s[0] * static_cast<float>(in.nx) / static_cast<float>(out.nx),
                      s[1] * static_cast<float>(in.ny) / static_cast<float>(out.ny),
                      s[2] * static_cast<float>(in.nz) / static_cast<float>(out.nz)};
  }
  return Volume(out, std::move(c), spacing);
}

LabelVolume resize_nearest(const LabelVolume& lv, Dims out) {
  const Dims in = lv.dims();
  if (in == out) return lv;
  const auto tx = nearest_taps(in.nx, out.nx);
  const auto ty = nearest_taps(in.ny, out.ny);
  const auto tz = nearest_taps(in.nz, out.nz);
  LabelVolume res(out);
  for (std::size_t z = 0; z < out.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x) res.at(x, y, z) = lv.at(tx[x], ty[y], tz[z]);
  return res;
}

namespace {

template <typename Grid, typename Resize, typename Make>
Grid resize_crop_impl(const Grid& g, const PreprocessConfig& cfg, Resize resize, Make make) {
  cfg.validate();
  const std::size_t r = cfg.xy_resize;
  const std::size_t c = cfg.xy_border_crop;
  Grid resized = resize(g, Dims{r, r, cfg.target_dims.nz});
  if (c == 0) return resized;
  const Dims out = cfg.target_dims;
  Grid cropped = make(out);
  for (std::size_t z = 0; z < out.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x) cropped.at(x, y, z) = resized.at(x + c, y + c, z);
  return cropped;
}

}  // namespace

Volume resize_crop(const Volume& v, const PreprocessConfig& cfg) {
  Volume out = resize_crop_impl(v, cfg, resize_trilinear, [](Dims d) { return Volume(d); });
  if (cfg.xy_border_crop != 0) {
    // Cropping keeps the resized spacing.
    if (v.spacing()) {
      const auto& s = *v.spacing();
      out.set_spacing(Spacing{s[0] * static_cast<float>(v.dims().nx) / static_cast<float>(cfg.xy_resize),
                              s[1] * static_cast<float>(v.dims().ny) / static_cast<float>(cfg.xy_resize),
                              s[2] * static_cast<float>(v.dims().nz) / static_cast<float>(cfg.target_dims.nz)});
    }
  }
  return out;
}

LabelVolume resize_crop(const LabelVolume& lv, const PreprocessConfig& cfg) {
  return resize_crop_impl(lv, cfg, resize_nearest, [](Dims d) { return LabelVolume(d); });
}

Volume preprocess_pipeline(const Volume& v, const PreprocessConfig& cfg) {
  cfg.validate();
  const Volume resized = resize_crop(v, cfg);
  const Volume clipped = clip_window(resized, cfg.vmin, cfg.vmax);
  const Volume eroded = grey_erosion(clipped, cfg.erosion_window);
  const Volume masked = mask_zero(clipped, eroded);
  return normalize_exp(masked, cfg.exp_coef, cfg.std_epsilon, cfg.exp_clamp);
}

}  // namespace semiseg
