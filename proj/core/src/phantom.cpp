#include "semiseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "semiseg/random.hpp"

namespace semiseg {

namespace {

void check_params(std::size_t edge, const PhantomParams& p) {
  if (edge < 8) throw std::invalid_argument("phantom edge must be at least 8 voxels");
  if (p.tl_radius <= 0.0 || p.fl_radius <= 0.0 || p.thrombus_radius < 0.0) {
    throw std::invalid_argument("phantom radii must be positive");
  }
  if (p.noise_sd < 0.0 || p.radius_jitter < 0.0 || p.radius_jitter >= 1.0) {
    throw std::invalid_argument("phantom noise/jitter out of range");
  }
  if (p.thrombus_probability < 0.0 || p.thrombus_probability > 1.0) {
    throw std::invalid_argument("thrombus probability must lie in [0,1]");
  }
  const double n = static_cast<double>(edge);
  const double grow = 1.0 + p.radius_jitter;
  const double rt = p.tl_radius * n * grow;
  const double rf = p.fl_radius * n * grow;
  const double half_gap = 0.5 * (rt + rf + 1.0);
  const double reach = p.wander * n + half_gap + std::max(rt, rf);
  if (reach > 0.5 * n - 1.0) {
    throw std::invalid_argument("phantom radii too large for edge " + std::to_string(edge));
  }
  const double contrast = std::min({std::abs(p.tl_intensity - p.background), std::abs(p.fl_intensity - p.background),
                                    std::abs(p.thrombus_intensity - p.background)}) -
                          p.intensity_jitter;
  if (contrast < 3.0 * p.noise_sd) {
    throw std::invalid_argument("phantom contrast below 3 noise standard deviations");
  }
}

}  // namespace

Phantom generate_phantom(std::uint64_t seed, std::size_t edge, const PhantomParams& p) {
  check_params(edge, p);
  Rng rng(mix_seed(seed, 0x50484E54));  // "PHNT"
  const double n = static_cast<double>(edge);
  const double twopi = 2.0 * std::numbers::pi;

  const double rt = p.tl_radius * n * rng.uniform(1.0 - p.radius_jitter, 1.0 + p.radius_jitter);
  const double rf = p.fl_radius * n * rng.uniform(1.0 - p.radius_jitter, 1.0 + p.radius_jitter);
  const double half_gap = 0.5 * (rt + rf + 1.0);
  const double amp_x = p.wander * n * rng.uniform(0.5, 1.0);
  const double amp_y = p.wander * n * rng.uniform(0.5, 1.0);
  const double phase_x = rng.uniform(0.0, twopi);
  const double phase_y = rng.uniform(0.0, twopi);
  const double freq = rng.uniform(0.5, 1.5);
  const double theta0 = rng.uniform(0.0, twopi);
  const double twist = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);

  const double tl_value = p.tl_intensity + rng.uniform(-p.intensity_jitter, p.intensity_jitter);
  const double fl_value = p.fl_intensity + rng.uniform(-p.intensity_jitter, p.intensity_jitter);
  const double flt_value = p.thrombus_intensity + rng.uniform(-p.intensity_jitter, p.intensity_jitter);

  const bool thrombus = rng.uniform() < p.thrombus_probability;
  const double blob_z = rng.uniform(0.3 * n, 0.7 * n);
  const double blob_r = p.thrombus_radius * n * rng.uniform(0.8, 1.2);

  const double mid = 0.5 * (n - 1.0);
  auto centre = [&](double z, double sign) {
    const double t = z / n;
    const double cx = mid + amp_x * std::sin(twopi * freq * t + phase_x);
    const double cy = mid + amp_y * std::cos(twopi * freq * t + phase_y);
    const double ang = theta0 + twist * t;
    return std::pair{cx + sign * half_gap * std::cos(ang), cy + sign * half_gap * std::sin(ang)};
  };

  // Thrombus sits on the outer wall of the false lumen, away from the true lumen.
  const double blob_ang = theta0 + twist * blob_z / n;
  const auto [fx, fy] = centre(blob_z, -1.0);
  const double bx = fx - (rf + 0.5 * blob_r) * std::cos(blob_ang);
  const double by = fy - (rf + 0.5 * blob_r) * std::sin(blob_ang);

  const double spine_x = 0.86 * n;
  const double spine_y = 0.86 * n;
  const double spine_r = 0.06 * n;

  const Dims dims{edge, edge, edge};
  Phantom out{Volume(dims), LabelVolume(dims), thrombus};
  for (std::size_t z = 0; z < edge; ++z) {
    const double zd = static_cast<double>(z);
    const auto [tx, ty] = centre(zd, 1.0);
    const auto [lx, ly] = centre(zd, -1.0);
    for (std::size_t y = 0; y < edge; ++y) {
      const double yd = static_cast<double>(y);
      for (std::size_t x = 0; x < edge; ++x) {
        const double xd = static_cast<double>(x);
        std::uint8_t label = kBackground;
        double value = p.background;
        if (std::hypot(xd - tx, yd - ty) <= rt) {
          label = kTrueLumen;
          value = tl_value;
        } else if (std::hypot(xd - lx, yd - ly) <= rf) {
          label = kFalseLumen;
          value = fl_value;
        } else if (thrombus && std::hypot(std::hypot(xd - bx, yd - by), zd - blob_z) <= blob_r) {
          label = kThrombus;
          value = flt_value;
        } else if (p.spine && std::hypot(xd - spine_x, yd - spine_y) <= spine_r) {
          value = 1850.0;
        }
        out.labels.at(x, y, z) = label;
        out.image.at(x, y, z) = static_cast<float>(value + p.noise_sd * rng.normal());
      }
    }
  }
  return out;
}

Phantom generate_phantom(std::uint64_t seed, Dims dims, const PhantomParams& params) {
  if (!dims.cubic()) throw std::invalid_argument("phantom dims must be cubic, got " + to_string(dims));
  return generate_phantom(seed, dims.nx, params);
}

}  // namespace semiseg
