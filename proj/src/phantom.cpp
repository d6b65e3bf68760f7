#include "anisosr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "anisosr/coordinates.hpp"

namespace anisosr {

std::size_t min_phantom_size() { return patch_cube_side(2.0); }

Volume make_phantom(std::size_t size, Rng& rng) {
  if (size < min_phantom_size()) {
    throw ValidationError("size " + std::to_string(size) + " too small for patch geometry (minimum " +
                          std::to_string(min_phantom_size()) + ")");
  }
  using U = std::uniform_real_distribution<double>;
  const double s = static_cast<double>(size);
  std::array<double, 3> centre{}, radius{};
  for (int a = 0; a < 3; ++a) centre[a] = s / 2.0 - 0.5 + U(-2.0, 2.0)(rng);
  for (int a = 0; a < 3; ++a) radius[a] = s / 2.0 * U(0.7, 0.85)(rng);

  struct Wave {
    std::array<double, 3> f;
    double phase, amp;
  };
  struct Blob {
    std::array<double, 3> p;
    double sigma, amp;
  };
  std::vector<Wave> waves(6);
  for (Wave& w : waves) {
    for (double& f : w.f) f = U(0.5, 4.0)(rng) / s;
    w.phase = U(0.0, 2.0 * std::numbers::pi)(rng);
    w.amp = U(0.3, 1.0)(rng);
  }
  std::vector<Blob> blobs(8);
  for (Blob& b : blobs) {
    for (int a = 0; a < 3; ++a) b.p[a] = centre[a] + U(-0.6, 0.6)(rng) * radius[a];
    b.sigma = U(1.5, 5.0)(rng);
    b.amp = U(-1.5, 1.5)(rng);
  }

  const Shape3 shape{size, size, size};
  Volume v(shape);
  Mask inside(shape);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      for (std::size_t k = 0; k < size; ++k) {
        const std::array<double, 3> x{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)};
        double r2 = 0.0;
        for (int a = 0; a < 3; ++a) r2 += std::pow((x[a] - centre[a]) / radius[a], 2);
        if (r2 > 1.0) continue;
        double val = 0.0;
        for (const Wave& w : waves) {
          val += w.amp * std::cos(2.0 * std::numbers::pi * (w.f[0] * x[0] + w.f[1] * x[1] + w.f[2] * x[2]) + w.phase);
        }
        for (const Blob& b : blobs) {
          double d2 = 0.0;
          for (int a = 0; a < 3; ++a) d2 += (x[a] - b.p[a]) * (x[a] - b.p[a]);
          val += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        }
        v(i, j, k) = val;
        inside.set(i, j, k, true);
        lo = std::min(lo, val);
        hi = std::max(hi, val);
      }
    }
  }
  auto data = v.data();
  for (std::size_t n = 0; n < data.size(); ++n) {
    data[n] = inside.at(n) ? 0.2 + 0.8 * (data[n] - lo) / (hi - lo) : 0.0;
  }
  v.set_normalization(IntensityNormalization{0.0, 1.0});
  return v;
}

std::vector<Volume> make_phantoms(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Volume> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_phantom(size, rng));
  return out;
}

}  // namespace anisosr
