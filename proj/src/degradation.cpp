#include "anisosr/degradation.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

namespace anisosr {

namespace {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

FftwBuffer alloc(std::size_t n) { return FftwBuffer(fftw_alloc_complex(n)); }

// Signed frequency of DFT bin `b` for a length-n transform.
long signed_freq(std::size_t b, std::size_t n) {
  const auto bl = static_cast<long>(b);
  const auto nl = static_cast<long>(n);
  return bl < (nl + 1) / 2 ? bl : bl - nl;
}

std::size_t wrap(long f, std::size_t n) {
  const auto nl = static_cast<long>(n);
  return static_cast<std::size_t>(((f % nl) + nl) % nl);
}

}  // namespace

ScaleSpec make_scale_spec(std::size_t hr_size, double requested, Axis axis) {
  if (!(requested >= 1.0)) throw ValidationError("scale must be >= 1");
  ScaleSpec s;
  s.requested = requested;
  s.axis = axis;
  s.hr_size = hr_size;
  s.lr_size = static_cast<std::size_t>(std::llround(static_cast<double>(hr_size) / requested));
  if (s.lr_size < 2) {
    throw ValidationError("scale " + std::to_string(requested) + " too large for axis of size " +
                          std::to_string(hr_size));
  }
  return s;
}

Spacing3 LRPair::base_spacing() const {
  return {axial.spacing()[0], axial.spacing()[1], coronal.spacing()[2]};
}

LRPair make_lr_pair(Volume axial, Volume coronal, double requested_ax, double requested_cor) {
  const Shape3& a = axial.shape();
  const Shape3& c = coronal.shape();
  if (a.h != c.h) throw ValidationError("axial and coronal views disagree on h");
  if (c.w > a.w || a.d > c.d) {
    throw ValidationError("axial must be full resolution in w and coronal full resolution in d");
  }
  if (a.d < 2 || c.w < 2) throw ValidationError("LR views need at least two samples along the degraded axis");

  LRPair p;
  p.hr_shape = Shape3{a.h, a.w, c.d};
  p.scale_ax.axis = Axis::D;
  p.scale_ax.hr_size = c.d;
  p.scale_ax.lr_size = a.d;
  p.scale_ax.requested = requested_ax > 0.0 ? requested_ax : p.scale_ax.effective();
  p.scale_cor.axis = Axis::W;
  p.scale_cor.hr_size = a.w;
  p.scale_cor.lr_size = c.w;
  p.scale_cor.requested = requested_cor > 0.0 ? requested_cor : p.scale_cor.effective();
  p.axial = std::move(axial);
  p.coronal = std::move(coronal);
  return p;
}

Volume kspace_downsample_axis(const Volume& v, Axis axis, std::size_t lr_size) {
  const Shape3& s = v.shape();
  const int ax = axis_index(axis);
  const std::size_t n = s[ax];
  const std::size_t m = lr_size;
  if (m < 2 || m > n) {
    throw ValidationError("lr_size " + std::to_string(m) + " out of range [2, " + std::to_string(n) + "]");
  }

  Shape3 out_shape = s;
  out_shape[ax] = m;
  Spacing3 spacing = v.spacing();
  spacing[ax] *= static_cast<double>(n) / static_cast<double>(m);
  Volume out(out_shape, spacing);
  out.set_normalization(v.normalization());

  auto in_buf = alloc(n);
  auto spec = alloc(n);
  auto lr_spec = alloc(m);
  auto lr_buf = alloc(m);
  Plan fwd(fftw_plan_dft_1d(static_cast<int>(n), in_buf.get(), spec.get(), FFTW_FORWARD, FFTW_ESTIMATE));
  Plan inv(fftw_plan_dft_1d(static_cast<int>(m), lr_spec.get(), lr_buf.get(), FFTW_BACKWARD, FFTW_ESTIMATE));

  // Retained band: [-m/2, m - m/2 - 1] for even m (negative Nyquist kept),
  // [-(m-1)/2, (m-1)/2] for odd m.
  const long f_lo = -static_cast<long>(m / 2);
  const long f_hi = static_cast<long>(m) - static_cast<long>(m / 2) - 1;
  const double amp = 1.0 / static_cast<double>(n);  // FFTW is unnormalised: (1/m)*(m/n)
  const bool lone_nyquist = (m % 2 == 0) && m < n;

  // Strides for walking a line along `ax`.
  const std::size_t stride_in = ax == 2 ? 1 : (ax == 1 ? s.d : s.w * s.d);
  const std::size_t stride_out = ax == 2 ? 1 : (ax == 1 ? out_shape.d : out_shape.w * out_shape.d);
  const auto in = v.data();
  auto dst = out.data();

  std::array<std::size_t, 3> other_a{};
  int o1 = (ax + 1) % 3, o2 = (ax + 2) % 3;
  if (o1 > o2) std::swap(o1, o2);
  for (other_a[o1] = 0; other_a[o1] < s[o1]; ++other_a[o1]) {
    for (other_a[o2] = 0; other_a[o2] < s[o2]; ++other_a[o2]) {
      other_a[ax] = 0;
      const std::size_t base_in = s.linear(other_a[0], other_a[1], other_a[2]);
      const std::size_t base_out = out_shape.linear(other_a[0], other_a[1], other_a[2]);

      double signal_sq = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double x = in[base_in + t * stride_in];
        in_buf[t][0] = x;
        in_buf[t][1] = 0.0;
        signal_sq += x * x;
      }
      fftw_execute(fwd.get());
      for (std::size_t b = 0; b < m; ++b) {
        lr_spec[b][0] = 0.0;
        lr_spec[b][1] = 0.0;
      }
      for (long f = f_lo; f <= f_hi; ++f) {
        const std::size_t src = wrap(f, n);
        const std::size_t tgt = wrap(f, m);
        lr_spec[tgt][0] = spec[src][0];
        lr_spec[tgt][1] = spec[src][1];
      }
      // Imaginary part of the unpaired Nyquist coefficient alternates in sign
      // over the output; everything else must come back real.
      const double nyq_imag = lone_nyquist ? lr_spec[m / 2][1] * amp : 0.0;
      fftw_execute(inv.get());

      double residue_sq = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        dst[base_out + t * stride_out] = lr_buf[t][0] * amp;
        const double sign = (t % 2 == 0) ? 1.0 : -1.0;
        const double r = lr_buf[t][1] * amp - sign * nyq_imag;
        residue_sq += r * r;
      }
      if (std::sqrt(residue_sq) > 1e-9 * std::max(1.0, std::sqrt(signal_sq))) {
        throw std::logic_error("k-space crop produced a non-real signal");
      }
    }
  }
  return out;
}

LRPair simulate_lr_pair(const Volume& hr, double scale) {
  const Shape3& s = hr.shape();
  if (!(scale > 1.0)) throw ValidationError("scale must exceed 1");
  const double limit = static_cast<double>(std::min(s.w, s.d)) / 2.0;
  if (scale > limit) {
    throw ValidationError("scale " + std::to_string(scale) + " too large for volume (max " +
                          std::to_string(limit) + ")");
  }
  if (hr.min() < -1e-9 || hr.max() > 1.0 + 1e-9) throw ValidationError("HR volume must be normalized to [0,1]");

  const ScaleSpec sax = make_scale_spec(s.d, scale, Axis::D);
  const ScaleSpec scor = make_scale_spec(s.w, scale, Axis::W);
  LRPair p;
  p.axial = kspace_downsample_axis(hr, Axis::D, sax.lr_size);
  p.coronal = kspace_downsample_axis(hr, Axis::W, scor.lr_size);
  p.scale_ax = sax;
  p.scale_cor = scor;
  p.hr_shape = s;
  return p;
}

double sample_training_scale(Rng& rng, double lo, double hi) {
  if (!(hi >= lo)) throw ValidationError("scale range must satisfy lo <= hi");
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace anisosr
