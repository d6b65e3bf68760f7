/**
 * @file volume.cpp
 * @brief Volume/Mask containers, intensity normalization, masks and cropping.
 */

#include "anisosr/volume.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

namespace anisosr {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::H:
      return "h";
    case Axis::W:
      return "w";
    case Axis::D:
      return "d";
  }
  return "?";
}

namespace {

void check_shape(const Shape3& shape) {
  if (shape.h == 0 || shape.w == 0 || shape.d == 0) {
    throw ValidationError("volume dimensions must all be >= 1");
  }
}

void check_spacing(const Spacing3& spacing) {
  for (double s : spacing) {
    if (!(s > 0.0)) throw ValidationError("spacing components must be > 0");
  }
}

}  // namespace

Volume::Volume(Shape3 shape, Spacing3 spacing, double fill)
    : shape_(shape), spacing_(spacing), data_(shape.voxels(), fill) {
  check_shape(shape_);
  check_spacing(spacing_);
}

Volume::Volume(Shape3 shape, Spacing3 spacing, std::vector<double> data)
    : shape_(shape), spacing_(spacing), data_(std::move(data)) {
  check_shape(shape_);
  check_spacing(spacing_);
  if (data_.size() != shape_.voxels()) {
    throw ValidationError("volume data size does not match its shape");
  }
}

void Volume::set_spacing(const Spacing3& spacing) {
  check_spacing(spacing);
  spacing_ = spacing;
}

double Volume::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Volume::max() const { return *std::max_element(data_.begin(), data_.end()); }
double Volume::mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

Mask::Mask(Shape3 shape, bool fill) : shape_(shape), data_(shape.voxels(), fill ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), static_cast<unsigned char>(1)));
}

Volume normalize_intensity(const Volume& v) {
  const double lo = v.min();
  const double hi = v.max();
  if (!(hi > lo)) throw ValidationError("degenerate intensity range");

  Volume out = v;
  const double inv = 1.0 / (hi - lo);
  for (double& x : out.data()) x = (x - lo) * inv;
  // Compose with an earlier normalization so `norm` always refers to the
  // original intensities.
  if (const auto& prev = v.normalization()) {
    const double span = prev->hi - prev->lo;
    out.set_normalization(IntensityNormalization{prev->lo + lo * span, prev->lo + hi * span});
  } else {
    out.set_normalization(IntensityNormalization{lo, hi});
  }
  return out;
}

namespace {

std::vector<unsigned char> largest_component(const Shape3& s, const std::vector<unsigned char>& fg) {
  std::vector<int> label(fg.size(), 0);
  int best_label = 0;
  std::size_t best_size = 0;
  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < fg.size(); ++seed) {
    if (!fg[seed] || label[seed] != 0) continue;
    ++next;
    std::size_t size = 0;
    label[seed] = next;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t idx = queue.front();
      queue.pop_front();
      ++size;
      const std::size_t k = idx % s.d;
      const std::size_t j = (idx / s.d) % s.w;
      const std::size_t i = idx / (s.d * s.w);
      auto visit = [&](std::size_t n) {
        if (fg[n] && label[n] == 0) {
          label[n] = next;
          queue.push_back(n);
        }
      };
      if (i > 0) visit(s.linear(i - 1, j, k));
      if (i + 1 < s.h) visit(s.linear(i + 1, j, k));
      if (j > 0) visit(s.linear(i, j - 1, k));
      if (j + 1 < s.w) visit(s.linear(i, j + 1, k));
      if (k > 0) visit(s.linear(i, j, k - 1));
      if (k + 1 < s.d) visit(s.linear(i, j, k + 1));
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
  }
  std::vector<unsigned char> out(fg.size(), 0);
  for (std::size_t n = 0; n < fg.size(); ++n) out[n] = (label[n] == best_label && best_label != 0) ? 1 : 0;
  return out;
}

// 3x3x3 cube; out-of-bounds neighbours count as `outside` so that closing stays extensive.
std::vector<unsigned char> morph(const Shape3& s, const std::vector<unsigned char>& in, bool dilate) {
  std::vector<unsigned char> out(in.size(), 0);
  const auto h = static_cast<long>(s.h), w = static_cast<long>(s.w), d = static_cast<long>(s.d);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      for (long k = 0; k < d; ++k) {
        bool any = false;
        bool all = true;
        for (long di = -1; di <= 1; ++di) {
          for (long dj = -1; dj <= 1; ++dj) {
            for (long dk = -1; dk <= 1; ++dk) {
              const long a = i + di, b = j + dj, c = k + dk;
              if (a < 0 || b < 0 || c < 0 || a >= h || b >= w || c >= d) continue;
              const bool v = in[s.linear(a, b, c)] != 0;
              any = any || v;
              all = all && v;
            }
          }
        }
        out[s.linear(i, j, k)] = (dilate ? any : all) ? 1 : 0;
      }
    }
  }
  return out;
}

}  // namespace

Mask foreground_mask(const Volume& v, double threshold) {
  const Shape3& s = v.shape();
  std::vector<unsigned char> fg(s.voxels(), 0);
  const auto data = v.data();
  bool any = false;
  for (std::size_t n = 0; n < fg.size(); ++n) {
    fg[n] = data[n] > threshold ? 1 : 0;
    any = any || fg[n];
  }
  if (!any) throw ValidationError("empty mask");

  auto closed = morph(s, morph(s, largest_component(s, fg), true), false);
  Mask m(s);
  for (std::size_t n = 0; n < closed.size(); ++n) m.set(n, closed[n] != 0);
  return m;
}

Volume extract_region(const Volume& v, const Offset3& origin, const Shape3& size) {
  const Shape3& s = v.shape();
  for (int a = 0; a < 3; ++a) {
    if (origin[a] + size[a] > s[a]) throw ValidationError("region exceeds volume bounds");
  }
  Volume out(size, v.spacing());
  out.set_normalization(v.normalization());
  for (std::size_t i = 0; i < size.h; ++i) {
    for (std::size_t j = 0; j < size.w; ++j) {
      const double* src = &v.data()[s.linear(origin[0] + i, origin[1] + j, origin[2])];
      std::copy(src, src + size.d, &out(i, j, 0));
    }
  }
  return out;
}

Volume embed_region(const Volume& part, const Shape3& full, const Offset3& offset) {
  const Shape3& p = part.shape();
  for (int a = 0; a < 3; ++a) {
    if (offset[a] + p[a] > full[a]) throw ValidationError("region exceeds volume bounds");
  }
  Volume out(full, part.spacing());
  for (std::size_t i = 0; i < p.h; ++i) {
    for (std::size_t j = 0; j < p.w; ++j) {
      for (std::size_t k = 0; k < p.d; ++k) out(offset[0] + i, offset[1] + j, offset[2] + k) = part(i, j, k);
    }
  }
  return out;
}

CropResult crop_background(const Volume& v, const Mask& m, std::size_t margin) {
  if (!(m.shape() == v.shape())) throw ValidationError("mask shape does not match volume");
  const Shape3& s = v.shape();
  std::array<std::size_t, 3> lo{s.h, s.w, s.d};
  std::array<std::size_t, 3> hi{0, 0, 0};
  bool any = false;
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t k = 0; k < s.d; ++k) {
        if (!m(i, j, k)) continue;
        any = true;
        const std::array<std::size_t, 3> idx{i, j, k};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], idx[a]);
          hi[a] = std::max(hi[a], idx[a]);
        }
      }
    }
  }
  if (!any) throw ValidationError("empty mask");

  Offset3 origin{};
  Shape3 size{};
  for (int a = 0; a < 3; ++a) {
    origin[a] = lo[a] > margin ? lo[a] - margin : 0;
    const std::size_t end = std::min(s[a], hi[a] + margin + 1);
    size[a] = end - origin[a];
  }

  CropResult r;
  r.volume = extract_region(v, origin, size);
  r.mask = Mask(size);
  for (std::size_t i = 0; i < size.h; ++i) {
    for (std::size_t j = 0; j < size.w; ++j) {
      for (std::size_t k = 0; k < size.d; ++k) r.mask.set(i, j, k, m(origin[0] + i, origin[1] + j, origin[2] + k));
    }
  }
  r.offset = origin;
  return r;
}

}  // namespace anisosr
