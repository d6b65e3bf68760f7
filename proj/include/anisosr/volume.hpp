/**
 * @file volume.hpp
 * @brief Dense 3-D intensity volumes, masks and the array conventions shared by
 *        every other module.
 *
 * Axes are (h, w, d). The axial low-resolution view is degraded along d, the
 * coronal view along w. Storage is row-major with d fastest.
 */
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "anisosr/errors.hpp"

namespace anisosr {

enum class Axis : int { H = 0, W = 1, D = 2 };

constexpr int axis_index(Axis a) { return static_cast<int>(a); }
const char* axis_name(Axis a);

struct Shape3 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t d = 0;

  std::size_t operator[](int axis) const { return axis == 0 ? h : (axis == 1 ? w : d); }
  std::size_t& operator[](int axis) { return axis == 0 ? h : (axis == 1 ? w : d); }
  std::size_t operator[](Axis axis) const { return (*this)[axis_index(axis)]; }
  std::size_t& operator[](Axis axis) { return (*this)[axis_index(axis)]; }

  std::size_t voxels() const { return h * w * d; }
  std::size_t linear(std::size_t i, std::size_t j, std::size_t k) const { return (i * w + j) * d + k; }

  friend bool operator==(const Shape3&, const Shape3&) = default;
};

using Spacing3 = std::array<double, 3>;
using Offset3 = std::array<std::size_t, 3>;

/// Affine map that took original intensities [lo, hi] onto [0, 1].
struct IntensityNormalization {
  double lo = 0.0;
  double hi = 1.0;
};

class Volume {
 public:
  Volume() = default;
  Volume(Shape3 shape, Spacing3 spacing = {1.0, 1.0, 1.0}, double fill = 0.0);
  Volume(Shape3 shape, Spacing3 spacing, std::vector<double> data);

  const Shape3& shape() const { return shape_; }
  const Spacing3& spacing() const { return spacing_; }
  void set_spacing(const Spacing3& spacing);

  const std::optional<IntensityNormalization>& normalization() const { return norm_; }
  void set_normalization(std::optional<IntensityNormalization> norm) { norm_ = norm; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[shape_.linear(i, j, k)]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[shape_.linear(i, j, k)]; }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double min() const;
  double max() const;
  double mean() const;

 private:
  Shape3 shape_{};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  std::vector<double> data_;
  std::optional<IntensityNormalization> norm_;
};

class Mask {
 public:
  Mask() = default;
  explicit Mask(Shape3 shape, bool fill = false);

  const Shape3& shape() const { return shape_; }
  bool operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[shape_.linear(i, j, k)] != 0; }
  void set(std::size_t i, std::size_t j, std::size_t k, bool v) { data_[shape_.linear(i, j, k)] = v ? 1 : 0; }
  bool at(std::size_t linear) const { return data_[linear] != 0; }
  void set(std::size_t linear, bool v) { data_[linear] = v ? 1 : 0; }

  std::span<const unsigned char> data() const { return data_; }
  std::size_t count() const;
  std::size_t size() const { return data_.size(); }

 private:
  Shape3 shape_{};
  std::vector<unsigned char> data_;
};

/// Affinely rescale to [0, 1] using the global min/max.
/// Throws ValidationError("degenerate intensity range") on constant input.
Volume normalize_intensity(const Volume& v);

/// Threshold, keep the largest 6-connected component, close with a 3x3x3 cube.
/// Throws ValidationError("empty mask") when nothing exceeds the threshold.
Mask foreground_mask(const Volume& v, double threshold = 0.0);

struct CropResult {
  Volume volume;
  Mask mask;
  Offset3 offset{};
};

/// Tight bounding box of the mask grown by `margin` voxels and clamped to bounds.
CropResult crop_background(const Volume& v, const Mask& m, std::size_t margin);

/// Sub-block copy; the region must lie inside the volume.
Volume extract_region(const Volume& v, const Offset3& origin, const Shape3& size);

/// Inverse of a crop: place `part` into a zero volume of `full` shape at `offset`.
Volume embed_region(const Volume& part, const Shape3& full, const Offset3& offset);

}  // namespace anisosr
