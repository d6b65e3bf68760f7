/**
 * @file coordinates.hpp
 * @brief Shared normalized reference frame, matching coordinate sets, training
 *        patch geometry and trilinear feature sampling.
 *
 * All geometry is expressed in "HR units": continuous voxel indices of the
 * high-resolution frame. LR sample k along a degraded axis of size N -> M sits
 * at HR position k * N / M. Normalized coordinates use the align-corners
 * convention i -> -1 + 2 i / (n - 1).
 */
#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "anisosr/degradation.hpp"
#include "anisosr/feature_map.hpp"

namespace anisosr {

using Vec3 = std::array<double, 3>;

enum class View { Axial, Coronal };
const char* view_name(View v);

class ReferenceFrame {
 public:
  ReferenceFrame() = default;
  explicit ReferenceFrame(Shape3 shape);

  const Shape3& shape() const { return shape_; }

  /// -1 + 2 i / (n - 1); a singleton axis maps to 0.
  static double index_to_coord(double index, std::size_t n) {
    return n > 1 ? -1.0 + 2.0 * index / static_cast<double>(n - 1) : 0.0;
  }
  static double coord_to_index(double coord, std::size_t n) {
    return n > 1 ? (coord + 1.0) * 0.5 * static_cast<double>(n - 1) : 0.0;
  }

  Vec3 to_coord(const Vec3& index) const;
  Vec3 to_index(const Vec3& coord) const;

 private:
  Shape3 shape_{};
};

struct CoordinateSet {
  View view = View::Axial;
  std::vector<Vec3> coords;
  std::vector<double> targets;

  std::size_t size() const { return coords.size(); }
};

/// HR-unit positions of every LR sample of one view, normalized through
/// `frame`, in LR storage order. Targets are left empty.
CoordinateSet lr_sample_positions(const ReferenceFrame& frame, View view, const ScaleSpec& scale);

/// (M_ax, M_cor): LR sample positions with the LR intensities as targets.
std::pair<CoordinateSet, CoordinateSet> matching_sets(const LRPair& pair, const ReferenceFrame& frame);

/// An LR array placed in HR units: sample (a, b, c) sits at start + (a, b, c) * step.
struct ViewPatch {
  Volume data;
  Vec3 start{0.0, 0.0, 0.0};
  Vec3 step{1.0, 1.0, 1.0};

  /// Continuous LR index of an HR-unit position.
  Vec3 lr_index(const Vec3& hr_pos) const {
    return {(hr_pos[0] - start[0]) / step[0], (hr_pos[1] - start[1]) / step[1], (hr_pos[2] - start[2]) / step[2]};
  }
  Vec3 hr_position(std::size_t a, std::size_t b, std::size_t c) const {
    return {start[0] + static_cast<double>(a) * step[0], start[1] + static_cast<double>(b) * step[1],
            start[2] + static_cast<double>(c) * step[2]};
  }
};

/// Axial and coronal LR patches covering one HR cube.
struct PatchPair {
  ViewPatch axial;
  ViewPatch coronal;
  Vec3 hr_cube_origin{0.0, 0.0, 0.0};
  Shape3 hr_cube_size{};

  ReferenceFrame local_frame() const { return ReferenceFrame(hr_cube_size); }
  Vec3 local_to_hr(const Vec3& local) const;
  Vec3 hr_to_local(const Vec3& hr_pos) const;
};

/// Patch side along the degraded axis, in LR samples.
inline constexpr std::size_t kPatchLrSlices = 10;

/// Cube side along one axis: round(10 * effective).
std::size_t patch_cube_side(double effective);

/// The whole pair viewed as one patch covering the full HR frame.
PatchPair whole_volume_patch(const LRPair& pair);

/// Random HR cube, origin snapped to LR sample positions of both views.
/// Throws ValidationError when the pair is smaller than one cube.
PatchPair sample_patch_pair(const LRPair& pair, Rng& rng);

/// n uniform draws (with replacement) from M_ax and from M_cor restricted to the
/// cube, in the cube's local frame.
std::pair<CoordinateSet, CoordinateSet> sample_patch_coordinates(const PatchPair& pp, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Trilinear sampling

/// Corner indices and weights for one axis. Positions are clamped to [0, n-1].
struct LinearStencil {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w_hi = 0.0;

  static LinearStencil make(double x, std::size_t n) {
    LinearStencil s;
    if (n <= 1) return s;
    const double top = static_cast<double>(n - 1);
    x = x < 0.0 ? 0.0 : (x > top ? top : x);
    auto lo = static_cast<std::size_t>(std::floor(x));
    if (lo > n - 2) lo = n - 2;
    s.lo = lo;
    s.hi = lo + 1;
    s.w_hi = x - static_cast<double>(lo);
    return s;
  }
};

/// Sample `fmap` at a continuous index position (clamped to the map), writing
/// `fmap.channels` values to `out`.
template <typename T>
void trilinear_at_index(const FeatureMap<T>& fmap, const Vec3& index, T* out) {
  const auto sx = LinearStencil::make(index[0], fmap.shape.h);
  const auto sy = LinearStencil::make(index[1], fmap.shape.w);
  const auto sz = LinearStencil::make(index[2], fmap.shape.d);
  const std::size_t c = fmap.channels;
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = T(0);
  for (int a = 0; a < 2; ++a) {
    const double wa = a ? sx.w_hi : 1.0 - sx.w_hi;
    if (wa == 0.0) continue;
    for (int b = 0; b < 2; ++b) {
      const double wb = b ? sy.w_hi : 1.0 - sy.w_hi;
      if (wb == 0.0) continue;
      for (int e = 0; e < 2; ++e) {
        const double we = e ? sz.w_hi : 1.0 - sz.w_hi;
        if (we == 0.0) continue;
        const T w = static_cast<T>(wa * wb * we);
        const T* v = fmap.voxel(a ? sx.hi : sx.lo, b ? sy.hi : sy.lo, e ? sz.hi : sz.lo);
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] += w * v[ch];
      }
    }
  }
}

/// Adjoint of trilinear_at_index: scatter `grad` into `dmap` with the same weights.
template <typename T>
void trilinear_scatter_index(FeatureMap<T>& dmap, const Vec3& index, const T* grad) {
  const auto sx = LinearStencil::make(index[0], dmap.shape.h);
  const auto sy = LinearStencil::make(index[1], dmap.shape.w);
  const auto sz = LinearStencil::make(index[2], dmap.shape.d);
  const std::size_t c = dmap.channels;
  for (int a = 0; a < 2; ++a) {
    const double wa = a ? sx.w_hi : 1.0 - sx.w_hi;
    if (wa == 0.0) continue;
    for (int b = 0; b < 2; ++b) {
      const double wb = b ? sy.w_hi : 1.0 - sy.w_hi;
      if (wb == 0.0) continue;
      for (int e = 0; e < 2; ++e) {
        const double we = e ? sz.w_hi : 1.0 - sz.w_hi;
        if (we == 0.0) continue;
        const T w = static_cast<T>(wa * wb * we);
        T* v = dmap.voxel(a ? sx.hi : sx.lo, b ? sy.hi : sy.lo, e ? sz.hi : sz.lo);
        for (std::size_t ch = 0; ch < c; ++ch) v[ch] += w * grad[ch];
      }
    }
  }
}

/// Sample at normalized coordinates of the map's own align-corners frame.
/// Throws ValidationError for coordinates outside [-1, 1] (beyond 1e-9).
template <typename T>
std::vector<std::vector<T>> trilinear_sample(const FeatureMap<T>& fmap, std::span<const Vec3> coords) {
  std::vector<std::vector<T>> out;
  out.reserve(coords.size());
  for (const Vec3& c : coords) {
    for (double x : c) {
      if (!(x >= -1.0 - 1e-9 && x <= 1.0 + 1e-9)) {
        throw ValidationError("coordinate outside [-1, 1]");
      }
    }
    const Vec3 idx{ReferenceFrame::coord_to_index(c[0], fmap.shape.h),
                   ReferenceFrame::coord_to_index(c[1], fmap.shape.w),
                   ReferenceFrame::coord_to_index(c[2], fmap.shape.d)};
    std::vector<T> v(fmap.channels);
    trilinear_at_index(fmap, idx, v.data());
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace anisosr
