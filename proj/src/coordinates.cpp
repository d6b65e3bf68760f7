#include "anisosr/coordinates.hpp"

#include <algorithm>
#include <string>

namespace anisosr {

const char* view_name(View v) { return v == View::Axial ? "axial" : "coronal"; }

ReferenceFrame::ReferenceFrame(Shape3 shape) : shape_(shape) {
  if (shape.voxels() == 0) throw ValidationError("reference frame needs a non-empty shape");
}

Vec3 ReferenceFrame::to_coord(const Vec3& index) const {
  return {index_to_coord(index[0], shape_.h), index_to_coord(index[1], shape_.w), index_to_coord(index[2], shape_.d)};
}

Vec3 ReferenceFrame::to_index(const Vec3& coord) const {
  return {coord_to_index(coord[0], shape_.h), coord_to_index(coord[1], shape_.w), coord_to_index(coord[2], shape_.d)};
}

namespace {

// HR position of LR sample k; the product is formed first so integer scales
// land exactly on HR nodes.
double lr_to_hr(std::size_t k, const ScaleSpec& s) {
  return static_cast<double>(k) * static_cast<double>(s.hr_size) / static_cast<double>(s.lr_size);
}

Axis view_axis(View v) { return v == View::Axial ? Axis::D : Axis::W; }

}  // namespace

CoordinateSet lr_sample_positions(const ReferenceFrame& frame, View view, const ScaleSpec& scale) {
  const Shape3& hr = frame.shape();
  const Axis axis = view_axis(view);
  if (scale.axis != axis) throw ValidationError(std::string("scale axis does not match the ") + view_name(view) + " view");
  if (scale.hr_size != hr[axis]) throw ValidationError("scale is inconsistent with the reference frame");

  Shape3 lr = hr;
  lr[axis] = scale.lr_size;
  CoordinateSet set;
  set.view = view;
  set.coords.reserve(lr.voxels());
  for (std::size_t i = 0; i < lr.h; ++i) {
    for (std::size_t j = 0; j < lr.w; ++j) {
      for (std::size_t k = 0; k < lr.d; ++k) {
        Vec3 pos{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)};
        pos[axis_index(axis)] = lr_to_hr(axis == Axis::D ? k : j, scale);
        set.coords.push_back(frame.to_coord(pos));
      }
    }
  }
  return set;
}

std::pair<CoordinateSet, CoordinateSet> matching_sets(const LRPair& pair, const ReferenceFrame& frame) {
  if (!(frame.shape() == pair.hr_shape)) throw ValidationError("pair is inconsistent with the reference frame");
  auto m_ax = lr_sample_positions(frame, View::Axial, pair.scale_ax);
  auto m_cor = lr_sample_positions(frame, View::Coronal, pair.scale_cor);
  if (m_ax.size() != pair.axial.size() || m_cor.size() != pair.coronal.size()) {
    throw ValidationError("LR volume shapes disagree with their scale specs");
  }
  m_ax.targets.assign(pair.axial.data().begin(), pair.axial.data().end());
  m_cor.targets.assign(pair.coronal.data().begin(), pair.coronal.data().end());
  return {std::move(m_ax), std::move(m_cor)};
}

Vec3 PatchPair::local_to_hr(const Vec3& local) const {
  const Vec3 idx = local_frame().to_index(local);
  return {hr_cube_origin[0] + idx[0], hr_cube_origin[1] + idx[1], hr_cube_origin[2] + idx[2]};
}

Vec3 PatchPair::hr_to_local(const Vec3& hr_pos) const {
  return local_frame().to_coord(
      {hr_pos[0] - hr_cube_origin[0], hr_pos[1] - hr_cube_origin[1], hr_pos[2] - hr_cube_origin[2]});
}

std::size_t patch_cube_side(double effective) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(kPatchLrSlices) * effective));
}

PatchPair whole_volume_patch(const LRPair& pair) {
  PatchPair pp;
  pp.axial.data = pair.axial;
  pp.axial.step = {1.0, 1.0, pair.scale_ax.effective()};
  pp.coronal.data = pair.coronal;
  pp.coronal.step = {1.0, pair.scale_cor.effective(), 1.0};
  pp.hr_cube_size = pair.hr_shape;
  return pp;
}

PatchPair sample_patch_pair(const LRPair& pair, Rng& rng) {
  const double e_ax = pair.scale_ax.effective();
  const double e_cor = pair.scale_cor.effective();
  const std::size_t side_d = patch_cube_side(e_ax);
  const std::size_t side_w = patch_cube_side(e_cor);
  const std::size_t side_h = std::max(side_d, side_w);
  const Shape3& hr = pair.hr_shape;
  const std::size_t lr_d = pair.axial.shape().d;
  const std::size_t lr_w = pair.coronal.shape().w;

  auto too_small = [&] {
    return ValidationError("volume " + std::to_string(hr.h) + "x" + std::to_string(hr.w) + "x" +
                           std::to_string(hr.d) + " is smaller than one patch cube");
  };
  if (hr.h < side_h || hr.w < side_w || hr.d < side_d || lr_d < kPatchLrSlices || lr_w < kPatchLrSlices) {
    throw too_small();
  }
  // Largest LR start index whose cube still fits in the HR frame.
  const auto max_start = [](std::size_t lr_n, std::size_t hr_n, std::size_t side, double e) -> long {
    const long by_lr = static_cast<long>(lr_n) - static_cast<long>(kPatchLrSlices);
    const long by_hr = static_cast<long>(std::floor(static_cast<double>(hr_n - side) / e + 1e-9));
    return std::min(by_lr, by_hr);
  };
  const long j_max = max_start(lr_w, hr.w, side_w, e_cor);
  const long k_max = max_start(lr_d, hr.d, side_d, e_ax);
  if (j_max < 0 || k_max < 0) throw too_small();

  using Dist = std::uniform_int_distribution<long>;
  const long i0 = Dist(0, static_cast<long>(hr.h - side_h))(rng);
  const long j0 = Dist(0, j_max)(rng);
  const long k0 = Dist(0, k_max)(rng);

  const double origin_w = static_cast<double>(j0) * static_cast<double>(pair.scale_cor.hr_size) /
                          static_cast<double>(pair.scale_cor.lr_size);
  const double origin_d = static_cast<double>(k0) * static_cast<double>(pair.scale_ax.hr_size) /
                          static_cast<double>(pair.scale_ax.lr_size);
  // Full-resolution axes start at the first HR node inside the cube.
  const auto first_node = [](double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); };
  const std::size_t ax_w0 = first_node(origin_w);
  const std::size_t cor_d0 = first_node(origin_d);

  PatchPair pp;
  pp.hr_cube_origin = {static_cast<double>(i0), origin_w, origin_d};
  pp.hr_cube_size = Shape3{side_h, side_w, side_d};
  pp.axial.data = extract_region(pair.axial, {static_cast<std::size_t>(i0), ax_w0, static_cast<std::size_t>(k0)},
                                 Shape3{side_h, side_w, kPatchLrSlices});
  pp.axial.start = {static_cast<double>(i0), static_cast<double>(ax_w0), origin_d};
  pp.axial.step = {1.0, 1.0, e_ax};
  pp.coronal.data = extract_region(pair.coronal, {static_cast<std::size_t>(i0), static_cast<std::size_t>(j0), cor_d0},
                                   Shape3{side_h, kPatchLrSlices, side_d});
  pp.coronal.start = {static_cast<double>(i0), origin_w, static_cast<double>(cor_d0)};
  pp.coronal.step = {1.0, e_cor, 1.0};
  return pp;
}

namespace {

CoordinateSet draw_restricted(const PatchPair& pp, const ViewPatch& vp, View view, std::size_t n, Rng& rng) {
  const Shape3& s = vp.data.shape();
  const Vec3& o = pp.hr_cube_origin;
  const Shape3& cube = pp.hr_cube_size;
  constexpr double tol = 1e-9;

  std::vector<std::size_t> eligible;
  eligible.reserve(s.voxels());
  for (std::size_t a = 0; a < s.h; ++a) {
    for (std::size_t b = 0; b < s.w; ++b) {
      for (std::size_t c = 0; c < s.d; ++c) {
        const Vec3 p = vp.hr_position(a, b, c);
        bool inside = true;
        for (int ax = 0; ax < 3; ++ax) {
          const double rel = p[ax] - o[ax];
          inside = inside && rel >= -tol && rel <= static_cast<double>(cube[ax] - 1) + tol;
        }
        if (inside) eligible.push_back(s.linear(a, b, c));
      }
    }
  }
  if (eligible.empty()) throw ValidationError(std::string("empty restricted ") + view_name(view) + " matching set");

  CoordinateSet set;
  set.view = view;
  set.coords.reserve(n);
  set.targets.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  const auto data = vp.data.data();
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lin = eligible[pick(rng)];
    const std::size_t c = lin % s.d;
    const std::size_t b = (lin / s.d) % s.w;
    const std::size_t a = lin / (s.d * s.w);
    Vec3 local = pp.hr_to_local(vp.hr_position(a, b, c));
    for (double& x : local) x = std::clamp(x, -1.0, 1.0);
    set.coords.push_back(local);
    set.targets.push_back(data[lin]);
  }
  return set;
}

}  // namespace

std::pair<CoordinateSet, CoordinateSet> sample_patch_coordinates(const PatchPair& pp, std::size_t n, Rng& rng) {
  if (n == 0) throw ValidationError("need at least one sample per patch");
  auto ax = draw_restricted(pp, pp.axial, View::Axial, n, rng);
  auto cor = draw_restricted(pp, pp.coronal, View::Coronal, n, rng);
  return {std::move(ax), std::move(cor)};
}

}  // namespace anisosr
