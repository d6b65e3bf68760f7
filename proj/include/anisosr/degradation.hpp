/**
 * @file degradation.hpp
 * @brief Simulation of anisotropic low-resolution views by centred k-space
 *        cropping along one axis.
 */
#pragma once

#include <cstdint>
#include <random>

#include "anisosr/volume.hpp"

namespace anisosr {

using Rng = std::mt19937_64;

/// Downsampling bookkeeping for one view.
struct ScaleSpec {
  double requested = 1.0;
  Axis axis = Axis::D;
  std::size_t hr_size = 1;
  std::size_t lr_size = 1;

  /// hr_size / lr_size: the distance between LR samples in HR voxel units.
  double effective() const { return static_cast<double>(hr_size) / static_cast<double>(lr_size); }
};

/// lr_size = round(hr_size / requested); requires requested >= 1 and lr_size >= 2.
ScaleSpec make_scale_spec(std::size_t hr_size, double requested, Axis axis);

/// Two orthogonal LR views of the same HR frame. The axial view is degraded
/// along d, the coronal view along w.
struct LRPair {
  Volume axial;
  Volume coronal;
  ScaleSpec scale_ax;
  ScaleSpec scale_cor;
  Shape3 hr_shape;

  /// HR voxel spacing implied by the pair (in-plane spacing of each view).
  Spacing3 base_spacing() const;
};

/// Assemble a pair from two already-degraded volumes; the HR frame and the
/// effective scales follow from the shapes. Throws ValidationError on
/// inconsistent shapes.
LRPair make_lr_pair(Volume axial, Volume coronal, double requested_ax = 0.0, double requested_cor = 0.0);

/// Forward DFT along `axis`, keep the lr_size centred lowest frequencies
/// (for even lr_size: -lr_size/2 .. lr_size/2-1), inverse DFT of length
/// lr_size, rescale by lr_size/hr_size so the mean is preserved, real part.
Volume kspace_downsample_axis(const Volume& v, Axis axis, std::size_t lr_size);

/// Axial = crop along d, coronal = crop along w, both with
/// lr_size = round(size / scale). Requires 1 < scale <= min(w, d) / 2.
LRPair simulate_lr_pair(const Volume& hr, double scale);

/// Uniform draw in [lo, hi] (training scales default to [2, 4]).
double sample_training_scale(Rng& rng, double lo = 2.0, double hi = 4.0);

}  // namespace anisosr
