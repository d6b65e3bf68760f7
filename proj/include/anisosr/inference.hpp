/**
 * @file inference.hpp
 * @brief Dense super-resolution of an LR pair at any target grid.
 */
#pragma once

#include <optional>
#include <string>
#include <utility>

#include "anisosr/network.hpp"

namespace anisosr {

struct InferenceConfig {
  std::size_t chunk_size = 65536;
  bool clamp = true;
  std::optional<Shape3> target_shape;
  /// Largest LR volume encoded in one pass; larger volumes are encoded in
  /// overlapping tiles. 0 means unlimited.
  std::size_t encode_voxel_budget = 0;

  void validate() const;
};

struct InferenceTiming {
  double encode_s = 0.0;
  double decode_s = 0.0;
  double total_s = 0.0;

  std::string to_json() const;
};

/// Encode each full LR view once, then decode every node of the target grid
/// (align-corners nodes of the shared frame) in chunks.
Volume super_resolve(const ModelParams& model, const LRPair& pair, const InferenceConfig& cfg = {},
                     InferenceTiming* timing = nullptr);

/// Encoder output for a whole volume, tiled when it exceeds `voxel_budget`.
/// Tiles overlap by the receptive-field radius and only their centres are kept,
/// so the result equals the untiled encoding.
FeatureMap<float> encode_volume(const Encoder<float>& encoder, const Volume& v, std::size_t voxel_budget);

/// MSE of `sr` sampled (trilinearly, in HR units) at both matching sets
/// against the LR intensities; sr must have the pair's HR shape.
double reconstruct_pair_consistency(const Volume& sr, const LRPair& pair);

/// The axial and coronal terms of reconstruct_pair_consistency (which is their mean).
std::pair<double, double> pair_consistency_views(const Volume& sr, const LRPair& pair);

}  // namespace anisosr
