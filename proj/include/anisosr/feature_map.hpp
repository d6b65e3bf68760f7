#pragma once

#include <cstddef>
#include <vector>

#include "anisosr/volume.hpp"

namespace anisosr {

/// Channels-last 4-D array (h, w, d, c).
template <typename T>
struct FeatureMap {
  Shape3 shape{};
  std::size_t channels = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(Shape3 s, std::size_t c, T fill = T(0)) : shape(s), channels(c), data(s.voxels() * c, fill) {}

  T* voxel(std::size_t linear) { return data.data() + linear * channels; }
  const T* voxel(std::size_t linear) const { return data.data() + linear * channels; }
  T* voxel(std::size_t i, std::size_t j, std::size_t k) { return voxel(shape.linear(i, j, k)); }
  const T* voxel(std::size_t i, std::size_t j, std::size_t k) const { return voxel(shape.linear(i, j, k)); }
};

}  // namespace anisosr
