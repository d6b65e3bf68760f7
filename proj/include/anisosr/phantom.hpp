/**
 * @file phantom.hpp
 * @brief Synthetic head-like test volumes.
 */
#pragma once

#include <vector>

#include "anisosr/degradation.hpp"

namespace anisosr {

/// Smallest cube that holds one x2 training patch.
std::size_t min_phantom_size();

/// Random low-frequency sinusoids plus Gaussian blobs inside a random
/// ellipsoid, rescaled to [0.2, 1] inside and 0 outside; 1 mm isotropic.
/// Throws ValidationError("too small for patch geometry") below min_phantom_size().
Volume make_phantom(std::size_t size, Rng& rng);

/// `n` phantoms from one seeded stream.
std::vector<Volume> make_phantoms(std::size_t n, std::size_t size, std::uint64_t seed);

}  // namespace anisosr
