/**
 * @file nifti_io.hpp
 * @brief Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
 *
 * Reads 3-D scalar payloads of the common integer and floating datatypes,
 * applying scl_slope/scl_inter. Volumes are written as FLOAT64 so that a
 * save/load round-trip is exact; masks are written as UINT8.
 */
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "anisosr/volume.hpp"

namespace anisosr {

/// Throws IoError for missing/unreadable files and invalid headers, and
/// ValidationError("non-3-D payload") for images that are not 3-D scalar.
Volume load_volume(const std::filesystem::path& path);

/// `description` lands in the 80-byte descrip field (truncated).
void save_volume(const Volume& v, const std::filesystem::path& path, std::string_view description = {});

void save_mask(const Mask& m, const Spacing3& spacing, const std::filesystem::path& path,
               std::string_view description = {});
Mask load_mask(const std::filesystem::path& path);

/// The descrip string stored in a file header.
std::string read_description(const std::filesystem::path& path);

}  // namespace anisosr
