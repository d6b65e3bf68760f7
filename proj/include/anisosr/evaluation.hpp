/**
 * @file evaluation.hpp
 * @brief Masked PSNR / SSIM, the per-view cubic-spline baseline, reports and
 *        slice export.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anisosr/degradation.hpp"

namespace anisosr {

/// 10 log10(1 / MSE) over masked voxels, data range 1. +infinity when the
/// masked voxels are identical.
double psnr(const Volume& pred, const Volume& ref, const Mask& mask);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean over the mask of the 3-D SSIM map. Local statistics use a Gaussian
/// window truncated at the volume boundary and renormalized.
double ssim(const Volume& pred, const Volume& ref, const Mask& mask, const SsimParams& p = {});

/// Natural cubic spline through the LR samples (knots at k * N / M along
/// scale.axis), evaluated at the `target_size` align-corners nodes of the HR
/// axis. Needs at least four samples.
Volume cubic_spline_upsample(const Volume& lr, const ScaleSpec& scale, std::size_t target_size);

struct Timing {
  double offline_s = 0.0;
  double online_s = 0.0;
};

struct MetricsReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t mask_voxels = 0;
  std::string method;
  double scale = 0.0;
  std::optional<Timing> timing;

  /// PSNR is written as the string "inf" when infinite.
  std::string to_json() const;
};

/// Single-volume method: metrics computed directly.
MetricsReport evaluate_method(const Volume& pred, const Volume& ref, const Mask& mask, const std::string& method,
                              double scale = 0.0);

/// Two-view method: metrics per upsampled view, then averaged.
MetricsReport evaluate_method(const std::pair<Volume, Volume>& views, const Volume& ref, const Mask& mask,
                              const std::string& method, double scale = 0.0);

/// Cubic-spline baseline on both views of `pair`, reported as "cubic-spline".
MetricsReport evaluate_cubic_baseline(const LRPair& pair, const Volume& ref, const Mask& mask);

struct TableRow {
  std::string dataset;
  MetricsReport report;
};

/// CSV with columns dataset, method, scale, psnr_mean, psnr_std, ssim_mean,
/// ssim_std; one line per (dataset, method, scale) group, sample std.
std::string metrics_table_csv(const std::vector<TableRow>& rows);

// ---------------------------------------------------------------------------
// Slice export

enum class Plane { Axial, Coronal, Sagittal };
Plane parse_plane(const std::string& name);
const char* plane_name(Plane p);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Slice at `index` of the fixed axis: axial fixes d, coronal fixes w,
/// sagittal fixes h. Intensities are windowed to [0, 1] and mapped to 0..255.
GrayImage extract_slice(const Volume& v, Plane plane, std::size_t index);

/// Binary PGM; `comment` becomes a header comment line.
void write_pgm(const GrayImage& img, const std::filesystem::path& path, std::string_view comment = {});
GrayImage read_pgm(const std::filesystem::path& path);

inline constexpr std::size_t kMontageSeparator = 2;

/// Writes `<dir>/<name>_<plane><index>.pgm` per volume and
/// `<dir>/montage_<plane><index>.pgm` (slices side by side, white separators).
/// Returns the written paths, montage last.
std::vector<std::filesystem::path> export_comparison_slices(const std::vector<std::pair<std::string, Volume>>& volumes,
                                                            Plane plane, std::size_t index,
                                                            const std::filesystem::path& dir,
                                                            std::string_view comment = {});

}  // namespace anisosr
