/**
 * @file training.hpp
 * @brief Sparse coordinate loss, Adam, and the offline / online training loops.
 *
 * Training consumes LRPair data only. HR volumes appear solely in
 * load_training_pairs, where they are degraded and dropped.
 */
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anisosr/network.hpp"

namespace anisosr {

struct TrainConfig {
  std::size_t epochs_offline = 35;
  std::size_t epochs_online = 10;
  std::size_t batch_patches = 10;
  std::size_t samples_per_patch = 8000;
  double lr = 1e-4;
  std::optional<double> lr_online;  // fine-tuning rate; defaults to lr
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::array<double, 2> scale_range{2.0, 4.0};
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::size_t steps_per_image = 1;

  void validate() const;
};

struct LossReport {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss_ax = 0.0;
  double loss_cor = 0.0;
  double loss_total = 0.0;
  std::size_t samples_used = 0;
};

std::string to_json_line(const LossReport& r);

/// Per-view MSE; total is the mean over nonempty views.
LossReport coordinate_loss(std::span<const double> pred_ax, std::span<const double> targets_ax,
                           std::span<const double> pred_cor, std::span<const double> targets_cor);

/// Loss of one patch pair at the given samples (coordinates in the local cube frame).
template <typename T>
LossReport patch_loss(const SrModel<T>& model, const PatchPair& pp, const CoordinateSet& ax,
                      const CoordinateSet& cor);

/// As patch_loss, and adds weight * d(loss_total)/d(params) to the gradients.
template <typename T>
LossReport accumulate_patch_gradients(SrModel<T>& model, const PatchPair& pp, const CoordinateSet& ax,
                                      const CoordinateSet& cor, double weight);

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<T>*>& params);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<MatrixR<T>> m_;
  std::vector<MatrixR<T>> v_;
};

struct TrainHooks {
  std::function<void(const LossReport&, const ModelParams&)> on_step;
  /// Called after every `checkpoint_every`-th epoch (1-based epoch number).
  std::function<void(const ModelParams&, std::size_t epoch)> on_checkpoint;
};

struct TrainResult {
  ModelParams model;
  std::vector<LossReport> log;
  std::size_t skipped_images = 0;
};

/// Offline phase: each epoch visits the images in shuffled order and takes
/// `steps_per_image` Adam steps per image, each on the mean loss of
/// `batch_patches` random patch pairs of that image. Images too small for
/// their patch cube are skipped with a warning.
TrainResult train_offline(const ModelParams& init, std::span<const LRPair> pairs, const TrainConfig& cfg,
                          const TrainHooks& hooks = {});

/// Online phase: the same step structure for `epochs_online` epochs on one
/// pair. `init` is left untouched.
TrainResult finetune_online(const ModelParams& init, const LRPair& pair, const TrainConfig& cfg,
                            const TrainHooks& hooks = {});

/// Mean coordinate loss over `patches` random patch pairs, without updates.
double evaluate_pair_loss(const ModelParams& model, const LRPair& pair, std::size_t patches, std::size_t samples,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::optional<std::filesystem::path> hr_path;
  std::optional<std::filesystem::path> axial_path;
  std::optional<std::filesystem::path> coronal_path;
  std::optional<double> scale;
  std::optional<std::uint64_t> seed;
};

/// JSON list of {"hr": path} or {"axial": path, "coronal": path}, each with
/// optional "scale" and "seed". Relative paths resolve against the manifest.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Source of volumes for load_training_pairs.
class VolumeReader {
 public:
  virtual ~VolumeReader() = default;
  virtual Volume read(const std::filesystem::path& path) = 0;
};

class NiftiReader : public VolumeReader {
 public:
  Volume read(const std::filesystem::path& path) override;
};

/// HR entries are normalized and degraded once, at a scale drawn from
/// `scale_range` unless the entry fixes it; the HR volume is then released.
/// LR entries are used as given.
std::vector<LRPair> load_training_pairs(std::span<const ManifestEntry> entries, VolumeReader& reader,
                                        const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints

/// Writes `path` (binary named arrays) and `path` + ".toml" (configs and fingerprint).
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
/// Throws FingerprintMismatch if the sidecar configs, the sidecar fingerprint
/// and the binary's fingerprint disagree; IoError on corrupt files.
ModelParams load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace anisosr
