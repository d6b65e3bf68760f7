/**
 * @file network.hpp
 * @brief 3-D residual dense encoder (no upsampling) and the coordinate MLP
 *        decoder, with hand-written backward passes.
 *
 * Everything is templated on the scalar type: training runs in float,
 * gradient checks in double.
 */
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anisosr/coordinates.hpp"
#include "anisosr/feature_map.hpp"

namespace anisosr {

template <typename T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::size_t feature_channels = 128;
  std::size_t base_channels = 64;
  std::size_t num_blocks = 4;
  std::size_t layers_per_block = 4;
  std::size_t growth = 16;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct DecoderConfig {
  std::size_t in_features = 256;
  std::size_t layers = 8;
  std::size_t hidden = 512;
  /// Add the first layer's activation to the fourth layer's pre-activation.
  bool residual = true;
  std::size_t out_features = 1;

  void validate() const;
  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// Canonical text of both configs; the fingerprint hashes exactly this.
std::string canonical_config_text(const EncoderConfig& enc, const DecoderConfig& dec);
std::uint64_t config_fingerprint(const EncoderConfig& enc, const DecoderConfig& dec);

/// A named learnable array with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  MatrixR<T> value;
  MatrixR<T> grad;

  void zero_grad() { grad.setZero(); }
};

/// 3x3x3 (zero padding 1, stride 1) or 1x1x1 convolution on channels-last
/// (voxels x channels) matrices.
template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(std::string name, std::size_t in_ch, std::size_t out_ch, int kernel);

  using ConstRef = Eigen::Ref<const MatrixR<T>, 0, Eigen::OuterStride<>>;
  using Ref = Eigen::Ref<MatrixR<T>, 0, Eigen::OuterStride<>>;

  void forward(const Shape3& shape, const ConstRef& in, Ref out) const;
  /// Accumulates weight/bias gradients; adds the input gradient into `din` when non-null.
  void backward(const Shape3& shape, const ConstRef& in, const ConstRef& dout, Ref* din);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  int kernel() const { return kernel_; }

  Param<T> weight;  // (kernel^3 * in) x out, tap-major
  Param<T> bias;    // 1 x out

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  int kernel_ = 3;
};

/// Residual dense network without the upsampling tail, plus a 1x1 projection
/// to `feature_channels`. Spatial shape is preserved.
template <typename T>
class Encoder {
 public:
  struct Tape {
    Shape3 shape{};
    MatrixR<T> input;
    MatrixR<T> sfe1;
    std::vector<MatrixR<T>> blocks;  // [block input | dense layer outputs]
    MatrixR<T> block_outputs;        // concatenated block outputs
    MatrixR<T> gff1;
    MatrixR<T> fused;  // gff2 + sfe1
  };

  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);

  FeatureMap<T> forward(const Volume& lr, Tape* tape = nullptr) const;
  void backward(const Tape& tape, const FeatureMap<T>& dout);

  /// Number of 3x3x3 convolutions on any input-to-output path.
  std::size_t receptive_radius() const;

  const EncoderConfig& config() const { return cfg_; }
  void collect(std::vector<Param<T>*>& out);

 private:
  struct Block {
    std::vector<Conv3d<T>> dense;
    Conv3d<T> fusion;
  };

  EncoderConfig cfg_;
  Conv3d<T> sfe1_;
  Conv3d<T> sfe2_;
  std::vector<Block> blocks_;
  Conv3d<T> gff1_;
  Conv3d<T> gff2_;
  Conv3d<T> project_;
};

/// Fully connected coordinate decoder: in -> hidden (x layers-1) -> out.
template <typename T>
class Decoder {
 public:
  struct Tape {
    MatrixR<T> input;
    std::vector<MatrixR<T>> hidden;  // post-activation outputs of layers 1..layers-1
  };

  Decoder() = default;
  explicit Decoder(const DecoderConfig& cfg);

  /// One scalar per input row.
  VectorX<T> forward(const MatrixR<T>& features, Tape* tape = nullptr) const;
  /// Accumulates gradients and returns d(loss)/d(features).
  MatrixR<T> backward(const Tape& tape, const VectorX<T>& dout);

  const DecoderConfig& config() const { return cfg_; }
  void collect(std::vector<Param<T>*>& out);

 private:
  struct Dense {
    Param<T> weight;  // in x out
    Param<T> bias;    // 1 x out
  };
  DecoderConfig cfg_;
  std::vector<Dense> layers_;
};

/// Negative-slope parameter of the default weight init; bound = 1 / sqrt(fan_in).
inline const double kDefaultKaimingA = std::sqrt(5.0);

/// Encoder + decoder with Kaiming-uniform (fan-in) weights, bound
/// sqrt(6 / ((1 + a^2) fan_in)), and zero biases.
template <typename T>
class SrModel {
 public:
  SrModel() = default;
  SrModel(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t init_seed = 0,
          double kaiming_a = kDefaultKaimingA);

  /// Copy with a different scalar type.
  template <typename U>
  SrModel<U> cast() const;

  const EncoderConfig& encoder_config() const { return encoder_.config(); }
  const DecoderConfig& decoder_config() const { return decoder_.config(); }
  std::uint64_t fingerprint() const { return config_fingerprint(encoder_config(), decoder_config()); }

  Encoder<T>& encoder() { return encoder_; }
  const Encoder<T>& encoder() const { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }
  const Decoder<T>& decoder() const { return decoder_; }

  FeatureMap<T> encode(const Volume& lr) const { return encoder_.forward(lr); }
  std::vector<double> decode(const MatrixR<T>& features) const;

  /// decode([axial features | coronal features]) at local cube coordinates.
  std::vector<double> forward(const PatchPair& pp, std::span<const Vec3> local_coords) const;

  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

using ModelParams = SrModel<float>;

/// Per-view feature rows for HR-unit positions: [axial | coronal].
template <typename T>
MatrixR<T> gather_features(const FeatureMap<T>& fa, const ViewPatch& ax, const FeatureMap<T>& fc,
                           const ViewPatch& cor, std::span<const Vec3> hr_positions);

/// Adjoint of gather_features.
template <typename T>
void scatter_feature_grads(FeatureMap<T>& dfa, const ViewPatch& ax, FeatureMap<T>& dfc, const ViewPatch& cor,
                           std::span<const Vec3> hr_positions, const MatrixR<T>& dfeatures);

}  // namespace anisosr
