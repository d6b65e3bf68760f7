#include "anisosr/inference.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

namespace anisosr {

void InferenceConfig::validate() const {
  if (chunk_size == 0) throw ValidationError("chunk_size must be at least 1");
  if (target_shape && target_shape->voxels() == 0) throw ValidationError("target shape must be non-empty");
}

std::string InferenceTiming::to_json() const {
  return nlohmann::json{{"encode_s", encode_s}, {"decode_s", decode_s}, {"total_s", total_s}}.dump();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

FeatureMap<float> encode_volume(const Encoder<float>& encoder, const Volume& v, std::size_t voxel_budget) {
  const Shape3 s = v.shape();
  if (voxel_budget == 0 || s.voxels() <= voxel_budget) return encoder.forward(v);

  const std::size_t r = encoder.receptive_radius();
  std::array<std::size_t, 3> core{s.h, s.w, s.d};
  const auto padded = [&](int a) { return std::min(core[a] + 2 * r, s[a]); };
  while (padded(0) * padded(1) * padded(2) > voxel_budget) {
    int widest = 0;
    for (int a = 1; a < 3; ++a) {
      if (core[a] > core[widest]) widest = a;
    }
    if (core[widest] == 1) throw ValidationError("voxel budget too small for one encoder tile");
    core[widest] = (core[widest] + 1) / 2;
  }

  FeatureMap<float> out(s, encoder.config().feature_channels);
  const std::size_t c = out.channels;
  for (std::size_t i0 = 0; i0 < s.h; i0 += core[0]) {
    for (std::size_t j0 = 0; j0 < s.w; j0 += core[1]) {
      for (std::size_t k0 = 0; k0 < s.d; k0 += core[2]) {
        const Offset3 lo{i0 > r ? i0 - r : 0, j0 > r ? j0 - r : 0, k0 > r ? k0 - r : 0};
        const Offset3 core_end{std::min(i0 + core[0], s.h), std::min(j0 + core[1], s.w), std::min(k0 + core[2], s.d)};
        const Shape3 tile{std::min(core_end[0] + r, s.h) - lo[0], std::min(core_end[1] + r, s.w) - lo[1],
                          std::min(core_end[2] + r, s.d) - lo[2]};
        const FeatureMap<float> f = encoder.forward(extract_region(v, lo, tile));
        for (std::size_t i = i0; i < core_end[0]; ++i) {
          for (std::size_t j = j0; j < core_end[1]; ++j) {
            for (std::size_t k = k0; k < core_end[2]; ++k) {
              const float* src = f.voxel(i - lo[0], j - lo[1], k - lo[2]);
              std::copy(src, src + c, out.voxel(i, j, k));
            }
          }
        }
      }
    }
  }
  return out;
}

Volume super_resolve(const ModelParams& model, const LRPair& pair, const InferenceConfig& cfg, InferenceTiming* timing) {
  cfg.validate();
  const auto t0 = Clock::now();
  const PatchPair whole = whole_volume_patch(pair);
  const FeatureMap<float> fa = encode_volume(model.encoder(), pair.axial, cfg.encode_voxel_budget);
  const FeatureMap<float> fc = encode_volume(model.encoder(), pair.coronal, cfg.encode_voxel_budget);
  const double encode_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const Shape3 hr = pair.hr_shape;
  const Shape3 target = cfg.target_shape.value_or(hr);
  const Spacing3 base = pair.base_spacing();
  Spacing3 spacing{};
  for (int a = 0; a < 3; ++a) {
    spacing[a] = base[a] * static_cast<double>(hr[a]) / static_cast<double>(target[a]);
  }
  Volume out(target, spacing);
  auto data = out.data();

  // Target node -> shared normalized coordinate -> HR units.
  const auto to_hr = [&](std::size_t idx, int a) {
    return ReferenceFrame::coord_to_index(ReferenceFrame::index_to_coord(static_cast<double>(idx), target[a]), hr[a]);
  };
  const std::size_t total = target.voxels();
  std::vector<Vec3> pos;
  for (std::size_t begin = 0; begin < total; begin += cfg.chunk_size) {
    const std::size_t end = std::min(total, begin + cfg.chunk_size);
    pos.clear();
    for (std::size_t lin = begin; lin < end; ++lin) {
      const std::size_t k = lin % target.d;
      const std::size_t j = (lin / target.d) % target.w;
      const std::size_t i = lin / (target.d * target.w);
      pos.push_back({to_hr(i, 0), to_hr(j, 1), to_hr(k, 2)});
    }
    const std::vector<double> y =
        model.decode(gather_features(fa, whole.axial, fc, whole.coronal, std::span<const Vec3>(pos)));
    for (std::size_t n = 0; n < y.size(); ++n) data[begin + n] = cfg.clamp ? std::clamp(y[n], 0.0, 1.0) : y[n];
  }
  if (timing != nullptr) {
    timing->encode_s = encode_s;
    timing->decode_s = seconds_since(t1);
    timing->total_s = seconds_since(t0);
  }
  return out;
}

std::pair<double, double> pair_consistency_views(const Volume& sr, const LRPair& pair) {
  if (!(sr.shape() == pair.hr_shape)) throw ValidationError("SR volume does not match the pair's HR frame");
  FeatureMap<double> map(sr.shape(), 1);
  std::copy(sr.data().begin(), sr.data().end(), map.data.begin());
  const ReferenceFrame frame(pair.hr_shape);
  const auto [m_ax, m_cor] = matching_sets(pair, frame);
  const auto view_mse = [&](const CoordinateSet& set) {
    double acc = 0.0;
    for (std::size_t n = 0; n < set.size(); ++n) {
      double v = 0.0;
      trilinear_at_index(map, frame.to_index(set.coords[n]), &v);
      acc += (v - set.targets[n]) * (v - set.targets[n]);
    }
    return acc / static_cast<double>(set.size());
  };
  return {view_mse(m_ax), view_mse(m_cor)};
}

double reconstruct_pair_consistency(const Volume& sr, const LRPair& pair) {
  const auto [ax, cor] = pair_consistency_views(sr, pair);
  return 0.5 * (ax + cor);
}

}  // namespace anisosr
