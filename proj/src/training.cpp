#include "anisosr/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anisosr/nifti_io.hpp"

namespace anisosr {

void TrainConfig::validate() const {
  if (batch_patches == 0 || samples_per_patch == 0 || steps_per_image == 0) {
    throw ValidationError("batch, samples per patch and steps per image must be positive");
  }
  if (!(lr >= 0.0) || !(lr_online.value_or(0.0) >= 0.0)) throw ValidationError("learning rate must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (!(scale_range[0] > 1.0 && scale_range[1] >= scale_range[0])) {
    throw ValidationError("scale range must satisfy 1 < lo <= hi");
  }
}

std::string to_json_line(const LossReport& r) {
  nlohmann::json j{{"epoch", r.epoch},     {"step", r.step},         {"loss_ax", r.loss_ax},
                   {"loss_cor", r.loss_cor}, {"loss_total", r.loss_total}, {"samples_used", r.samples_used}};
  return j.dump();
}

namespace {

double mse(std::span<const double> pred, std::span<const double> target) {
  double acc = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const double e = pred[n] - target[n];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

LossReport coordinate_loss(std::span<const double> pred_ax, std::span<const double> targets_ax,
                           std::span<const double> pred_cor, std::span<const double> targets_cor) {
  if (pred_ax.size() != targets_ax.size() || pred_cor.size() != targets_cor.size()) {
    throw ValidationError("prediction and target counts differ");
  }
  if (pred_ax.empty() && pred_cor.empty()) throw ValidationError("both views are empty");
  LossReport r;
  int views = 0;
  if (!pred_ax.empty()) {
    r.loss_ax = mse(pred_ax, targets_ax);
    r.loss_total += r.loss_ax;
    ++views;
  }
  if (!pred_cor.empty()) {
    r.loss_cor = mse(pred_cor, targets_cor);
    r.loss_total += r.loss_cor;
    ++views;
  }
  r.loss_total /= views;
  r.samples_used = pred_ax.size() + pred_cor.size();
  return r;
}

namespace {

std::vector<Vec3> to_hr(const PatchPair& pp, const CoordinateSet& ax, const CoordinateSet& cor) {
  std::vector<Vec3> out;
  out.reserve(ax.size() + cor.size());
  for (const Vec3& c : ax.coords) out.push_back(pp.local_to_hr(c));
  for (const Vec3& c : cor.coords) out.push_back(pp.local_to_hr(c));
  return out;
}

constexpr Eigen::Index kDecoderChunk = 4096;

}  // namespace

template <typename T>
LossReport patch_loss(const SrModel<T>& model, const PatchPair& pp, const CoordinateSet& ax,
                      const CoordinateSet& cor) {
  const FeatureMap<T> fa = model.encoder().forward(pp.axial.data);
  const FeatureMap<T> fc = model.encoder().forward(pp.coronal.data);
  const std::vector<Vec3> hr = to_hr(pp, ax, cor);
  const std::vector<double> y = model.decode(gather_features(fa, pp.axial, fc, pp.coronal, std::span<const Vec3>(hr)));
  const std::span<const double> ys(y);
  return coordinate_loss(ys.first(ax.size()), ax.targets, ys.subspan(ax.size()), cor.targets);
}

template <typename T>
LossReport accumulate_patch_gradients(SrModel<T>& model, const PatchPair& pp, const CoordinateSet& ax,
                                      const CoordinateSet& cor, double weight) {
  if (ax.size() != ax.targets.size() || cor.size() != cor.targets.size()) {
    throw ValidationError("coordinate and target counts differ");
  }
  typename Encoder<T>::Tape tape_ax, tape_cor;
  const FeatureMap<T> fa = model.encoder().forward(pp.axial.data, &tape_ax);
  const FeatureMap<T> fc = model.encoder().forward(pp.coronal.data, &tape_cor);
  const std::vector<Vec3> hr = to_hr(pp, ax, cor);
  const MatrixR<T> x = gather_features(fa, pp.axial, fc, pp.coronal, std::span<const Vec3>(hr));

  const auto n_ax = static_cast<Eigen::Index>(ax.size());
  const auto rows = x.rows();
  const int views = (ax.size() > 0) + (cor.size() > 0);
  if (views == 0) throw ValidationError("both views are empty");
  const double g_ax = n_ax > 0 ? weight * 2.0 / (views * static_cast<double>(n_ax)) : 0.0;
  const double g_cor = cor.size() > 0 ? weight * 2.0 / (views * static_cast<double>(cor.size())) : 0.0;

  std::vector<double> y(static_cast<std::size_t>(rows));
  MatrixR<T> dx(rows, x.cols());
  typename Decoder<T>::Tape dtape;
  for (Eigen::Index r0 = 0; r0 < rows; r0 += kDecoderChunk) {
    const Eigen::Index nr = std::min(kDecoderChunk, rows - r0);
    const MatrixR<T> xc = x.middleRows(r0, nr);
    const VectorX<T> yc = model.decoder().forward(xc, &dtape);
    VectorX<T> dy(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      const Eigen::Index row = r0 + r;
      const double pred = static_cast<double>(yc(r));
      y[static_cast<std::size_t>(row)] = pred;
      const double target =
          row < n_ax ? ax.targets[static_cast<std::size_t>(row)] : cor.targets[static_cast<std::size_t>(row - n_ax)];
      dy(r) = static_cast<T>((row < n_ax ? g_ax : g_cor) * (pred - target));
    }
    dx.middleRows(r0, nr) = model.decoder().backward(dtape, dy);
  }

  FeatureMap<T> dfa(fa.shape, fa.channels);
  FeatureMap<T> dfc(fc.shape, fc.channels);
  scatter_feature_grads(dfa, pp.axial, dfc, pp.coronal, std::span<const Vec3>(hr), dx);
  model.encoder().backward(tape_ax, dfa);
  model.encoder().backward(tape_cor, dfc);

  const std::span<const double> ys(y);
  return coordinate_loss(ys.first(ax.size()), ax.targets, ys.subspan(ax.size()), cor.targets);
}

template LossReport patch_loss(const SrModel<float>&, const PatchPair&, const CoordinateSet&, const CoordinateSet&);
template LossReport patch_loss(const SrModel<double>&, const PatchPair&, const CoordinateSet&, const CoordinateSet&);
template LossReport accumulate_patch_gradients(SrModel<float>&, const PatchPair&, const CoordinateSet&,
                                               const CoordinateSet&, double);
template LossReport accumulate_patch_gradients(SrModel<double>&, const PatchPair&, const CoordinateSet&,
                                               const CoordinateSet&, double);

template <typename T>
void Adam<T>::step(const std::vector<Param<T>*>& params) {
  if (m_.empty()) {
    for (const Param<T>* p : params) {
      m_.push_back(MatrixR<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(MatrixR<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("optimizer parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
  const T step = static_cast<T>(lr_ / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(eps_);
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto& g = params[n]->grad;
    m_[n] = b1 * m_[n] + (T(1) - b1) * g;
    v_[n] = b2 * v_[n] + (T(1) - b2) * g.cwiseProduct(g);
    params[n]->value.array() -= step * m_[n].array() / ((v_[n].array() * inv_c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

namespace {

bool fits_patch_geometry(const LRPair& pair) {
  try {
    Rng probe(0);
    sample_patch_pair(pair, probe);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

struct Loop {
  ModelParams& model;
  Adam<float>& adam;
  const TrainConfig& cfg;
  const TrainHooks& hooks;
  Rng& rng;
  std::vector<LossReport>& log;

  void step(const LRPair& pair, std::size_t epoch) {
    model.zero_grad();
    const double w = 1.0 / static_cast<double>(cfg.batch_patches);
    LossReport sum;
    for (std::size_t b = 0; b < cfg.batch_patches; ++b) {
      const PatchPair pp = sample_patch_pair(pair, rng);
      const auto [ax, cor] = sample_patch_coordinates(pp, cfg.samples_per_patch, rng);
      const LossReport r = accumulate_patch_gradients(model, pp, ax, cor, w);
      sum.loss_ax += r.loss_ax * w;
      sum.loss_cor += r.loss_cor * w;
      sum.loss_total += r.loss_total * w;
      sum.samples_used += r.samples_used;
    }
    adam.step(model.parameters());
    sum.epoch = epoch;
    sum.step = log.size() + 1;
    log.push_back(sum);
    if (hooks.on_step) hooks.on_step(sum, model);
  }
};

}  // namespace

TrainResult train_offline(const ModelParams& init, std::span<const LRPair> pairs, const TrainConfig& cfg,
                          const TrainHooks& hooks) {
  cfg.validate();
  if (pairs.empty()) throw ValidationError("training manifest is empty");
  TrainResult res{init, {}, 0};
  std::vector<std::size_t> usable;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    if (fits_patch_geometry(pairs[n])) {
      usable.push_back(n);
    } else {
      spdlog::warn("skipping image {}: smaller than its patch cube", n);
      ++res.skipped_images;
    }
  }
  if (usable.empty()) throw ValidationError("no training image is large enough for its patch cube");

  Rng rng(cfg.seed);
  Adam<float> adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Loop loop{res.model, adam, cfg, hooks, rng, res.log};
  for (std::size_t epoch = 1; epoch <= cfg.epochs_offline; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t img : order) {
      for (std::size_t s = 0; s < cfg.steps_per_image; ++s) loop.step(pairs[img], epoch);
    }
    spdlog::info("offline epoch {}/{} loss {:.6f}", epoch, cfg.epochs_offline, res.log.back().loss_total);
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(res.model, epoch);
    }
  }
  return res;
}

TrainResult finetune_online(const ModelParams& init, const LRPair& pair, const TrainConfig& cfg,
                            const TrainHooks& hooks) {
  cfg.validate();
  TrainResult res{init, {}, 0};
  if (cfg.epochs_online == 0) return res;
  if (!fits_patch_geometry(pair)) throw ValidationError("pair is smaller than one patch cube");
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam<float> adam(cfg.lr_online.value_or(cfg.lr), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Loop loop{res.model, adam, cfg, hooks, rng, res.log};
  for (std::size_t epoch = 1; epoch <= cfg.epochs_online; ++epoch) {
    for (std::size_t s = 0; s < cfg.steps_per_image; ++s) loop.step(pair, epoch);
    spdlog::info("online epoch {}/{} loss {:.6f}", epoch, cfg.epochs_online, res.log.back().loss_total);
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(res.model, epoch);
    }
  }
  return res;
}

double evaluate_pair_loss(const ModelParams& model, const LRPair& pair, std::size_t patches, std::size_t samples,
                          std::uint64_t seed) {
  if (patches == 0) throw ValidationError("need at least one patch");
  Rng rng(seed);
  double acc = 0.0;
  for (std::size_t b = 0; b < patches; ++b) {
    const PatchPair pp = sample_patch_pair(pair, rng);
    const auto [ax, cor] = sample_patch_coordinates(pp, samples, rng);
    acc += patch_loss(model, pp, ax, cor).loss_total;
  }
  return acc / static_cast<double>(patches);
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ValidationError("manifest must be a JSON list");
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  std::vector<ManifestEntry> out;
  for (const auto& item : j) {
    ManifestEntry e;
    if (item.contains("hr")) e.hr_path = resolve(item.at("hr").get<std::string>());
    if (item.contains("axial")) e.axial_path = resolve(item.at("axial").get<std::string>());
    if (item.contains("coronal")) e.coronal_path = resolve(item.at("coronal").get<std::string>());
    if (item.contains("scale")) e.scale = item.at("scale").get<double>();
    if (item.contains("seed")) e.seed = item.at("seed").get<std::uint64_t>();
    const bool lr = e.axial_path && e.coronal_path;
    if (e.hr_path.has_value() == lr) {
      throw ValidationError("each manifest entry needs either \"hr\" or both \"axial\" and \"coronal\"");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ValidationError("manifest is empty");
  return out;
}

Volume NiftiReader::read(const std::filesystem::path& path) { return load_volume(path); }

std::vector<LRPair> load_training_pairs(std::span<const ManifestEntry> entries, VolumeReader& reader,
                                        const TrainConfig& cfg) {
  cfg.validate();
  std::vector<LRPair> out;
  out.reserve(entries.size());
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const ManifestEntry& e = entries[n];
    if (e.hr_path) {
      double scale = 0.0;
      if (e.scale) {
        scale = *e.scale;
      } else {
        Rng rng(e.seed.value_or(cfg.seed + n));
        scale = sample_training_scale(rng, cfg.scale_range[0], cfg.scale_range[1]);
      }
      out.push_back(simulate_lr_pair(normalize_intensity(reader.read(*e.hr_path)), scale));
    } else {
      out.push_back(make_lr_pair(reader.read(*e.axial_path), reader.read(*e.coronal_path), e.scale.value_or(0.0),
                                 e.scale.value_or(0.0)));
    }
  }
  return out;
}

}  // namespace anisosr
