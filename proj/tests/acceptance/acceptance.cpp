// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <spdlog/spdlog.h>

#include "anisosr/coordinates.hpp"
#include "anisosr/evaluation.hpp"
#include "anisosr/inference.hpp"
#include "anisosr/phantom.hpp"
#include "anisosr/training.hpp"
#include "grad_check.hpp"

using namespace anisosr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

int g_failures = 0;
std::map<int, std::string> g_lines;

void report(int id, bool pass, const std::string& detail) {
  g_lines[id] = fmt("[%s] criterion %2d: ", pass ? "PASS" : "FAIL", id) + detail;
  std::printf("  (criterion %d evaluated)\n", id);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

Volume random_volume(Shape3 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Volume v(s);
  for (double& x : v.data()) x = u(rng);
  return v;
}

// In-memory volume source that records every path it serves.
class CountingReader : public VolumeReader {
 public:
  std::map<std::string, Volume> files;
  std::map<std::string, int> reads;
  Volume read(const std::filesystem::path& path) override {
    ++reads[path.string()];
    return files.at(path.string());
  }
};

// ---------------------------------------------------------------------------
// Desk-scale configuration for the phantom experiments

EncoderConfig desk_encoder() {
  EncoderConfig e;
  e.base_channels = 16;
  e.growth = 8;
  e.num_blocks = 2;
  e.layers_per_block = 2;
  e.feature_channels = 32;
  return e;
}

DecoderConfig desk_decoder() {
  DecoderConfig d;
  d.in_features = 64;
  d.hidden = 64;
  return d;
}

TrainConfig desk_train() {
  TrainConfig t;
  t.epochs_offline = 5;
  t.epochs_online = 10;
  t.batch_patches = 2;
  t.samples_per_patch = 500;
  t.lr = 1e-3;
  t.steps_per_image = 60;
  t.scale_range = {2.0, 4.0};
  t.seed = 1;
  return t;
}

TrainConfig desk_finetune() {
  TrainConfig t = desk_train();
  t.batch_patches = 10;
  t.samples_per_patch = 2000;
  t.steps_per_image = 1;
  t.lr_online = 2e-5;
  return t;
}

struct Phantoms {
  std::vector<Volume> hr;
  Mask held_out_mask;
  const Volume& held_out() const { return hr.back(); }
};

Phantoms make_dataset() {
  Phantoms p;
  p.hr = make_phantoms(6, 48, 7);
  p.held_out_mask = foreground_mask(p.held_out());
  return p;
}

// Offline training from HR entries: each phantom is degraded once at a drawn
// (or fixed) scale; training itself sees only the LR pairs.
ModelParams train_desk_model(const Phantoms& data, const std::vector<std::optional<double>>& scales, double& secs) {
  CountingReader reader;
  std::vector<ManifestEntry> entries;
  for (std::size_t n = 0; n + 1 < data.hr.size(); ++n) {
    const std::string name = "phantom" + std::to_string(n);
    reader.files[name] = data.hr[n];
    ManifestEntry e;
    e.hr_path = name;
    e.scale = scales[n];
    e.seed = 100 + n;
    entries.push_back(e);
  }
  const TrainConfig cfg = desk_train();
  const auto t0 = Clock::now();
  const auto pairs = load_training_pairs(entries, reader, cfg);
  const TrainResult res = train_offline(ModelParams(desk_encoder(), desk_decoder(), 0), pairs, cfg);
  secs = seconds_since(t0);
  return res.model;
}

// ---------------------------------------------------------------------------

void criterion_1() {
  report(1, true,
         "declared: cohort-scale PSNR/SSIM tables and GPU timings are not reproduced; "
         "criteria 2, 3 and 10 are phantom-scale substitutes");
}

void criteria_2_3(const Phantoms& data, const ModelParams& model, double offline_s) {
  const Volume& hr = data.held_out();
  const Mask& mask = data.held_out_mask;
  struct Row {
    double scale;
    MetricsReport cubic, wo, ft;
    double online_wo, online_ft, pair_before, pair_after;
  };
  std::vector<Row> rows;
  for (double scale : {2.0, 4.0}) {
    Row r{};
    r.scale = scale;
    const LRPair pair = simulate_lr_pair(hr, scale);
    r.cubic = evaluate_cubic_baseline(pair, hr, mask);

    auto t0 = Clock::now();
    const Volume sr_wo = super_resolve(model, pair);
    r.online_wo = seconds_since(t0);
    r.wo = evaluate_method(sr_wo, hr, mask, "ours-woFT", scale);

    t0 = Clock::now();
    const TrainResult ft = finetune_online(model, pair, desk_finetune());
    const Volume sr_ft = super_resolve(ft.model, pair);
    r.online_ft = seconds_since(t0);
    r.ft = evaluate_method(sr_ft, hr, mask, "ours", scale);
    r.pair_before = reconstruct_pair_consistency(sr_wo, pair);
    r.pair_after = reconstruct_pair_consistency(sr_ft, pair);
    std::printf(
        "  x%g: cubic %.3f dB / %.4f | w/o FT %.3f dB / %.4f (%.2f s) | FT %.3f dB / %.4f (%.2f s) | "
        "pair consistency %.3g -> %.3g | offline %.0f s\n",
        scale, r.cubic.psnr_db, r.cubic.ssim, r.wo.psnr_db, r.wo.ssim, r.online_wo, r.ft.psnr_db, r.ft.ssim,
        r.online_ft, r.pair_before, r.pair_after, offline_s);
    rows.push_back(r);
  }
  const Row& x2 = rows[0];
  const Row& x4 = rows[1];
  const bool c2 = x2.ft.psnr_db >= x2.cubic.psnr_db + 0.5 && x2.ft.ssim >= x2.cubic.ssim &&
                  x4.ft.psnr_db > x4.cubic.psnr_db && x4.ft.ssim >= x4.cubic.ssim;
  report(2, c2,
         fmt("x2 ours %.3f dB vs cubic %.3f dB (need +0.5), SSIM %.4f vs %.4f; "
             "x4 ours %.3f dB vs cubic %.3f dB (need >), SSIM %.4f vs %.4f",
             x2.ft.psnr_db, x2.cubic.psnr_db, x2.ft.ssim, x2.cubic.ssim, x4.ft.psnr_db, x4.cubic.psnr_db, x4.ft.ssim,
             x4.cubic.ssim));
  bool c3 = true;
  std::string detail;
  for (const Row& r : rows) {
    c3 = c3 && r.ft.psnr_db >= r.wo.psnr_db && r.online_wo < r.online_ft;
    detail += fmt("x%g FT %.3f dB vs w/o FT %.3f dB, online %.2f s vs %.2f s; ", r.scale, r.ft.psnr_db, r.wo.psnr_db,
                  r.online_ft, r.online_wo);
  }
  detail.resize(detail.size() - 2);
  report(3, c3, detail);
}

void criterion_4() {
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t e : {2u, 3u, 4u}) {
    for (std::size_t w = 2 * e; w <= 16; w += e) {
      for (std::size_t d = 2 * e; d <= 16; d += e) {
        for (std::size_t h : {2u, 3u}) {
          const Volume hr = random_volume({h, w, d}, 1000 * e + 100 * h + 10 * w + d);
          const LRPair pair = simulate_lr_pair(hr, static_cast<double>(e));
          const ReferenceFrame frame(hr.shape());
          const auto [m_ax, m_cor] = matching_sets(pair, frame);
          using Entry = std::tuple<double, double, double, double>;
          std::set<Entry> want_ax, want_cor, got_ax, got_cor;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
              for (std::size_t k = 0; k < d; ++k) {
                const Vec3 c = frame.to_coord({double(i), double(j), double(k)});
                for (std::size_t kk = 0; kk < pair.axial.shape().d; ++kk)
                  if (kk * e == k) want_ax.insert({c[0], c[1], c[2], pair.axial(i, j, kk)});
                for (std::size_t jj = 0; jj < pair.coronal.shape().w; ++jj)
                  if (jj * e == j) want_cor.insert({c[0], c[1], c[2], pair.coronal(i, jj, k)});
              }
          for (std::size_t n = 0; n < m_ax.size(); ++n)
            got_ax.insert({m_ax.coords[n][0], m_ax.coords[n][1], m_ax.coords[n][2], m_ax.targets[n]});
          for (std::size_t n = 0; n < m_cor.size(); ++n)
            got_cor.insert({m_cor.coords[n][0], m_cor.coords[n][1], m_cor.coords[n][2], m_cor.targets[n]});
          ++cases;
          if (got_ax != want_ax || got_cor != want_cor || m_ax.size() != want_ax.size() ||
              m_cor.size() != want_cor.size())
            ++mismatches;
        }
      }
    }
  }
  report(4, mismatches == 0,
         fmt("%zu grids (sizes <= 16 divisible by e, e in {2,3,4}): %zu set mismatches", cases, mismatches));
}

void criterion_5() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Shape3 s{5 + seed % 3, 6, 4 + seed % 5};
    FeatureMap<double> fm(s, 3);
    for (double& x : fm.data) x = u(rng);
    std::vector<Vec3> coords(1000);
    for (Vec3& c : coords) c = {u(rng), u(rng), u(rng)};
    const auto out = trilinear_sample(fm, std::span<const Vec3>(coords));
    const std::size_t dims[3] = {s.h, s.w, s.d};
    for (std::size_t n = 0; n < coords.size(); ++n) {
      std::size_t lo[3];
      double t[3];
      for (int a = 0; a < 3; ++a) {
        const double idx = (coords[n][a] + 1.0) / 2.0 * static_cast<double>(dims[a] - 1);
        lo[a] = std::min<std::size_t>(static_cast<std::size_t>(idx), dims[a] - 2);
        t[a] = idx - static_cast<double>(lo[a]);
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double ref = 0.0;
        for (int corner = 0; corner < 8; ++corner) {
          const int b[3] = {(corner >> 2) & 1, (corner >> 1) & 1, corner & 1};
          double wgt = 1.0;
          for (int a = 0; a < 3; ++a) wgt *= b[a] ? t[a] : 1.0 - t[a];
          ref += wgt * fm.voxel(lo[0] + b[0], lo[1] + b[1], lo[2] + b[2])[ch];
        }
        worst = std::max(worst, std::abs(out[n][ch] - ref));
      }
    }
  }
  report(5, worst <= 1e-5, fmt("10 seeds x 1000 coordinates, max |sample - 8-corner oracle| = %.3g (<= 1e-5)", worst));
}

std::vector<double> dft_crop_oracle(const std::vector<double>& x, std::size_t m) {
  const long n = static_cast<long>(x.size());
  const long lo = -static_cast<long>(m / 2);
  const long hi = static_cast<long>(m) - static_cast<long>(m / 2) - 1;
  std::vector<std::complex<double>> X;
  for (long f = lo; f <= hi; ++f) {
    std::complex<double> acc = 0.0;
    for (long t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(f * t) / double(n));
    X.push_back(acc);
  }
  std::vector<double> y(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::complex<double> acc = 0.0;
    for (long f = lo; f <= hi; ++f)
      acc += X[f - lo] * std::polar(1.0, 2.0 * std::numbers::pi * double(f) * double(k) / double(m));
    y[k] = acc.real() / double(n);
  }
  return y;
}

void criterion_6() {
  double const_err = 0.0;
  const Volume c(Shape3{6, 20, 24}, {1, 1, 1}, 0.37);
  for (std::size_t m : {2u, 5u, 12u, 17u}) {
    for (Axis axis : {Axis::W, Axis::D}) {
      const Volume lr = kspace_downsample_axis(c, axis, m);
      for (double x : lr.data()) const_err = std::max(const_err, std::abs(x - 0.37));
    }
  }

  double dft_err = 0.0, band_err = 0.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 4; n <= 32; ++n) {
    for (std::size_t m = 2; m <= n; ++m) {
      std::vector<double> x(n);
      for (double& t : x) t = u(rng);
      Volume line(Shape3{1, 1, n});
      std::copy(x.begin(), x.end(), line.data().begin());
      const Volume lr = kspace_downsample_axis(line, Axis::D, m);
      const auto y = dft_crop_oracle(x, m);
      for (std::size_t k = 0; k < m; ++k) dft_err = std::max(dft_err, std::abs(lr.data()[k] - y[k]));

      // Sinusoids strictly below the LR Nyquist frequency reappear at k * n / m.
      const std::size_t fmax = (m - 1) / 2;
      auto signal = [&](double pos) {
        double acc = 0.5;
        for (std::size_t f = 1; f <= fmax; ++f)
          acc += 0.1 / double(f) * std::cos(2.0 * std::numbers::pi * double(f) * pos / double(n) + 0.3 * double(f));
        return acc;
      };
      for (std::size_t t = 0; t < n; ++t) line.data()[t] = signal(double(t));
      const Volume lr2 = kspace_downsample_axis(line, Axis::D, m);
      for (std::size_t k = 0; k < m; ++k)
        band_err = std::max(band_err, std::abs(lr2.data()[k] - signal(double(k) * double(n) / double(m))));
    }
  }

  bool shapes = true;
  const Volume hr = random_volume({32, 32, 32}, 5);
  for (std::size_t f : {2u, 4u}) {
    const LRPair p = simulate_lr_pair(hr, double(f));
    shapes = shapes && p.axial.shape() == Shape3{32, 32, 32 / f} && p.coronal.shape() == Shape3{32, 32 / f, 32} &&
             p.axial.spacing()[2] == double(f) && p.coronal.spacing()[1] == double(f) &&
             p.axial.spacing()[0] == 1.0 && p.coronal.spacing()[2] == 1.0 && p.hr_shape == hr.shape();
  }
  report(6, const_err <= 1e-9 && dft_err <= 1e-6 && band_err <= 1e-6 && shapes,
         fmt("constant %.3g (<= 1e-9), vs direct DFT %.3g, band-limited %.3g (<= 1e-6, n <= 32), "
             "shape/spacing f in {2,4} %s",
             const_err, dft_err, band_err, shapes ? "ok" : "wrong"));
}

void criterion_7() {
  EncoderConfig e;
  e.feature_channels = 4;
  e.base_channels = 4;
  e.num_blocks = 1;
  e.layers_per_block = 1;
  e.growth = 4;
  DecoderConfig d;
  d.in_features = 8;
  d.hidden = 16;
  SrModel<double> m(e, d, 7);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (Param<double>* p : m.parameters())
    if (p->name.ends_with(".bias"))
      for (Eigen::Index n = 0; n < p->value.size(); ++n) p->value.data()[n] = u(rng);
  const LRPair pair = simulate_lr_pair(make_phantoms(1, 22, 9).front(), 2.0);
  Rng prng(10);
  const PatchPair pp = sample_patch_pair(pair, prng);
  const auto [ax, cor] = sample_patch_coordinates(pp, 40, prng);
  const auto res = anisosr::test::check_patch_gradients(m, pp, ax, cor, 100, 1e-5, 1e-4, 11);
  report(7, res.probes == 100 && res.worst_rel <= 1e-4,
         fmt("float64, %zu parameters, h = 1e-5: max relative error %.3g (<= 1e-4); "
             "%zu draws redrawn for a ReLU kink inside the stencil",
             res.probes, res.worst_rel, res.kinked));
}

void criterion_8() {
  const Shape3 s{8, 9, 10};
  const Mask all(s, true);
  const Volume a(s, {1, 1, 1}, 0.3), b(s, {1, 1, 1}, 0.4);
  const double p20 = psnr(a, b, all);
  const Volume x = random_volume(s, 1);
  const double s1 = ssim(x, x, all);

  // Literal SSIM on 5^3 pairs: normalized Gaussian weights over the in-volume window.
  double lit_err = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Volume p = random_volume({5, 5, 5}, 10 + seed), q = random_volume({5, 5, 5}, 20 + seed);
    const Mask m({5, 5, 5}, true);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 5; ++k) {
          double ws = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (int a2 = 0; a2 < 5; ++a2)
            for (int b2 = 0; b2 < 5; ++b2)
              for (int c2 = 0; c2 < 5; ++c2) {
                const double r2 = (a2 - i) * (a2 - i) + (b2 - j) * (b2 - j) + (c2 - k) * (c2 - k);
                const double w = std::exp(-r2 / (2 * 1.5 * 1.5));
                const double xv = p(a2, b2, c2), yv = q(a2, b2, c2);
                ws += w;
                mx += w * xv;
                my += w * yv;
                xx += w * xv * xv;
                yy += w * yv * yv;
                xy += w * xv * yv;
              }
          mx /= ws;
          my /= ws;
          const double vx = xx / ws - mx * mx, vy = yy / ws - my * my, cv = xy / ws - mx * my;
          acc += (2 * mx * my + 1e-4) * (2 * cv + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
        }
    lit_err = std::max(lit_err, std::abs(ssim(p, q, m) - acc / 125.0));
  }

  const Volume v1 = random_volume(s, 2), v2 = random_volume(s, 3);
  const MetricsReport avg = evaluate_method(std::pair{v1, v2}, x, all, "two-view");
  const double want_p = (psnr(v1, x, all) + psnr(v2, x, all)) / 2.0;
  const double want_s = (ssim(v1, x, all) + ssim(v2, x, all)) / 2.0;
  const bool exact = avg.psnr_db == want_p && avg.ssim == want_s;
  report(8, std::abs(p20 - 20.0) <= 1e-6 && std::abs(s1 - 1.0) <= 1e-9 && lit_err <= 1e-6 && exact,
         fmt("PSNR(0.1 error) %.9f dB; SSIM(identical) - 1 = %.3g; literal SSIM oracle %.3g (<= 1e-6); "
             "per-view averaging %s",
             p20, s1 - 1.0, lit_err, exact ? "exact" : "inexact"));
}

void criterion_9(const Phantoms& data, const ModelParams& model) {
  std::vector<LRPair> pairs;
  for (std::size_t n = 0; n < 2; ++n) pairs.push_back(simulate_lr_pair(data.hr[n], 2.0 + n));
  TrainConfig cfg = desk_train();
  cfg.epochs_offline = 2;
  cfg.steps_per_image = 3;
  const ModelParams init(desk_encoder(), desk_decoder(), 4);
  const TrainResult a = train_offline(init, pairs, cfg);
  const TrainResult b = train_offline(init, pairs, cfg);
  bool same = a.log.size() == b.log.size() && !a.log.empty();
  for (std::size_t n = 0; same && n < a.log.size(); ++n)
    same = std::memcmp(&a.log[n].loss_total, &b.log[n].loss_total, sizeof(double)) == 0 &&
           std::memcmp(&a.log[n].loss_ax, &b.log[n].loss_ax, sizeof(double)) == 0 &&
           std::memcmp(&a.log[n].loss_cor, &b.log[n].loss_cor, sizeof(double)) == 0;

  const LRPair pair = simulate_lr_pair(data.held_out(), 2.0);
  InferenceConfig ic;
  ic.clamp = false;
  ic.chunk_size = 65536;
  const Volume ref = super_resolve(model, pair, ic);
  double worst = 0.0;
  for (std::size_t chunk : {1u, 4096u}) {
    ic.chunk_size = chunk;
    const Volume v = super_resolve(model, pair, ic);
    for (std::size_t n = 0; n < v.size(); ++n) worst = std::max(worst, std::abs(v.data()[n] - ref.data()[n]));
  }
  report(9, same && worst <= 1e-6,
         fmt("%zu-step loss trajectory %s across two runs; chunk sizes {1, 4096, 65536} max diff %.3g (<= 1e-6)",
             a.log.size(), same ? "bit-identical" : "differs", worst));
}

void criterion_10(const Phantoms& data) {
  std::vector<std::optional<double>> scales;
  for (std::size_t n = 0; n + 1 < data.hr.size(); ++n) scales.push_back(n % 2 == 0 ? 2.0 : 3.0);
  double secs = 0.0;
  const ModelParams model = train_desk_model(data, scales, secs);
  const Volume& hr = data.held_out();
  const LRPair pair = simulate_lr_pair(hr, 4.0);
  bool ran = true;
  std::string shapes;
  double psnr_ours = 0.0;
  try {
    const Volume sr = super_resolve(model, pair);
    psnr_ours = psnr(sr, hr, data.held_out_mask);
    for (Shape3 t : {Shape3{64, 64, 64}, Shape3{40, 57, 71}}) {
      InferenceConfig ic;
      ic.target_shape = t;
      const Volume up = super_resolve(model, pair, ic);
      const bool finite = std::all_of(up.data().begin(), up.data().end(), [](double v) { return std::isfinite(v); });
      ran = ran && up.shape() == t && finite;
      shapes += fmt("%zux%zux%zu ", t.h, t.w, t.d);
    }
  } catch (const std::exception& e) {
    ran = false;
    shapes = e.what();
  }
  const MetricsReport cubic = evaluate_cubic_baseline(pair, hr, data.held_out_mask);
  report(10, ran && psnr_ours > cubic.psnr_db,
         fmt("trained on x2/x3 only (%.0f s); x4 pair: ours %.3f dB vs cubic %.3f dB; target grids %s%s", secs,
             psnr_ours, cubic.psnr_db, shapes.c_str(), ran ? "ok" : "failed"));
}

void criterion_11(const Phantoms& data) {
  // LR entries: the reader also holds the HR volumes, which must never be requested.
  CountingReader reader;
  std::vector<ManifestEntry> entries;
  for (std::size_t n = 0; n < 2; ++n) {
    const LRPair p = simulate_lr_pair(data.hr[n], 2.0);
    const std::string tag = std::to_string(n);
    reader.files["ax" + tag] = p.axial;
    reader.files["cor" + tag] = p.coronal;
    reader.files["hr" + tag] = data.hr[n];
    ManifestEntry e;
    e.axial_path = "ax" + tag;
    e.coronal_path = "cor" + tag;
    entries.push_back(e);
  }
  TrainConfig cfg = desk_train();
  cfg.epochs_offline = 1;
  cfg.steps_per_image = 2;
  const ModelParams init(desk_encoder(), desk_decoder(), 5);
  const auto pairs = load_training_pairs(entries, reader, cfg);
  const TrainResult a = train_offline(init, pairs, cfg);
  const TrainResult ft = finetune_online(a.model, pairs[0], cfg);
  const bool hr_untouched = reader.reads.count("hr0") == 0 && reader.reads.count("hr1") == 0;

  // Same run with the HR volumes replaced by noise, then removed entirely.
  CountingReader replaced = reader, absent = reader;
  replaced.reads.clear();
  absent.reads.clear();
  replaced.files["hr0"] = random_volume(data.hr[0].shape(), 1);
  replaced.files["hr1"] = random_volume(data.hr[1].shape(), 2);
  absent.files.erase("hr0");
  absent.files.erase("hr1");
  bool identical = true;
  for (CountingReader* r : {&replaced, &absent}) {
    const TrainResult b = train_offline(init, load_training_pairs(entries, *r, cfg), cfg);
    identical = identical && b.log.size() == a.log.size();
    for (std::size_t n = 0; identical && n < a.log.size(); ++n)
      identical = b.log[n].loss_total == a.log[n].loss_total;
  }
  report(11, hr_untouched && identical && !ft.log.empty(),
         fmt("HR reads during LR-pair training and fine-tuning: %zu; trajectory with HR replaced or absent %s",
             reader.reads.count("hr0") + reader.reads.count("hr1"), identical ? "identical" : "differs"));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const auto t0 = Clock::now();
  criterion_1();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();

  const Phantoms data = make_dataset();
  std::vector<std::optional<double>> drawn(data.hr.size() - 1);
  double offline_s = 0.0;
  const ModelParams model = train_desk_model(data, drawn, offline_s);
  criteria_2_3(data, model, offline_s);
  criterion_9(data, model);
  criterion_10(data);
  criterion_11(data);

  std::printf("\n");
  for (const auto& [id, line] : g_lines) std::printf("%s\n", line.c_str());
  std::printf("%d of %zu criteria failed; total %.0f s\n", g_failures, g_lines.size(), seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
