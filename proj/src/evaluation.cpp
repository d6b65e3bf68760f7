#include "anisosr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anisosr/coordinates.hpp"

namespace anisosr {

namespace {

void check_metric_inputs(const Volume& pred, const Volume& ref, const Mask& mask) {
  if (!(pred.shape() == ref.shape()) || !(mask.shape() == ref.shape())) {
    throw ValidationError("prediction, reference and mask shapes differ");
  }
  if (mask.count() == 0) throw ValidationError("mask is empty");
}

}  // namespace

double psnr(const Volume& pred, const Volume& ref, const Mask& mask) {
  check_metric_inputs(pred, ref, mask);
  const auto p = pred.data();
  const auto r = ref.data();
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (!mask.at(v)) continue;
    const double e = p[v] - r[v];
    acc += e * e;
    ++n;
  }
  if (acc == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (acc / static_cast<double>(n)));
}

namespace {

// Normalized Gaussian filter along one axis, window truncated at the borders.
std::vector<double> filter_axis(const std::vector<double>& in, const Shape3& s, int axis,
                                const std::vector<double>& kernel) {
  const long half = static_cast<long>(kernel.size() / 2);
  const long n = static_cast<long>(s[axis]);
  const std::size_t stride = axis == 0 ? s.w * s.d : (axis == 1 ? s.d : 1);
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t k = 0; k < s.d; ++k) {
        const std::size_t lin = s.linear(i, j, k);
        const long pos = static_cast<long>(axis == 0 ? i : (axis == 1 ? j : k));
        double acc = 0.0, wsum = 0.0;
        for (long q = -half; q <= half; ++q) {
          const long t = pos + q;
          if (t < 0 || t >= n) continue;
          const double w = kernel[static_cast<std::size_t>(q + half)];
          acc += w * in[static_cast<std::size_t>(static_cast<long>(lin) + q * static_cast<long>(stride))];
          wsum += w;
        }
        out[lin] = acc / wsum;
      }
    }
  }
  return out;
}

std::vector<double> gaussian_filter(std::vector<double> v, const Shape3& s, const std::vector<double>& kernel) {
  for (int a = 0; a < 3; ++a) v = filter_axis(v, s, a, kernel);
  return v;
}

}  // namespace

double ssim(const Volume& pred, const Volume& ref, const Mask& mask, const SsimParams& p) {
  check_metric_inputs(pred, ref, mask);
  if (p.window % 2 == 0) throw ValidationError("SSIM window must be odd");
  const Shape3& s = ref.shape();
  std::vector<double> kernel(p.window);
  const long half = static_cast<long>(p.window / 2);
  for (long q = -half; q <= half; ++q) {
    kernel[static_cast<std::size_t>(q + half)] = std::exp(-static_cast<double>(q * q) / (2.0 * p.sigma * p.sigma));
  }

  const auto x = pred.data();
  const auto y = ref.data();
  std::vector<double> xv(x.begin(), x.end()), yv(y.begin(), y.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t v = 0; v < x.size(); ++v) {
    xx[v] = x[v] * x[v];
    yy[v] = y[v] * y[v];
    xy[v] = x[v] * y[v];
  }
  const auto mx = gaussian_filter(std::move(xv), s, kernel);
  const auto my = gaussian_filter(std::move(yv), s, kernel);
  const auto exx = gaussian_filter(std::move(xx), s, kernel);
  const auto eyy = gaussian_filter(std::move(yy), s, kernel);
  const auto exy = gaussian_filter(std::move(xy), s, kernel);

  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < x.size(); ++v) {
    if (!mask.at(v)) continue;
    const double vx = exx[v] - mx[v] * mx[v];
    const double vy = eyy[v] - my[v] * my[v];
    const double cov = exy[v] - mx[v] * my[v];
    acc += ((2.0 * mx[v] * my[v] + c1) * (2.0 * cov + c2)) /
           ((mx[v] * mx[v] + my[v] * my[v] + c1) * (vx + vy + c2));
    ++n;
  }
  return acc / static_cast<double>(n);
}

Volume cubic_spline_upsample(const Volume& lr, const ScaleSpec& scale, std::size_t target_size) {
  const int ax = axis_index(scale.axis);
  const Shape3& ls = lr.shape();
  const std::size_t m = ls[ax];
  if (m != scale.lr_size) throw ValidationError("LR size along the scale axis disagrees with the scale spec");
  if (m < 4) throw ValidationError("cubic spline needs at least 4 samples along the axis");
  if (target_size < 2) throw ValidationError("target size must be at least 2");
  const std::size_t n_hr = scale.hr_size;

  std::vector<double> knot(m), h(m - 1);
  for (std::size_t k = 0; k < m; ++k) {
    knot[k] = static_cast<double>(k) * static_cast<double>(n_hr) / static_cast<double>(m);
  }
  for (std::size_t k = 0; k + 1 < m; ++k) h[k] = knot[k + 1] - knot[k];

  // Thomas factorization of the natural-spline system for interior second derivatives.
  const std::size_t ni = m - 2;
  std::vector<double> diag(ni), upper(ni), lower(ni);
  for (std::size_t r = 0; r < ni; ++r) {
    lower[r] = h[r];
    diag[r] = 2.0 * (h[r] + h[r + 1]);
    upper[r] = h[r + 1];
  }
  std::vector<double> cprime(ni), denom(ni);
  for (std::size_t r = 0; r < ni; ++r) {
    denom[r] = diag[r] - (r > 0 ? lower[r] * cprime[r - 1] : 0.0);
    cprime[r] = upper[r] / denom[r];
  }

  std::vector<double> pos(target_size);
  for (std::size_t t = 0; t < target_size; ++t) {
    pos[t] = target_size == n_hr ? static_cast<double>(t)
                                 : ReferenceFrame::coord_to_index(
                                       ReferenceFrame::index_to_coord(static_cast<double>(t), target_size), n_hr);
  }
  std::vector<std::size_t> seg(target_size);
  for (std::size_t t = 0; t < target_size; ++t) {
    std::size_t k = 0;
    while (k + 2 < m && pos[t] >= knot[k + 1]) ++k;
    seg[t] = k;
  }

  Shape3 os = ls;
  os[ax] = target_size;
  Spacing3 sp = lr.spacing();
  sp[ax] = sp[ax] * static_cast<double>(m) / static_cast<double>(target_size);
  Volume out(os, sp);
  if (lr.normalization()) out.set_normalization(lr.normalization());

  std::vector<double> yv(m), mm(m), rhs(ni);
  const std::size_t lr_stride = ax == 0 ? ls.w * ls.d : (ax == 1 ? ls.d : 1);
  const std::size_t out_stride = ax == 0 ? os.w * os.d : (ax == 1 ? os.d : 1);
  const auto src = lr.data();
  auto dst = out.data();
  Shape3 lines = ls;
  lines[ax] = 1;
  for (std::size_t i = 0; i < lines.h; ++i) {
    for (std::size_t j = 0; j < lines.w; ++j) {
      for (std::size_t k = 0; k < lines.d; ++k) {
        const std::size_t lr0 = ls.linear(i, j, k);
        const std::size_t out0 = os.linear(i, j, k);
        for (std::size_t q = 0; q < m; ++q) yv[q] = src[lr0 + q * lr_stride];
        for (std::size_t r = 0; r < ni; ++r) {
          const double slope_hi = (yv[r + 2] - yv[r + 1]) / h[r + 1];
          const double slope_lo = (yv[r + 1] - yv[r]) / h[r];
          rhs[r] = 6.0 * (slope_hi - slope_lo);
        }
        for (std::size_t r = 0; r < ni; ++r) rhs[r] = (rhs[r] - (r > 0 ? lower[r] * rhs[r - 1] : 0.0)) / denom[r];
        mm[0] = mm[m - 1] = 0.0;
        for (std::size_t r = ni; r-- > 0;) {
          mm[r + 1] = rhs[r] - (r + 1 < ni ? cprime[r] * mm[r + 2] : 0.0);
        }
        for (std::size_t t = 0; t < target_size; ++t) {
          const std::size_t s = seg[t];
          const double hs = h[s];
          const double a = knot[s + 1] - pos[t];
          const double b = pos[t] - knot[s];
          dst[out0 + t * out_stride] = mm[s] * a * a * a / (6.0 * hs) + mm[s + 1] * b * b * b / (6.0 * hs) +
                                       (yv[s] / hs - mm[s] * hs / 6.0) * a + (yv[s + 1] / hs - mm[s + 1] * hs / 6.0) * b;
        }
      }
    }
  }
  return out;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  if (std::isinf(psnr_db)) {
    j["psnr_db"] = "inf";
  } else {
    j["psnr_db"] = psnr_db;
  }
  j["ssim"] = ssim;
  j["mask_voxels"] = mask_voxels;
  j["method"] = method;
  j["scale"] = scale;
  if (timing) j["timing"] = {{"offline_s", timing->offline_s}, {"online_s", timing->online_s}};
  return j.dump(2);
}

MetricsReport evaluate_method(const Volume& pred, const Volume& ref, const Mask& mask, const std::string& method,
                              double scale) {
  MetricsReport r;
  r.psnr_db = psnr(pred, ref, mask);
  r.ssim = ssim(pred, ref, mask);
  r.mask_voxels = mask.count();
  r.method = method;
  r.scale = scale;
  return r;
}

MetricsReport evaluate_method(const std::pair<Volume, Volume>& views, const Volume& ref, const Mask& mask,
                              const std::string& method, double scale) {
  const MetricsReport a = evaluate_method(views.first, ref, mask, method, scale);
  const MetricsReport c = evaluate_method(views.second, ref, mask, method, scale);
  MetricsReport r = a;
  r.psnr_db = (a.psnr_db + c.psnr_db) / 2.0;
  r.ssim = (a.ssim + c.ssim) / 2.0;
  return r;
}

MetricsReport evaluate_cubic_baseline(const LRPair& pair, const Volume& ref, const Mask& mask) {
  if (!(ref.shape() == pair.hr_shape)) throw ValidationError("reference does not match the pair's HR frame");
  std::pair<Volume, Volume> views{cubic_spline_upsample(pair.axial, pair.scale_ax, pair.hr_shape.d),
                                  cubic_spline_upsample(pair.coronal, pair.scale_cor, pair.hr_shape.w)};
  return evaluate_method(views, ref, mask, "cubic-spline", pair.scale_ax.effective());
}

std::string metrics_table_csv(const std::vector<TableRow>& rows) {
  struct Acc {
    std::vector<double> psnr, ssim;
  };
  std::map<std::tuple<std::string, std::string, double>, Acc> groups;
  for (const TableRow& r : rows) {
    Acc& a = groups[{r.dataset, r.report.method, r.report.scale}];
    a.psnr.push_back(r.report.psnr_db);
    a.ssim.push_back(r.report.ssim);
  }
  const auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{m, s};
  };
  std::ostringstream os;
  os << "dataset,method,scale,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  for (const auto& [key, acc] : groups) {
    const auto [pm, ps] = mean_std(acc.psnr);
    const auto [sm, ss] = mean_std(acc.ssim);
    os << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << "," << pm << "," << ps << ","
       << sm << "," << ss << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Slice export

Plane parse_plane(const std::string& name) {
  if (name == "axial") return Plane::Axial;
  if (name == "coronal") return Plane::Coronal;
  if (name == "sagittal") return Plane::Sagittal;
  throw ValidationError("unknown plane '" + name + "'");
}

const char* plane_name(Plane p) {
  switch (p) {
    case Plane::Axial:
      return "axial";
    case Plane::Coronal:
      return "coronal";
    default:
      return "sagittal";
  }
}

GrayImage extract_slice(const Volume& v, Plane plane, std::size_t index) {
  const Shape3& s = v.shape();
  const int fixed = plane == Plane::Sagittal ? 0 : (plane == Plane::Coronal ? 1 : 2);
  if (index >= s[fixed]) {
    throw ValidationError(std::string(plane_name(plane)) + " slice index " + std::to_string(index) +
                          " out of range [0, " + std::to_string(s[fixed]) + ")");
  }
  const int ra = fixed == 0 ? 1 : 0;
  const int ca = fixed == 2 ? 1 : 2;
  GrayImage img;
  img.height = s[ra];
  img.width = s[ca];
  img.pixels.resize(img.width * img.height);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      std::array<std::size_t, 3> idx{};
      idx[static_cast<std::size_t>(fixed)] = index;
      idx[static_cast<std::size_t>(ra)] = r;
      idx[static_cast<std::size_t>(ca)] = c;
      const double x = std::clamp(v(idx[0], idx[1], idx[2]), 0.0, 1.0);
      img.pixels[r * img.width + c] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
  }
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path, std::string_view comment) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n";
  if (!comment.empty()) {
    std::string line(comment);
    std::replace(line.begin(), line.end(), '\n', ' ');
    os << "# " << line << "\n";
  }
  os << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  GrayImage img;
  is >> magic;
  const auto skip_comments = [&] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
  };
  skip_comments();
  is >> img.width;
  skip_comments();
  is >> img.height;
  skip_comments();
  is >> maxval;
  if (magic != "P5" || maxval != 255 || !is) throw IoError("unsupported PGM " + path.string());
  is.get();
  img.pixels.resize(img.width * img.height);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw IoError("truncated PGM " + path.string());
  }
  return img;
}

std::vector<std::filesystem::path> export_comparison_slices(const std::vector<std::pair<std::string, Volume>>& volumes,
                                                            Plane plane, std::size_t index,
                                                            const std::filesystem::path& dir,
                                                            std::string_view comment) {
  if (volumes.empty()) throw ValidationError("no volumes to export");
  for (const auto& [name, v] : volumes) {
    if (!(v.shape() == volumes.front().second.shape())) throw ValidationError("volume '" + name + "' has a different shape");
  }
  if (!std::filesystem::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
  const std::string tag = std::string(plane_name(plane)) + std::to_string(index);
  std::vector<GrayImage> slices;
  std::vector<std::filesystem::path> written;
  for (const auto& [name, v] : volumes) {
    slices.push_back(extract_slice(v, plane, index));
    written.push_back(dir / (name + "_" + tag + ".pgm"));
    write_pgm(slices.back(), written.back(), comment);
  }
  GrayImage montage;
  montage.height = slices.front().height;
  montage.width = slices.size() * slices.front().width + (slices.size() - 1) * kMontageSeparator;
  montage.pixels.assign(montage.width * montage.height, 255);
  for (std::size_t n = 0; n < slices.size(); ++n) {
    const std::size_t x0 = n * (slices[n].width + kMontageSeparator);
    for (std::size_t r = 0; r < montage.height; ++r) {
      std::copy_n(slices[n].pixels.begin() + static_cast<long>(r * slices[n].width), slices[n].width,
                  montage.pixels.begin() + static_cast<long>(r * montage.width + x0));
    }
  }
  written.push_back(dir / ("montage_" + tag + ".pgm"));
  write_pgm(montage, written.back(), comment);
  return written;
}

}  // namespace anisosr
