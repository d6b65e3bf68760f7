#include "anisosr/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace anisosr {

void EncoderConfig::validate() const {
  if (in_channels != 1) throw ValidationError("encoder expects a single input channel");
  if (feature_channels == 0 || base_channels == 0 || num_blocks == 0 || layers_per_block == 0 || growth == 0) {
    throw ValidationError("encoder widths and depths must be positive");
  }
}

void DecoderConfig::validate() const {
  if (in_features == 0 || hidden == 0 || out_features != 1) {
    throw ValidationError("decoder needs positive widths and a single output");
  }
  if (layers < 2) throw ValidationError("decoder needs at least two layers");
  if (residual && layers < 5) throw ValidationError("decoder residual skip needs at least five layers");
}

std::string canonical_config_text(const EncoderConfig& e, const DecoderConfig& d) {
  std::ostringstream os;
  os << "encoder.in_channels=" << e.in_channels << "\n"
     << "encoder.feature_channels=" << e.feature_channels << "\n"
     << "encoder.base_channels=" << e.base_channels << "\n"
     << "encoder.num_blocks=" << e.num_blocks << "\n"
     << "encoder.layers_per_block=" << e.layers_per_block << "\n"
     << "encoder.growth=" << e.growth << "\n"
     << "encoder.kernel=3\n"
     << "decoder.in_features=" << d.in_features << "\n"
     << "decoder.layers=" << d.layers << "\n"
     << "decoder.hidden=" << d.hidden << "\n"
     << "decoder.residual=" << (d.residual ? "true" : "false") << "\n"
     << "decoder.out_features=" << d.out_features << "\n";
  return os.str();
}

std::uint64_t config_fingerprint(const EncoderConfig& enc, const DecoderConfig& dec) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config_text(enc, dec)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Conv3d

namespace {

constexpr Eigen::Index kConvChunk = 4096;

template <typename T>
void im2col(const Shape3& s, const T* in, Eigen::Index in_stride, std::size_t cin, Eigen::Index r0,
            Eigen::Index rows, MatrixR<T>& col) {
  const auto h = static_cast<long>(s.h), w = static_cast<long>(s.w), d = static_cast<long>(s.d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const long v = static_cast<long>(r0 + r);
    const long k = v % d;
    const long j = (v / d) % w;
    const long i = v / (d * w);
    T* dst = col.row(r).data();
    for (long a = i - 1; a <= i + 1; ++a) {
      for (long b = j - 1; b <= j + 1; ++b) {
        for (long c = k - 1; c <= k + 1; ++c) {
          if (a < 0 || b < 0 || c < 0 || a >= h || b >= w || c >= d) {
            std::fill(dst, dst + cin, T(0));
          } else {
            const T* src = in + ((a * w + b) * d + c) * in_stride;
            std::copy(src, src + cin, dst);
          }
          dst += cin;
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Shape3& s, const MatrixR<T>& dcol, Eigen::Index r0, Eigen::Index rows, std::size_t cin,
                T* din, Eigen::Index din_stride) {
  const auto h = static_cast<long>(s.h), w = static_cast<long>(s.w), d = static_cast<long>(s.d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const long v = static_cast<long>(r0 + r);
    const long k = v % d;
    const long j = (v / d) % w;
    const long i = v / (d * w);
    const T* src = dcol.row(r).data();
    for (long a = i - 1; a <= i + 1; ++a) {
      for (long b = j - 1; b <= j + 1; ++b) {
        for (long c = k - 1; c <= k + 1; ++c) {
          if (!(a < 0 || b < 0 || c < 0 || a >= h || b >= w || c >= d)) {
            T* dst = din + ((a * w + b) * d + c) * din_stride;
            for (std::size_t ch = 0; ch < cin; ++ch) dst[ch] += src[ch];
          }
          src += cin;
        }
      }
    }
  }
}

template <typename T>
void kaiming_uniform(Param<T>& p, std::size_t fan_in, double a, Rng& rng) {
  const double bound = std::sqrt(6.0 / ((1.0 + a * a) * static_cast<double>(fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index n = 0; n < p.value.size(); ++n) p.value.data()[n] = static_cast<T>(dist(rng));
}

template <typename T>
Param<T> make_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Param<T> p;
  p.name = std::move(name);
  p.value = MatrixR<T>::Zero(rows, cols);
  p.grad = MatrixR<T>::Zero(rows, cols);
  return p;
}

template <typename T>
void relu_inplace(Eigen::Ref<MatrixR<T>, 0, Eigen::OuterStride<>> m) {
  m = m.cwiseMax(T(0));
}

}  // namespace

template <typename T>
Conv3d<T>::Conv3d(std::string name, std::size_t in_ch, std::size_t out_ch, int kernel)
    : in_(in_ch), out_(out_ch), kernel_(kernel) {
  if (kernel != 1 && kernel != 3) throw ValidationError("convolution kernel must be 1 or 3");
  const auto taps = static_cast<Eigen::Index>(kernel * kernel * kernel);
  weight = make_param<T>(name + ".weight", taps * static_cast<Eigen::Index>(in_ch), static_cast<Eigen::Index>(out_ch));
  bias = make_param<T>(name + ".bias", 1, static_cast<Eigen::Index>(out_ch));
}

template <typename T>
void Conv3d<T>::forward(const Shape3& s, const ConstRef& in, Ref out) const {
  const auto n = static_cast<Eigen::Index>(s.voxels());
  if (kernel_ == 1) {
    out.noalias() = in * weight.value;
  } else {
    MatrixR<T> col(std::min(kConvChunk, n), weight.value.rows());
    for (Eigen::Index r0 = 0; r0 < n; r0 += kConvChunk) {
      const Eigen::Index rows = std::min(kConvChunk, n - r0);
      im2col(s, in.data(), in.outerStride(), in_, r0, rows, col);
      out.middleRows(r0, rows).noalias() = col.topRows(rows) * weight.value;
    }
  }
  out.rowwise() += bias.value.row(0);
}

template <typename T>
void Conv3d<T>::backward(const Shape3& s, const ConstRef& in, const ConstRef& dout, Ref* din) {
  const auto n = static_cast<Eigen::Index>(s.voxels());
  bias.grad.row(0) += dout.colwise().sum();
  if (kernel_ == 1) {
    weight.grad.noalias() += in.transpose() * dout;
    if (din != nullptr) din->noalias() += dout * weight.value.transpose();
    return;
  }
  MatrixR<T> col(std::min(kConvChunk, n), weight.value.rows());
  MatrixR<T> dcol;
  for (Eigen::Index r0 = 0; r0 < n; r0 += kConvChunk) {
    const Eigen::Index rows = std::min(kConvChunk, n - r0);
    im2col(s, in.data(), in.outerStride(), in_, r0, rows, col);
    weight.grad.noalias() += col.topRows(rows).transpose() * dout.middleRows(r0, rows);
    if (din != nullptr) {
      dcol.noalias() = dout.middleRows(r0, rows) * weight.value.transpose();
      col2im_add(s, dcol, r0, rows, in_, din->data(), din->outerStride());
    }
  }
}

// ---------------------------------------------------------------------------
// Encoder

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const std::size_t g0 = cfg.base_channels;
  const std::size_t g = cfg.growth;
  sfe1_ = Conv3d<T>("encoder.sfe1", cfg.in_channels, g0, 3);
  sfe2_ = Conv3d<T>("encoder.sfe2", g0, g0, 3);
  blocks_.resize(cfg.num_blocks);
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    const std::string prefix = "encoder.block" + std::to_string(b);
    for (std::size_t c = 0; c < cfg.layers_per_block; ++c) {
      blocks_[b].dense.emplace_back(prefix + ".dense" + std::to_string(c), g0 + c * g, g, 3);
    }
    blocks_[b].fusion = Conv3d<T>(prefix + ".fusion", g0 + cfg.layers_per_block * g, g0, 1);
  }
  gff1_ = Conv3d<T>("encoder.gff1", cfg.num_blocks * g0, g0, 1);
  gff2_ = Conv3d<T>("encoder.gff2", g0, g0, 3);
  project_ = Conv3d<T>("encoder.project", g0, cfg.feature_channels, 1);
}

template <typename T>
std::size_t Encoder<T>::receptive_radius() const {
  return 3 + cfg_.num_blocks * cfg_.layers_per_block;
}

template <typename T>
void Encoder<T>::collect(std::vector<Param<T>*>& out) {
  auto add = [&](Conv3d<T>& c) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  };
  add(sfe1_);
  add(sfe2_);
  for (auto& b : blocks_) {
    for (auto& c : b.dense) add(c);
    add(b.fusion);
  }
  add(gff1_);
  add(gff2_);
  add(project_);
}

template <typename T>
FeatureMap<T> Encoder<T>::forward(const Volume& lr, Tape* tape) const {
  const Shape3 s = lr.shape();
  const auto n = static_cast<Eigen::Index>(s.voxels());
  const auto g0 = static_cast<Eigen::Index>(cfg_.base_channels);
  const auto g = static_cast<Eigen::Index>(cfg_.growth);
  const auto nc = static_cast<Eigen::Index>(cfg_.layers_per_block);
  const auto nb = static_cast<Eigen::Index>(cfg_.num_blocks);
  const Eigen::Index width = g0 + nc * g;

  MatrixR<T> x(n, 1);
  const auto src = lr.data();
  for (Eigen::Index v = 0; v < n; ++v) x(v, 0) = static_cast<T>(src[static_cast<std::size_t>(v)]);

  MatrixR<T> f1(n, g0);
  sfe1_.forward(s, x, f1);
  MatrixR<T> cur(n, g0);
  sfe2_.forward(s, f1, cur);

  MatrixR<T> cat(n, nb * g0);
  MatrixR<T> fused_local(n, g0);
  std::vector<MatrixR<T>> bufs;
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Block& blk = blocks_[static_cast<std::size_t>(b)];
    MatrixR<T> buf(n, width);
    buf.leftCols(g0) = cur;
    for (Eigen::Index c = 0; c < nc; ++c) {
      blk.dense[static_cast<std::size_t>(c)].forward(s, buf.leftCols(g0 + c * g), buf.middleCols(g0 + c * g, g));
      relu_inplace<T>(buf.middleCols(g0 + c * g, g));
    }
    blk.fusion.forward(s, buf, fused_local);
    cat.middleCols(b * g0, g0) = buf.leftCols(g0) + fused_local;
    cur = cat.middleCols(b * g0, g0);
    if (tape != nullptr) bufs.push_back(std::move(buf));
  }

  MatrixR<T> gf1(n, g0);
  gff1_.forward(s, cat, gf1);
  MatrixR<T> fused(n, g0);
  gff2_.forward(s, gf1, fused);
  fused += f1;

  FeatureMap<T> out(s, cfg_.feature_channels);
  Eigen::Map<MatrixR<T>> out_m(out.data.data(), n, static_cast<Eigen::Index>(cfg_.feature_channels));
  project_.forward(s, fused, out_m);

  if (tape != nullptr) {
    tape->shape = s;
    tape->input = std::move(x);
    tape->sfe1 = std::move(f1);
    tape->blocks = std::move(bufs);
    tape->block_outputs = std::move(cat);
    tape->gff1 = std::move(gf1);
    tape->fused = std::move(fused);
  }
  return out;
}

template <typename T>
void Encoder<T>::backward(const Tape& tape, const FeatureMap<T>& dout) {
  const Shape3& s = tape.shape;
  const auto n = static_cast<Eigen::Index>(s.voxels());
  const auto g0 = static_cast<Eigen::Index>(cfg_.base_channels);
  const auto g = static_cast<Eigen::Index>(cfg_.growth);
  const auto nc = static_cast<Eigen::Index>(cfg_.layers_per_block);
  const auto nb = static_cast<Eigen::Index>(cfg_.num_blocks);
  const Eigen::Index width = g0 + nc * g;

  Eigen::Map<const MatrixR<T>> dout_m(dout.data.data(), n, static_cast<Eigen::Index>(cfg_.feature_channels));

  MatrixR<T> dfused = MatrixR<T>::Zero(n, g0);
  {
    typename Conv3d<T>::Ref r(dfused);
    project_.backward(s, tape.fused, dout_m, &r);
  }
  MatrixR<T> df1 = dfused;  // global residual
  MatrixR<T> dgf1 = MatrixR<T>::Zero(n, g0);
  {
    typename Conv3d<T>::Ref r(dgf1);
    gff2_.backward(s, tape.gff1, dfused, &r);
  }
  MatrixR<T> dcat = MatrixR<T>::Zero(n, nb * g0);
  {
    typename Conv3d<T>::Ref r(dcat);
    gff1_.backward(s, tape.block_outputs, dgf1, &r);
  }

  MatrixR<T> carry;
  for (Eigen::Index b = nb - 1; b >= 0; --b) {
    Block& blk = blocks_[static_cast<std::size_t>(b)];
    const MatrixR<T>& buf = tape.blocks[static_cast<std::size_t>(b)];
    MatrixR<T> dblock = dcat.middleCols(b * g0, g0);
    if (b < nb - 1) dblock += carry;

    MatrixR<T> dbuf = MatrixR<T>::Zero(n, width);
    dbuf.leftCols(g0) = dblock;  // local residual
    {
      typename Conv3d<T>::Ref r(dbuf);
      blk.fusion.backward(s, buf, dblock, &r);
    }
    for (Eigen::Index c = nc - 1; c >= 0; --c) {
      const auto out_c = buf.middleCols(g0 + c * g, g);
      MatrixR<T> dpre = dbuf.middleCols(g0 + c * g, g).cwiseProduct((out_c.array() > T(0)).matrix().template cast<T>());
      typename Conv3d<T>::Ref r(dbuf.leftCols(g0 + c * g));
      blk.dense[static_cast<std::size_t>(c)].backward(s, buf.leftCols(g0 + c * g), dpre, &r);
    }
    carry = dbuf.leftCols(g0);
  }

  {
    typename Conv3d<T>::Ref r(df1);
    sfe2_.backward(s, tape.sfe1, carry, &r);
  }
  sfe1_.backward(s, tape.input, df1, nullptr);
}

// ---------------------------------------------------------------------------
// Decoder

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  layers_.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t in = l == 0 ? cfg.in_features : cfg.hidden;
    const std::size_t out = l + 1 == cfg.layers ? cfg.out_features : cfg.hidden;
    const std::string prefix = "decoder.fc" + std::to_string(l);
    layers_[l].weight = make_param<T>(prefix + ".weight", static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    layers_[l].bias = make_param<T>(prefix + ".bias", 1, static_cast<Eigen::Index>(out));
  }
}

template <typename T>
void Decoder<T>::collect(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

namespace {
constexpr std::size_t kResidualTarget = 3;  // zero-based index of the fourth layer
}

template <typename T>
VectorX<T> Decoder<T>::forward(const MatrixR<T>& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.cols()) != cfg_.in_features) {
    throw ValidationError("decoder input width " + std::to_string(x.cols()) + " != " + std::to_string(cfg_.in_features));
  }
  const std::size_t nl = layers_.size();
  std::vector<MatrixR<T>> hidden;
  hidden.reserve(nl - 1);
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    const MatrixR<T>& in = l == 0 ? x : hidden.back();
    MatrixR<T> pre = in * layers_[l].weight.value;
    pre.rowwise() += layers_[l].bias.value.row(0);
    if (cfg_.residual && l == kResidualTarget) pre += hidden.front();
    hidden.push_back(pre.cwiseMax(T(0)));
  }
  const Dense& last = layers_.back();
  VectorX<T> y = hidden.back() * last.weight.value.col(0);
  y.array() += last.bias.value(0, 0);
  if (tape != nullptr) {
    tape->input = x;
    tape->hidden = std::move(hidden);
  }
  return y;
}

template <typename T>
MatrixR<T> Decoder<T>::backward(const Tape& tape, const VectorX<T>& dy) {
  const std::size_t nl = layers_.size();
  Dense& last = layers_.back();
  last.weight.grad.col(0) += tape.hidden.back().transpose() * dy;
  last.bias.grad(0, 0) += dy.sum();
  MatrixR<T> dh = dy * last.weight.value.col(0).transpose();

  MatrixR<T> dskip;
  for (std::size_t l = nl - 1; l-- > 0;) {
    const MatrixR<T>& h = tape.hidden[l];
    MatrixR<T> dpre = dh.cwiseProduct((h.array() > T(0)).matrix().template cast<T>());
    if (cfg_.residual && l == kResidualTarget) dskip = dpre;
    const MatrixR<T>& in = l == 0 ? tape.input : tape.hidden[l - 1];
    layers_[l].weight.grad.noalias() += in.transpose() * dpre;
    layers_[l].bias.grad.row(0) += dpre.colwise().sum();
    dh.noalias() = dpre * layers_[l].weight.value.transpose();
    if (cfg_.residual && l == 1) dh += dskip;
  }
  return dh;
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
SrModel<T>::SrModel(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t init_seed, double kaiming_a)
    : encoder_(enc), decoder_(dec) {
  if (dec.in_features != 2 * enc.feature_channels) {
    throw ValidationError("decoder in_features must equal twice the encoder feature channels");
  }
  Rng rng(init_seed);
  for (Param<T>* p : parameters()) {
    if (p->name.ends_with(".weight")) kaiming_uniform(*p, static_cast<std::size_t>(p->value.rows()), kaiming_a, rng);
  }
}

template <typename T>
template <typename U>
SrModel<U> SrModel<T>::cast() const {
  SrModel<U> out(encoder_config(), decoder_config(), 0);
  auto dst = out.parameters();
  auto src = parameters();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n]->value = src[n]->value.template cast<U>();
  return out;
}

template <typename T>
std::vector<Param<T>*> SrModel<T>::parameters() {
  std::vector<Param<T>*> out;
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

template <typename T>
std::vector<const Param<T>*> SrModel<T>::parameters() const {
  auto mut = const_cast<SrModel<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t SrModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Param<T>* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename T>
void SrModel<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<double> SrModel<T>::decode(const MatrixR<T>& features) const {
  const VectorX<T> y = decoder_.forward(features);
  std::vector<double> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index n = 0; n < y.size(); ++n) out[static_cast<std::size_t>(n)] = static_cast<double>(y(n));
  return out;
}

template <typename T>
std::vector<double> SrModel<T>::forward(const PatchPair& pp, std::span<const Vec3> local_coords) const {
  const FeatureMap<T> fa = encoder_.forward(pp.axial.data);
  const FeatureMap<T> fc = encoder_.forward(pp.coronal.data);
  std::vector<Vec3> hr(local_coords.size());
  for (std::size_t n = 0; n < hr.size(); ++n) hr[n] = pp.local_to_hr(local_coords[n]);
  return decode(gather_features(fa, pp.axial, fc, pp.coronal, std::span<const Vec3>(hr)));
}

template <typename T>
MatrixR<T> gather_features(const FeatureMap<T>& fa, const ViewPatch& ax, const FeatureMap<T>& fc,
                           const ViewPatch& cor, std::span<const Vec3> hr_positions) {
  const auto ca = static_cast<Eigen::Index>(fa.channels);
  const auto cc = static_cast<Eigen::Index>(fc.channels);
  MatrixR<T> x(static_cast<Eigen::Index>(hr_positions.size()), ca + cc);
  for (std::size_t n = 0; n < hr_positions.size(); ++n) {
    T* row = x.row(static_cast<Eigen::Index>(n)).data();
    trilinear_at_index(fa, ax.lr_index(hr_positions[n]), row);
    trilinear_at_index(fc, cor.lr_index(hr_positions[n]), row + ca);
  }
  return x;
}

template <typename T>
void scatter_feature_grads(FeatureMap<T>& dfa, const ViewPatch& ax, FeatureMap<T>& dfc, const ViewPatch& cor,
                           std::span<const Vec3> hr_positions, const MatrixR<T>& dx) {
  const auto ca = static_cast<Eigen::Index>(dfa.channels);
  for (std::size_t n = 0; n < hr_positions.size(); ++n) {
    const T* row = dx.row(static_cast<Eigen::Index>(n)).data();
    trilinear_scatter_index(dfa, ax.lr_index(hr_positions[n]), row);
    trilinear_scatter_index(dfc, cor.lr_index(hr_positions[n]), row + ca);
  }
}

template class Conv3d<float>;
template class Conv3d<double>;
template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class SrModel<float>;
template class SrModel<double>;
template SrModel<double> SrModel<float>::cast<double>() const;
template SrModel<float> SrModel<double>::cast<float>() const;
template SrModel<float> SrModel<float>::cast<float>() const;
template MatrixR<float> gather_features(const FeatureMap<float>&, const ViewPatch&, const FeatureMap<float>&,
                                        const ViewPatch&, std::span<const Vec3>);
template MatrixR<double> gather_features(const FeatureMap<double>&, const ViewPatch&, const FeatureMap<double>&,
                                         const ViewPatch&, std::span<const Vec3>);
template void scatter_feature_grads(FeatureMap<float>&, const ViewPatch&, FeatureMap<float>&, const ViewPatch&,
                                    std::span<const Vec3>, const MatrixR<float>&);
template void scatter_feature_grads(FeatureMap<double>&, const ViewPatch&, FeatureMap<double>&, const ViewPatch&,
                                    std::span<const Vec3>, const MatrixR<double>&);

}  // namespace anisosr
