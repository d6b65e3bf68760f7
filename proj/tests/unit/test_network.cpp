#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anisosr/inference.hpp"
#include "anisosr/network.hpp"
#include "test_util.hpp"

using namespace anisosr;
using anisosr::test::random_volume;

namespace {

EncoderConfig tiny_encoder(std::size_t features = 4) {
  EncoderConfig e;
  e.feature_channels = features;
  e.base_channels = 4;
  e.num_blocks = 1;
  e.layers_per_block = 1;
  e.growth = 4;
  return e;
}

DecoderConfig tiny_decoder(std::size_t in, std::size_t hidden = 16) {
  DecoderConfig d;
  d.in_features = in;
  d.hidden = hidden;
  return d;
}

template <typename T>
void randomize(SrModel<T>& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Param<T>* p : m.parameters())
    for (Eigen::Index n = 0; n < p->value.size(); ++n) p->value.data()[n] += static_cast<T>(u(rng));
}

// Direct-loop 3-D convolution with zero padding; weight rows are tap-major then input channel.
MatrixR<double> conv_oracle(const Shape3& s, const MatrixR<double>& in, const Conv3d<double>& c) {
  const long k = c.kernel(), r = k / 2;
  const auto cin = static_cast<long>(c.in_channels()), cout = static_cast<long>(c.out_channels());
  MatrixR<double> out(static_cast<Eigen::Index>(s.voxels()), cout);
  for (long i = 0; i < long(s.h); ++i)
    for (long j = 0; j < long(s.w); ++j)
      for (long l = 0; l < long(s.d); ++l)
        for (long o = 0; o < cout; ++o) {
          double acc = c.bias.value(0, o);
          for (long a = 0; a < k; ++a)
            for (long b = 0; b < k; ++b)
              for (long e = 0; e < k; ++e) {
                const long ii = i + a - r, jj = j + b - r, ll = l + e - r;
                if (ii < 0 || jj < 0 || ll < 0 || ii >= long(s.h) || jj >= long(s.w) || ll >= long(s.d)) continue;
                const long tap = (a * k + b) * k + e;
                for (long ci = 0; ci < cin; ++ci)
                  acc += c.weight.value(tap * cin + ci, o) * in(long(s.linear(ii, jj, ll)), ci);
              }
          out(long(s.linear(i, j, l)), o) = acc;
        }
  return out;
}

// Plain MLP with ReLU; layer-1 output added to the pre-activation of layer index 3.
std::vector<double> mlp_oracle(const std::vector<std::pair<MatrixR<double>, MatrixR<double>>>& layers,
                               const std::vector<double>& x, bool residual) {
  std::vector<double> h = x, skip;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& [w, b] = layers[l];
    std::vector<double> z(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index o = 0; o < w.cols(); ++o) {
      double acc = b(0, o);
      for (Eigen::Index i = 0; i < w.rows(); ++i) acc += w(i, o) * h[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = acc;
    }
    if (residual && l == 3)
      for (std::size_t o = 0; o < z.size(); ++o) z[o] += skip[o];
    if (l + 1 < layers.size())
      for (double& v : z) v = std::max(v, 0.0);
    if (l == 0) skip = z;
    h = std::move(z);
  }
  return h;
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
  const EncoderConfig e;
  EXPECT_EQ(e.feature_channels, 128u);
  EXPECT_EQ(e.base_channels, 64u);
  EXPECT_EQ(e.num_blocks, 4u);
  EXPECT_EQ(e.layers_per_block, 4u);
  EXPECT_EQ(e.growth, 16u);
  const DecoderConfig d;
  EXPECT_EQ(d.in_features, 256u);
  EXPECT_EQ(d.layers, 8u);
  EXPECT_EQ(d.hidden, 512u);
  EXPECT_TRUE(d.residual);
  DecoderConfig bad = d;
  bad.layers = 4;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad.residual = false;
  EXPECT_NO_THROW(bad.validate());
  EXPECT_THROW(SrModel<float>(tiny_encoder(4), tiny_decoder(6)), ValidationError);
}

TEST(Config, FingerprintAndParameterCount) {
  const auto e = tiny_encoder();
  const auto d = tiny_decoder(8);
  EXPECT_EQ(config_fingerprint(e, d), config_fingerprint(e, d));
  auto d2 = d;
  d2.hidden = 17;
  EXPECT_NE(config_fingerprint(e, d), config_fingerprint(e, d2));
  auto d3 = d;
  d3.residual = false;
  EXPECT_NE(config_fingerprint(e, d), config_fingerprint(e, d3));
  const SrModel<float> a(e, d, 1), b(e, d, 2);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  // Default decoder: 256x512 + 6 x 512x512 + 512x1, with biases.
  const DecoderConfig full;
  const std::size_t expect = 256 * 512 + 512 + 6 * (512 * 512 + 512) + 512 + 1;
  Decoder<float> dec(full);
  std::vector<Param<float>*> ps;
  dec.collect(ps);
  std::size_t n = 0;
  for (auto* p : ps) n += static_cast<std::size_t>(p->value.size());
  EXPECT_EQ(n, expect);
}

TEST(Init, KaimingUniformBoundsAndZeroBiases) {
  const SrModel<double> m(tiny_encoder(), tiny_decoder(8), 5);
  for (const Param<double>* p : m.parameters()) {
    if (p->name.ends_with(".bias")) {
      EXPECT_EQ(p->value.cwiseAbs().maxCoeff(), 0.0) << p->name;
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(p->value.rows()));
    EXPECT_LE(p->value.cwiseAbs().maxCoeff(), bound) << p->name;
    EXPECT_GT(p->value.cwiseAbs().maxCoeff(), 0.3 * bound) << p->name;
  }
  const SrModel<double> again(tiny_encoder(), tiny_decoder(8), 5);
  const SrModel<double> other(tiny_encoder(), tiny_decoder(8), 6);
  EXPECT_EQ(m.parameters()[0]->value, again.parameters()[0]->value);
  EXPECT_NE(m.parameters()[0]->value, other.parameters()[0]->value);
}

TEST(Conv3d, MatchesDirectLoopOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k : {1, 3}) {
    Conv3d<double> c("c", 3, 5, k);
    for (auto* p : {&c.weight, &c.bias})
      for (Eigen::Index n = 0; n < p->value.size(); ++n) p->value.data()[n] = u(rng);
    const Shape3 s{4, 3, 5};
    MatrixR<double> in(static_cast<Eigen::Index>(s.voxels()), 3);
    for (Eigen::Index n = 0; n < in.size(); ++n) in.data()[n] = u(rng);
    MatrixR<double> out(in.rows(), 5);
    c.forward(s, in, out);
    EXPECT_LE((out - conv_oracle(s, in, c)).cwiseAbs().maxCoeff(), 1e-12) << "kernel " << k;
  }
}

TEST(Encode, ShapeContractDefaultConfig) {
  const SrModel<float> m(EncoderConfig{}, DecoderConfig{}, 1);
  const FeatureMap<float> f = m.encode(random_volume({20, 20, 10}, 1));
  EXPECT_EQ(f.shape, (Shape3{20, 20, 10}));
  EXPECT_EQ(f.channels, 128u);
  const FeatureMap<float> g = m.encode(random_volume({1, 1, 1}, 2));
  EXPECT_EQ(g.shape, (Shape3{1, 1, 1}));
  EXPECT_EQ(g.channels, 128u);
}

TEST(Encode, ZeroWeightsGiveConstantBias) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  for (Param<double>* p : m.parameters()) {
    if (p->name.ends_with(".weight")) p->value.setZero();
    else p->value.setConstant(0.25);
  }
  const FeatureMap<double> f = m.encode(random_volume({5, 6, 7}, 4));
  for (double x : f.data) EXPECT_EQ(x, 0.25);
}

TEST(Encode, Deterministic) {
  SrModel<float> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 9);
  const Volume v = random_volume({6, 7, 5}, 5);
  EXPECT_EQ(m.encode(v).data, m.encode(v).data);
}

TEST(Encode, ReceptiveFieldRadius) {
  EncoderConfig e = tiny_encoder();
  e.num_blocks = 2;
  SrModel<double> m(e, tiny_decoder(8), 3);
  randomize(m, 10);
  const std::size_t r = m.encoder().receptive_radius();
  EXPECT_EQ(r, 3u + 2u * 1u);
  const std::size_t n = 2 * r + 6;
  const Volume v = random_volume({n, 3, 3}, 6);
  const FeatureMap<double> base = m.encode(v);
  Volume far = v;
  far(r + 1, 1, 1) += 1.0;  // distance r + 1 from node 0
  Volume near = v;
  near(r, 1, 1) += 1.0;  // distance r
  const FeatureMap<double> ff = m.encode(far);
  const FeatureMap<double> fn = m.encode(near);
  double d_far = 0.0, d_near = 0.0;
  for (std::size_t ch = 0; ch < base.channels; ++ch) {
    d_far = std::max(d_far, std::abs(ff.voxel(0, 1, 1)[ch] - base.voxel(0, 1, 1)[ch]));
    d_near = std::max(d_near, std::abs(fn.voxel(0, 1, 1)[ch] - base.voxel(0, 1, 1)[ch]));
  }
  EXPECT_EQ(d_far, 0.0);
  EXPECT_GT(d_near, 0.0);
}

TEST(Decode, ZeroWeightsGiveFinalBias) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  std::vector<Param<double>*> ps;
  m.decoder().collect(ps);
  for (Param<double>* p : ps) p->value.setZero();
  ps.back()->value(0, 0) = 0.42;
  MatrixR<double> x = MatrixR<double>::Random(5, 8);
  for (double y : m.decode(x)) EXPECT_EQ(y, 0.42);
}

TEST(Decode, MatchesLoopOracleWithResidual) {
  for (bool residual : {true, false}) {
    DecoderConfig d = tiny_decoder(8, 12);
    d.residual = residual;
    SrModel<double> m(tiny_encoder(), d, 3);
    randomize(m, 11);
    std::vector<Param<double>*> ps;
    m.decoder().collect(ps);
    std::vector<std::pair<MatrixR<double>, MatrixR<double>>> layers;
    for (std::size_t l = 0; l < ps.size(); l += 2) layers.emplace_back(ps[l]->value, ps[l + 1]->value);
    ASSERT_EQ(layers.size(), 8u);
    const MatrixR<double> x = MatrixR<double>::Random(6, 8);
    const auto y = m.decode(x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      std::vector<double> row(x.row(r).data(), x.row(r).data() + 8);
      EXPECT_NEAR(y[static_cast<std::size_t>(r)], mlp_oracle(layers, row, residual)[0], 1e-12);
    }
  }
}

TEST(Decode, BatchingAndOrder) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 12);
  const MatrixR<double> x = MatrixR<double>::Random(7, 8);
  const auto all = m.decode(x);
  ASSERT_EQ(all.size(), 7u);
  for (Eigen::Index r = 0; r < 7; ++r) {
    const MatrixR<double> one = x.row(r);
    EXPECT_NEAR(m.decode(one)[0], all[static_cast<std::size_t>(r)], 1e-12);
  }
  EXPECT_THROW(m.decode(MatrixR<double>::Random(2, 7)), ValidationError);
}

TEST(Decode, GradientMatchesFiniteDifferences) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 13);
  const MatrixR<double> x = MatrixR<double>::Random(4, 8);
  std::vector<Param<double>*> ps;
  m.decoder().collect(ps);
  for (auto* p : ps) p->zero_grad();
  typename Decoder<double>::Tape tape;
  const VectorX<double> y = m.decoder().forward(x, &tape);
  const MatrixR<double> dx = m.decoder().backward(tape, VectorX<double>::Ones(y.size()));
  auto total = [&] { return m.decoder().forward(x).sum(); };
  const double h = 1e-5;
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    Param<double>* p = ps[rng() % ps.size()];
    const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
    double& w = p->value.data()[idx];
    const double w0 = w;
    w = w0 + h;
    const double fp = total();
    w = w0 - h;
    const double fm = total();
    w = w0;
    const double fd = (fp - fm) / (2 * h);
    const double an = p->grad.data()[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
  }
  EXPECT_LE(worst, 1e-4);
  // Input gradient.
  MatrixR<double> xp = x;
  xp(1, 3) += h;
  MatrixR<double> xm = x;
  xm(1, 3) -= h;
  const double fd = (m.decoder().forward(xp).sum() - m.decoder().forward(xm).sum()) / (2 * h);
  EXPECT_NEAR(dx(1, 3), fd, 1e-6);
}

TEST(Encode, GradientMatchesFiniteDifferences) {
  EncoderConfig e = tiny_encoder();
  e.layers_per_block = 2;
  SrModel<double> m(e, tiny_decoder(8), 3);
  randomize(m, 15);
  const Volume v = random_volume({4, 3, 5}, 16);
  FeatureMap<double> dout(v.shape(), e.feature_channels);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& g : dout.data) g = u(rng);
  auto objective = [&] {
    const auto f = m.encoder().forward(v);
    double acc = 0.0;
    for (std::size_t n = 0; n < f.data.size(); ++n) acc += f.data[n] * dout.data[n];
    return acc;
  };
  std::vector<Param<double>*> ps;
  m.encoder().collect(ps);
  for (auto* p : ps) p->zero_grad();
  typename Encoder<double>::Tape tape;
  m.encoder().forward(v, &tape);
  m.encoder().backward(tape, dout);
  const double h = 1e-5;
  double worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    Param<double>* p = ps[rng() % ps.size()];
    const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
    double& w = p->value.data()[idx];
    const double w0 = w;
    w = w0 + h;
    const double fp = objective();
    w = w0 - h;
    const double fm = objective();
    w = w0;
    const double fd = (fp - fm) / (2 * h);
    const double an = p->grad.data()[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Forward, NodeCaseEqualsExactFeatures) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 18);
  const LRPair pair = simulate_lr_pair(random_volume({6, 8, 8}, 19), 2.0);
  const PatchPair pp = whole_volume_patch(pair);
  // HR node (2, 4, 6) is LR node (2, 4, 3) of the axial view and (2, 2, 6) of the coronal view.
  const Vec3 local = pp.hr_to_local({2.0, 4.0, 6.0});
  const auto y = m.forward(pp, std::span<const Vec3>(&local, 1));
  const auto fa = m.encode(pair.axial);
  const auto fc = m.encode(pair.coronal);
  MatrixR<double> x(1, 8);
  for (int c = 0; c < 4; ++c) {
    x(0, c) = fa.voxel(2, 4, 3)[c];
    x(0, 4 + c) = fc.voxel(2, 2, 6)[c];
  }
  EXPECT_EQ(y[0], m.decode(x)[0]);
}

TEST(Forward, PermutationEquivariant) {
  SrModel<double> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 20);
  const LRPair pair = simulate_lr_pair(random_volume({6, 8, 8}, 21), 2.0);
  const PatchPair pp = whole_volume_patch(pair);
  std::vector<Vec3> coords{{0.1, 0.2, -0.3}, {-0.9, 0.5, 0.5}, {1.0, -1.0, 0.0}, {0.33, 0.66, 0.99}};
  const auto y = m.forward(pp, std::span<const Vec3>(coords));
  std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Vec3> shuffled;
  for (auto p : perm) shuffled.push_back(coords[p]);
  const auto ys = m.forward(pp, std::span<const Vec3>(shuffled));
  for (std::size_t n = 0; n < perm.size(); ++n) EXPECT_EQ(ys[n], y[perm[n]]);
}

TEST(Forward, WholeVolumeMatchesPatchwisePath) {
  SrModel<float> m(tiny_encoder(), tiny_decoder(8), 3);
  randomize(m, 22, 0.1);
  const Volume hr = random_volume({16, 16, 16}, 23);
  const LRPair pair = simulate_lr_pair(hr, 2.0);
  InferenceConfig cfg;
  cfg.clamp = false;
  const Volume sr = super_resolve(m, pair, cfg);
  const PatchPair pp = whole_volume_patch(pair);
  const ReferenceFrame frame(hr.shape());
  std::vector<Vec3> coords;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      for (std::size_t k = 0; k < 16; ++k) coords.push_back(frame.to_coord({double(i), double(j), double(k)}));
  const auto y = m.forward(pp, std::span<const Vec3>(coords));
  double worst = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) worst = std::max(worst, std::abs(y[n] - sr.data()[n]));
  EXPECT_LE(worst, 1e-6);
}

TEST(Model, CastRoundTrip) {
  SrModel<float> m(tiny_encoder(), tiny_decoder(8), 3);
  const SrModel<float> back = m.cast<double>().cast<float>();
  const auto a = m.parameters();
  const auto b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n]->name, b[n]->name);
    EXPECT_EQ(a[n]->value, b[n]->value);
  }
}
