#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sgdvit/model/backbone.hpp"
#include "sgdvit/model/heads.hpp"
#include "sgdvit/model/saliency.hpp"

using namespace sgdvit;
using namespace sgdvit::testing;

namespace {

Tensord random_param(Shape s, Rng& rng) { return random_tensor(std::move(s), rng).set_requires_grad(true); }

// Multi-head attention assembled by hand from single-head calls.
Tensord two_head_reference(nn::MultiHeadAttention<double>& mha, const Tensord& q, const Tensord& k,
                           const Tensord& v) {
  std::vector<Tensord> heads;
  for (std::size_t j = 0; j < 2; ++j)
    heads.push_back(nn::scaled_dot_attention(ops::matmul(q, mha.w1()[j]), ops::matmul(k, mha.w2()[j]),
                                             ops::matmul(v, mha.w3()[j]), mha.head_dim()));
  const std::size_t n = q.dim(0), hd = mha.head_dim();
  Tensord cat(Shape{n, 2 * hd});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t c = 0; c < hd; ++c) cat[i * 2 * hd + j * hd + c] = heads[j][i * hd + c];
  return ops::matmul(cat, mha.wc());
}

Tensord rows_permuted(const Tensord& x, const std::vector<std::size_t>& perm) {
  Tensord y(x.shape());
  const std::size_t d = x.dim(1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) y[i * d + c] = x[perm[i] * d + c];
  return y;
}

}  // namespace

TEST(Conv, OneByOneIdentity) {
  Rng rng(3);
  nn::Conv2d<double> conv(3, 3, 1, {1, 0, 1}, rng);
  std::fill(conv.weight().data().begin(), conv.weight().data().end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) conv.weight()[c * 3 + c] = 1.0;
  auto x = random_tensor(Shape{3, 4, 5}, rng);
  EXPECT_EQ(max_abs_diff(as_doubles(conv(x)), as_doubles(x)), 0.0);
}

TEST(Conv, BoxSumCenter) {
  Tensord x = Tensord::ones(Shape{1, 1, 5, 5});
  Tensord w = Tensord::ones(Shape{1, 1, 3, 3});
  auto y = ops::conv2d(x, w, Tensord::zeros(Shape{1}), {1, 1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
  EXPECT_EQ(y[12], 9.0);
  EXPECT_EQ(y[0], 4.0);
}

TEST(Conv, MatchesNaiveLoops) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(3), k = 1 + rng.below(3);
    const std::size_t H = k + rng.below(5), W = k + rng.below(5), s = 1 + rng.below(2), p = rng.below(2);
    auto x = random_tensor(Shape{C, H, W}, rng);
    auto w = random_tensor(Shape{O, C, k, k}, rng);
    auto b = random_tensor(Shape{O}, rng);
    std::size_t oh, ow;
    auto ref = naive_conv2d(as_doubles(x), C, H, W, as_doubles(w), O, k, as_doubles(b), s, p, oh, ow);
    auto y = ops::conv2d(x, w, b, {s, p, 1});
    ASSERT_EQ(y.shape(), (Shape{O, oh, ow}));
    EXPECT_LT(max_abs_diff(as_doubles(y), ref), 1e-12);
  }
}

TEST(Conv, TransposedMatchesNaiveScatter) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(3), k = 1 + rng.below(3);
    const std::size_t H = 2 + rng.below(4), W = 2 + rng.below(4), s = 1 + rng.below(2);
    const std::size_t p = std::min<std::size_t>(rng.below(2), k - 1);
    auto x = random_tensor(Shape{C, H, W}, rng);
    auto w = random_tensor(Shape{C, O, k, k}, rng);
    auto b = random_tensor(Shape{O}, rng);
    std::size_t oh, ow;
    auto ref = naive_conv_transpose2d(as_doubles(x), C, H, W, as_doubles(w), O, k, as_doubles(b), s, p, oh, ow);
    auto y = ops::conv_transpose2d(x, w, b, {s, p, 1});
    ASSERT_EQ(y.shape(), (Shape{O, oh, ow}));
    EXPECT_LT(max_abs_diff(as_doubles(y), ref), 1e-12);
  }
}

TEST(Conv, KernelLargerThanInputThrows) {
  EXPECT_THROW(ops::conv2d(Tensord(Shape{1, 2, 2}), Tensord(Shape{1, 1, 3, 3}), Tensord(Shape{1}), {1, 0, 1}),
               ShapeError);
}

TEST(Conv, LayerGradients) {
  Rng rng(8);
  auto x = random_param(Shape{2, 6, 6}, rng);
  nn::Conv2d<double> conv(2, 3, 3, {2, 1, 1}, rng);
  nn::ConvTranspose2d<double> deconv(3, 2, 3, {2, 1, 1}, rng, 1);
  auto r = grad_check([&] { return ops::sum(ops::square(deconv(ops::relu(conv(x))))); },
                      {x, conv.weight(), conv.bias(), deconv.weight(), deconv.bias()}, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_EQ(deconv(conv(x)).shape(), x.shape());
}

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(1);
  auto q = random_tensor(Shape{1, 4}, rng), k = random_tensor(Shape{1, 4}, rng), v = random_tensor(Shape{1, 4}, rng);
  auto y = nn::scaled_dot_attention(q, k, v);
  EXPECT_EQ(as_doubles(y), as_doubles(v));
}

TEST(Attention, SaturatedQuerySelectsValue) {
  Tensord k(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensord q(Shape{1, 3}, {1000, 0, 0});
  Rng rng(2);
  auto v = random_tensor(Shape{3, 5}, rng);
  auto y = nn::scaled_dot_attention(q, k, v);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(y[c], v[c], 1e-3);
}

TEST(Attention, MatchesNaiveLoops) {
  Rng rng(4);
  auto q = random_tensor(Shape{5, 8}, rng), k = random_tensor(Shape{5, 8}, rng), v = random_tensor(Shape{5, 8}, rng);
  auto ref = naive_attention(as_doubles(q), as_doubles(k), as_doubles(v), 5, 5, 8, 8, 8);
  EXPECT_LT(max_abs_diff(as_doubles(nn::scaled_dot_attention(q, k, v)), ref), 1e-6);
}

TEST(Attention, RowsAreStochastic) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    auto a = nn::attention_weights(random_tensor(Shape{6, 4}, rng, -20, 20),
                                   random_tensor(Shape{9, 4}, rng, -20, 20), 4);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        EXPECT_GE(a[i * 9 + j], 0.0);
        s += a[i * 9 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Attention, DimMismatchThrows) {
  EXPECT_THROW(nn::scaled_dot_attention(Tensord(Shape{2, 3}), Tensord(Shape{2, 4}), Tensord(Shape{2, 4})),
               ShapeError);
  EXPECT_THROW(nn::scaled_dot_attention(Tensord(Shape{2, 4}), Tensord(Shape{2, 4}), Tensord(Shape{3, 4})),
               ShapeError);
}

TEST(MultiHead, SingleIdentityHeadReducesToAttention) {
  Rng rng(10);
  nn::MultiHeadAttention<double> mha(4, 1, rng);
  Tensord eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1;
  for (auto* w : {&mha.w1()[0], &mha.w2()[0], &mha.w3()[0], &mha.wc()})
    std::copy(eye.data().begin(), eye.data().end(), w->data().begin());
  auto q = random_tensor(Shape{3, 4}, rng), k = random_tensor(Shape{5, 4}, rng), v = random_tensor(Shape{5, 4}, rng);
  EXPECT_LT(max_abs_diff(as_doubles(mha(q, k, v)), as_doubles(nn::scaled_dot_attention(q, k, v))), 1e-12);
}

TEST(MultiHead, TwoHeadsMatchCompositionalReference) {
  Rng rng(11);
  nn::MultiHeadAttention<double> mha(8, 2, rng);
  auto q = random_tensor(Shape{4, 8}, rng), k = random_tensor(Shape{6, 8}, rng), v = random_tensor(Shape{6, 8}, rng);
  auto y = mha(q, k, v);
  EXPECT_EQ(y.shape(), q.shape());
  EXPECT_LT(max_abs_diff(as_doubles(y), as_doubles(two_head_reference(mha, q, k, v))), 1e-6);
}

TEST(MultiHead, KeyValuePermutationInvariance) {
  Rng rng(12);
  nn::MultiHeadAttention<double> mha(8, 4, rng);
  auto q = random_tensor(Shape{4, 8}, rng), k = random_tensor(Shape{7, 8}, rng), v = random_tensor(Shape{7, 8}, rng);
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  EXPECT_LT(max_abs_diff(as_doubles(mha(q, k, v)), as_doubles(mha(q, rows_permuted(k, perm), rows_permuted(v, perm)))),
            1e-6);
}

TEST(MultiHead, IndivisibleDimThrows) {
  Rng rng(1);
  EXPECT_THROW(nn::MultiHeadAttention<double>(10, 4, rng), ConfigError);
}

TEST(MultiHead, Gradients) {
  Rng rng(13);
  nn::MultiHeadAttention<double> mha(8, 2, rng);
  auto q = random_param(Shape{3, 8}, rng), kv = random_param(Shape{5, 8}, rng);
  std::vector<Tensord> wrt{q, kv, mha.wc()};
  for (std::size_t j = 0; j < 2; ++j) wrt.insert(wrt.end(), {mha.w1()[j], mha.w2()[j], mha.w3()[j]});
  auto r = grad_check([&] { return ops::sum(ops::square(mha(q, kv, kv))); }, wrt, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Mlp, ZeroWeightsGiveFinalBias) {
  Rng rng(14);
  nn::Mlp<double> mlp(3, 5, rng);
  for (auto* w : {&mlp.fc1().weight(), &mlp.fc2().weight()}) std::fill(w->data().begin(), w->data().end(), 0.0);
  mlp.fc2().bias()[0] = 1.5;
  mlp.fc2().bias()[2] = -2;
  auto y = mlp(random_tensor(Shape{4, 3}, rng));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y[i * 3], 1.5);
    EXPECT_EQ(y[i * 3 + 1], 0.0);
    EXPECT_EQ(y[i * 3 + 2], -2.0);
  }
}

TEST(Mlp, IdentityLayersPassPositiveInput) {
  Rng rng(15);
  nn::Mlp<double> mlp(4, 4, rng);
  for (auto* w : {&mlp.fc1().weight(), &mlp.fc2().weight()}) {
    std::fill(w->data().begin(), w->data().end(), 0.0);
    for (std::size_t i = 0; i < 4; ++i) (*w)[i * 5] = 1;
  }
  auto x = random_tensor(Shape{3, 4}, rng, 0.1, 2);
  EXPECT_EQ(as_doubles(mlp(x)), as_doubles(x));
}

TEST(Mlp, Gradients) {
  Rng rng(16);
  nn::Mlp<double> mlp(6, 12, rng);
  auto x = random_param(Shape{4, 6}, rng);
  auto r = grad_check([&] { return ops::sum(ops::square(mlp(x))); },
                      {x, mlp.fc1().weight(), mlp.fc1().bias(), mlp.fc2().weight(), mlp.fc2().bias()}, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_THROW(mlp(Tensord(Shape{4, 5})), ShapeError);
}

TEST(LayerNorm, UnitGainNormalizesTokens) {
  Rng rng(17);
  nn::LayerNorm<float> norm(16);
  auto y = norm(random_tensor(Shape{10, 16}, rng, -50, 50).cast<float>());
  for (std::size_t i = 0; i < 10; ++i) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y[i * 16 + c];
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y[i * 16 + c] - m) * (y[i * 16 + c] - m);
    v /= 16;
    EXPECT_LT(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(MapNorm, WholeMapZeroMeanUnitVariance) {
  Rng rng(18);
  nn::MapNorm<double> norm(3);
  auto y = norm(random_tensor(Shape{3, 5, 5}, rng, -40, 90));
  double m = 0, v = 0;
  for (double e : y.data()) m += e;
  m /= double(y.numel());
  for (double e : y.data()) v += (e - m) * (e - m);
  EXPECT_LT(std::abs(m), 1e-12);
  EXPECT_NEAR(v / double(y.numel()), 1.0, 1e-6);
  EXPECT_THROW(norm(Tensord(Shape{4, 5, 5})), ShapeError);
}

TEST(MapNorm, Gradients) {
  Rng rng(19);
  nn::MapNorm<double> norm(3);
  for (const auto& e : norm.params().entries()) {
    Tensord t = e.tensor;
    for (auto& v : t.data()) v += rng.uniform(-0.5, 0.5);
  }
  auto x = random_param(Shape{3, 4, 4}, rng);
  auto readout = random_tensor(Shape{3, 4, 4}, rng);
  std::vector<Tensord> wrt{x};
  for (const auto& e : norm.params().entries()) wrt.push_back(e.tensor);
  auto r = grad_check([&] { return ops::sum(ops::mul(norm(x), readout)); }, wrt, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Heads, RegressionPriorAtZeroScale) {
  Rng rng(20);
  model::TrackingHeads<double> heads(4, rng, 0.7, 2.0, 0.0);
  auto out = heads(random_tensor(Shape{4, 6, 6}, rng));
  for (double v : out.cls.data()) EXPECT_NEAR(v, 0.7, 1e-12);
  for (double v : out.reg.data()) EXPECT_NEAR(v, 2.0, 1e-12);
  EXPECT_THROW(heads(Tensord(Shape{3, 6, 6})), ShapeError);
}

TEST(Heads, Gradients) {
  Rng rng(21);
  model::TrackingHeads<double> heads(4, rng);
  auto x = random_param(Shape{4, 5, 5}, rng);
  auto rc = random_tensor(Shape{1, 5, 5}, rng), rr = random_tensor(Shape{4, 5, 5}, rng);
  std::vector<Tensord> wrt{x};
  for (const auto& e : heads.params().entries()) wrt.push_back(e.tensor);
  auto r = grad_check([&] {
    auto o = heads(x);
    return ops::add(ops::sum(ops::mul(o.cls, rc)), ops::sum(ops::mul(o.reg, rr)));
  }, wrt, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(PositionalEncoding, DistinctPerCenter) {
  auto pe = nn::sinusoidal_2d<double>({{0.5, 0.5}, {0.5, 1.5}, {2, 2}}, 8, 4.0);
  ASSERT_EQ(pe.shape(), (Shape{3, 8}));
  EXPECT_GT(max_abs_diff(std::vector<double>(pe.data().begin(), pe.data().begin() + 8),
                         std::vector<double>(pe.data().begin() + 8, pe.data().begin() + 16)),
            0.1);
  EXPECT_THROW(nn::sinusoidal_2d<double>({{0, 0}}, 6, 1.0), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Backbone, ShapeLaw) {
  Rng rng(1);
  model::Backbone<float> bb(BackboneConfig::narrow(12, 8), 3, rng);
  EXPECT_EQ(bb.output_size(127), 6u);
  EXPECT_EQ(bb.output_size(287), 26u);
  EXPECT_EQ(bb(Tensorf(Shape{3, 127, 127})).shape(), (Shape{12, 6, 6}));
  EXPECT_EQ(bb(Tensorf(Shape{3, 287, 287})).shape(), (Shape{12, 26, 26}));
  const auto f = bb.frame();
  EXPECT_DOUBLE_EQ(f.offset, 43.5);
  EXPECT_DOUBLE_EQ(f.stride, 8.0);
}

TEST(Backbone, DefaultWidthShapeLaw) {
  Rng rng(1);
  model::Backbone<float> bb(BackboneConfig::alexnet_like(96), 3, rng);
  EXPECT_EQ(bb(Tensorf(Shape{3, 127, 127})).shape(), (Shape{96, 6, 6}));
}

TEST(Backbone, ZeroImageZeroFeatures) {
  Rng rng(2);
  model::Backbone<float> bb(BackboneConfig::narrow(12, 8), 3, rng);
  const auto f = bb(Tensorf(Shape{3, 127, 127}));
  for (float v : f.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Backbone, UnsupportedSizeListsSupported) {
  Rng rng(3);
  model::Backbone<float> bb(BackboneConfig::narrow(12, 8), 3, rng);
  try {
    bb(Tensorf(Shape{3, 100, 100}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("127"), std::string::npos);
    EXPECT_NE(msg.find("287"), std::string::npos);
  }
}

TEST(Backbone, WrongGeometryRejectedAtConstruction) {
  auto cfg = BackboneConfig::narrow(12, 8);
  cfg.stages[0].stride = 1;
  Rng rng(4);
  EXPECT_THROW(model::Backbone<float>(cfg, 3, rng), ConfigError);
}

TEST(Backbone, SiameseWeightsShared) {
  Rng rng(5);
  model::Backbone<float> bb(BackboneConfig::narrow(12, 8), 3, rng);
  auto crop = random_tensor(Shape{3, 127, 127}, rng, 0, 1).cast<float>();
  EXPECT_EQ(as_doubles(bb(crop)), as_doubles(bb(crop.clone())));
}

TEST(Backbone, Gradients) {
  Rng rng(22);
  model::Backbone<double> bb(BackboneConfig::narrow(4, 8), 3, rng);
  auto crop = random_param(Shape{3, 127, 127}, rng);
  auto readout = random_tensor(Shape{4, 6, 6}, rng);
  std::vector<Tensord> wrt{crop};
  for (const auto& e : bb.params().entries()) wrt.push_back(e.tensor);
  auto r = grad_check([&] { return ops::sum(ops::mul(bb(crop), readout)); }, wrt, 4);
  EXPECT_GE(r.checked, 20u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Adjust, ResizesToGrid) {
  Rng rng(6);
  model::AdjustSampler<float> adj(12, rng);
  auto y = adj(random_tensor(Shape{12, 26, 26}, rng).cast<float>(), 16);
  EXPECT_EQ(y.shape(), (Shape{12, 16, 16}));
  EXPECT_EQ(adj.features(Tensorf(Shape{12, 6, 6})).shape(), (Shape{12, 6, 6}));
}

TEST(Adjust, BoxKernelsPreserveConstants) {
  Rng rng(7);
  model::AdjustSampler<double> adj(6, rng);
  for (auto& branch : adj.branches())
    for (auto& conv : branch) {
      const double v = 1.0 / double(conv.in_channels() * 9);
      std::fill(conv.weight().data().begin(), conv.weight().data().end(), v);
    }
  auto y = adj(Tensord(Shape{6, 26, 26}, 0.75), 16);
  for (double v : y.data()) EXPECT_NEAR(v, 0.75, 1e-12);
}

TEST(Adjust, BilinearPreservesLinearRamp) {
  Tensord ramp(Shape{1, 26, 26});
  for (std::size_t y = 0; y < 26; ++y)
    for (std::size_t x = 0; x < 26; ++x) ramp[y * 26 + x] = 0.3 * double(y) - 1.7 * double(x) + 2;
  auto r = ops::resize_bilinear(ramp, 16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const double sy = double(y) * 25 / 15, sx = double(x) * 25 / 15;
      EXPECT_NEAR(r[y * 16 + x], 0.3 * sy - 1.7 * sx + 2, 1e-5);
    }
  auto w = ops::resize_bilinear(ramp, 16, 16, ops::SampleWindow{2.5, 2.5, 22.5, 22.5});
  EXPECT_NEAR(w[0], 0.3 * 2.5 - 1.7 * 2.5 + 2, 1e-12);
}

TEST(Adjust, Gradients) {
  Rng rng(8);
  model::AdjustSampler<double> adj(6, rng);
  auto x = random_param(Shape{6, 7, 7}, rng);
  std::vector<Tensord> wrt{x};
  for (auto& b : adj.branches())
    for (auto& c : b) wrt.push_back(c.weight());
  auto r = grad_check([&] { return ops::sum(ops::square(adj(x, 4))); }, wrt, 20);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

// ---------------------------------------------------------------------------

TEST(CrossCorrelation, ZeroTemplateGivesZero) {
  Rng rng(1);
  auto s = model::cross_correlate(random_tensor(Shape{3, 26, 26}, rng), Tensord(Shape{3, 6, 6}));
  EXPECT_EQ(s.shape(), (Shape{3, 21, 21}));
  for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

TEST(CrossCorrelation, PlantedPatchIsGlobalMaximum) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_tensor(Shape{1, 12, 12}, rng, 0, 1);
    const std::size_t oy = rng.below(8), ox = rng.below(8);
    Tensord t(Shape{1, 5, 5});
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = 0; b < 5; ++b) t[a * 5 + b] = s[(oy + a) * 12 + ox + b];
    // Dividing by the search patch norm makes the planted offset the unique
    // maximum (Cauchy-Schwarz).
    auto y = model::cross_correlate(s, t);
    std::size_t best = 0;
    double best_score = -1;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double norm = 0;
        for (std::size_t a = 0; a < 5; ++a)
          for (std::size_t b = 0; b < 5; ++b) norm += s[(i + a) * 12 + j + b] * s[(i + a) * 12 + j + b];
        const double score = y[i * 8 + j] / std::sqrt(norm);
        if (score > best_score) best_score = score, best = i * 8 + j;
      }
    EXPECT_EQ(best, oy * 8 + ox);
  }
}

TEST(CrossCorrelation, MatchesNaiveLoops) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 1 + rng.below(4), Ht = 1 + rng.below(8), Wt = 1 + rng.below(8);
    const std::size_t Hs = Ht + rng.below(6), Ws = Wt + rng.below(6);
    auto s = random_tensor(Shape{C, Hs, Ws}, rng), t = random_tensor(Shape{C, Ht, Wt}, rng);
    EXPECT_LT(max_abs_diff(as_doubles(model::cross_correlate(s, t)), naive_xcorr(as_doubles(s), as_doubles(t), C, Hs, Ws, Ht, Wt)),
              1e-12);
  }
}

TEST(CrossCorrelation, ShapeErrors) {
  EXPECT_THROW(model::cross_correlate(Tensord(Shape{2, 5, 5}), Tensord(Shape{2, 6, 6})), ShapeError);
  EXPECT_THROW(model::cross_correlate(Tensord(Shape{2, 8, 8}), Tensord(Shape{3, 6, 6})), ShapeError);
}

TEST(SaliencyMiner, ZeroInputZeroOutputs) {
  Rng rng(4);
  model::SaliencyMiner<double> miner(6, 21, 21, rng);
  auto out = miner(Tensord(Shape{6, 21, 21}));
  EXPECT_EQ(out.s2.shape(), (Shape{6, 21, 21}));
  EXPECT_EQ(out.features.shape(), (Shape{6, 21, 21}));
  EXPECT_EQ(out.map.shape(), (Shape{1, 21, 21}));
  for (double v : out.features.data()) EXPECT_EQ(v, 0.0);
  for (double v : out.map.data()) EXPECT_EQ(v, 0.0);
}

TEST(SaliencyMiner, MapGradientWrtSimilarity) {
  Rng rng(5);
  model::SaliencyMiner<double> miner(4, 7, 7, rng);
  auto s1 = random_param(Shape{4, 7, 7}, rng);
  auto readout = random_tensor(Shape{1, 7, 7}, rng);
  auto r = grad_check([&] { return ops::sum(ops::mul(miner(s1).map, readout)); },
                      {s1, miner.mlp().fc1().weight(), miner.conv().weight(), miner.deconv().weight(),
                       miner.map_branch().weight()},
                      20);
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_GT(r.max_abs_grad, 0.0);
}

TEST(SaliencyMiner, RejectsWrongShape) {
  Rng rng(6);
  model::SaliencyMiner<double> miner(4, 7, 7, rng);
  EXPECT_THROW(miner(Tensord(Shape{4, 8, 8})), ShapeError);
}
