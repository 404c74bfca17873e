#include <gtest/gtest.h>

#include <map>
#include <set>

#include "gradcheck.hpp"
#include "sgdvit/model/sgdvit.hpp"
#include "sgdvit/track/loss.hpp"

using namespace sgdvit;
using sgdvit::testing::grad_check_block;
using sgdvit::testing::random_tensor;

namespace {

template <class T>
Tensor<T> random_crop(std::size_t S, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(3 * S * S);
  for (auto& x : v) x = T(rng.uniform(-1.5, 1.5));
  return Tensor<T>(Shape{3, S, S}, std::move(v));
}

template <class T>
model::ModelOutput<T> run(const model::SgdVit<T>& net, std::uint64_t seed = 1, model::ForwardOptions opt = {}) {
  const auto templ = net.encode_template(random_crop<T>(127, seed));
  return net.forward_search(templ, random_crop<T>(287, seed + 100), opt);
}

std::map<std::string, Shape> shapes(const ParamSet<float>& p) {
  std::map<std::string, Shape> m;
  for (const auto& e : p.entries()) m.emplace(e.name, e.tensor.shape());
  return m;
}

bool any_name_contains(const ParamSet<float>& p, const std::string& s) {
  for (const auto& e : p.entries())
    if (e.name.find(s) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Model, HeadShapesForEveryVariant) {
  for (auto v : {Variant::Baseline, Variant::Sit, Variant::Sat, Variant::SatDyn}) {
    model::SgdVit<float> net(ModelConfig::tiny(v));
    const auto out = run(net);
    EXPECT_EQ(out.heads.cls.shape(), (Shape{1, 16, 16})) << variant_name(v);
    EXPECT_EQ(out.heads.reg.shape(), (Shape{4, 16, 16})) << variant_name(v);
    for (float r : out.heads.reg.data()) ASSERT_GE(r, 0.0f);
  }
}

TEST(Model, RegNonnegativeForLargeInputs) {
  model::SgdVit<float> net(ModelConfig::tiny(Variant::SatDyn));
  const auto templ = net.encode_template(random_crop<float>(127, 3));
  auto crop = random_crop<float>(287, 4);
  for (auto& x : crop.data()) x *= 50;
  const auto out = net.forward_search(templ, crop);
  for (float r : out.heads.reg.data()) ASSERT_GE(r, 0.0f);
}

TEST(Model, BaselineHasNoAttention) {
  model::SgdVit<float> net(ModelConfig::tiny(Variant::Baseline));
  EXPECT_FALSE(any_name_contains(net.params(), "mha"));
  const auto out = run(net);
  EXPECT_EQ(out.total_flops.get("attn_qk"), 0u);
  EXPECT_EQ(out.total_flops.get("attn_av"), 0u);
  EXPECT_EQ(out.n_tokens, 0u);
}

TEST(Model, SatEncoderHasNoFeedForward) {
  model::SgdVit<float> net(ModelConfig::tiny(Variant::Sat));
  for (const auto& e : net.params().entries()) {
    if (e.name.rfind("sft.encoder", 0) == 0) {
      EXPECT_EQ(e.name.find("ffn"), std::string::npos) << e.name;
    }
  }
  EXPECT_TRUE(any_name_contains(net.params(), "sft.decoder.ffn"));
}

TEST(Model, SitEncoderKeepsFeedForward) {
  model::SgdVit<float> net(ModelConfig::tiny(Variant::Sit));
  EXPECT_TRUE(any_name_contains(net.params(), "sit.encoder.ffn"));
  EXPECT_FALSE(any_name_contains(net.params(), "mining"));
}

TEST(Model, SatAndSatDynShareParameterShapes) {
  model::SgdVit<float> a(ModelConfig::tiny(Variant::Sat)), b(ModelConfig::tiny(Variant::SatDyn));
  EXPECT_EQ(shapes(a.params()), shapes(b.params()));
}

TEST(Model, TokenCountsPerVariant) {
  const ModelConfig sat = ModelConfig::tiny(Variant::Sat);
  model::SgdVit<float> a(sat), b(ModelConfig::tiny(Variant::SatDyn));
  EXPECT_EQ(run(a).n_tokens, sat.window_count());
  for (std::size_t k : {0u, 3u, 16u}) {
    model::ForwardOptions opt;
    opt.forced_fine = k;
    const auto out = run(b, 1, opt);
    EXPECT_EQ(out.n_tokens, sat.window_count() + 3 * k);
    EXPECT_EQ(out.k_fine, k);
  }
  const auto dyn = run(b, 5);
  EXPECT_EQ(dyn.n_tokens, 16 + 3 * dyn.k_fine);
}

TEST(Model, AllFineDynamicMatchesForcedSat) {
  model::SgdVit<float> sat(ModelConfig::tiny(Variant::Sat)), dyn(ModelConfig::tiny(Variant::SatDyn));
  model::ForwardOptions opt;
  opt.forced_fine = 16;
  const auto a = run(sat, 2, opt), b = run(dyn, 2, opt);
  ASSERT_EQ(a.origins.size(), b.origins.size());
  for (std::size_t i = 0; i < a.origins.size(); ++i) {
    EXPECT_EQ(a.origins[i].window_row, b.origins[i].window_row);
    EXPECT_EQ(a.origins[i].window_col, b.origins[i].window_col);
    EXPECT_EQ(a.origins[i].level, b.origins[i].level);
    EXPECT_EQ(a.origins[i].sub, b.origins[i].sub);
  }
  // identical seeds give identical weights, so the outputs agree too
  for (std::size_t i = 0; i < a.heads.cls.numel(); ++i) EXPECT_EQ(a.heads.cls[i], b.heads.cls[i]);
}

TEST(Model, EncoderQkCostLinearInTokens) {
  model::SgdVit<float> net(ModelConfig::tiny(Variant::SatDyn));
  model::ForwardOptions lo, hi;
  lo.forced_fine = 0;
  hi.forced_fine = 16;
  const double q0 = double(run(net, 1, lo).encoder_flops.get("attn_qk"));
  const double q1 = double(run(net, 1, hi).encoder_flops.get("attn_qk"));
  EXPECT_DOUBLE_EQ(q0 / q1, 16.0 / 64.0);
}

TEST(Model, DeterministicForSameSeed) {
  model::SgdVit<float> a(ModelConfig::tiny()), b(ModelConfig::tiny());
  const auto x = run(a, 9), y = run(b, 9);
  for (std::size_t i = 0; i < x.heads.cls.numel(); ++i) ASSERT_EQ(x.heads.cls[i], y.heads.cls[i]);
  for (std::size_t i = 0; i < x.heads.reg.numel(); ++i) ASSERT_EQ(x.heads.reg[i], y.heads.reg[i]);
}

TEST(Model, GridFrameCentersOnCrop) {
  model::SgdVit<float> net(ModelConfig::tiny());
  const auto g = net.grid_frame();
  EXPECT_NEAR(g.to_crop(7.5), 143.5, 1e-9);
  EXPECT_NEAR(g.to_grid(g.to_crop(3.25)), 3.25, 1e-12);
}

TEST(Model, WrongCropSizeRejected) {
  model::SgdVit<float> net(ModelConfig::tiny());
  EXPECT_THROW(net.encode_template(random_crop<float>(120, 1)), ShapeError);
  const auto t = net.encode_template(random_crop<float>(127, 1));
  EXPECT_THROW(net.forward_search(t, random_crop<float>(255, 1)), ShapeError);
}

// Full path backbone -> mining -> embedding -> transformer -> heads -> loss.
// Gate passthrough is disabled so the derivative is the true one; masks are
// piecewise constant in the inputs and stay fixed under the perturbation.
TEST(Model, FullPathGradients) {
  for (auto v : {Variant::SatDyn}) {
    auto cfg = ModelConfig::tiny(v);
    cfg.straight_through = false;
    model::SgdVit<double> net(cfg);
    const auto tcrop = random_crop<double>(127, 11), scrop = random_crop<double>(287, 12);
    const track::GridBox box{7.2, 8.1, 5.5, 4.5};
    auto loss = [&] {
      const auto templ = net.encode_template(tcrop);
      model::ForwardOptions opt;
      opt.gumbel_seed = 5;
      return track::toy_loss(net.forward_search(templ, scrop, opt).heads, box).total;
    };
    // group the parameters by module; >= 20 coordinates per module
    std::map<std::string, std::vector<Tensor<double>>> blocks;
    for (const auto& e : net.params().entries()) {
      auto name = e.name.substr(0, e.name.find('.'));
      if (name == "sft" || name == "sit") name = e.name.substr(0, e.name.find('.', name.size() + 1));
      blocks[name].push_back(e.tensor);
    }
    for (auto& [name, tensors] : blocks) {
      const auto r = grad_check_block(loss, tensors, 20, 3);
      EXPECT_GE(r.checked, 20u) << variant_name(v) << " " << name;
      EXPECT_LT(r.max_rel_error, 1e-4) << variant_name(v) << " " << name;
    }
  }
}
