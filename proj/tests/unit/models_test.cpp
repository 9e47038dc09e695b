#include <gtest/gtest.h>

#include "calibrate.hpp"
#include "gradcheck.hpp"
#include "ptx/checkpoint.hpp"
#include "ptx/models.hpp"
#include "tempdir.hpp"

using namespace ptx;

namespace {

double checksum(torch::nn::Module& m, const std::string& skip_prefix) {
  double s = 0.0;
  for (const auto& p : m.named_parameters()) {
    if (p.key().rfind(skip_prefix, 0) == 0) continue;
    s += p.value().to(torch::kDouble).sum().item<double>() + p.value().abs().to(torch::kDouble).sum().item<double>();
  }
  return s;
}

}  // namespace

TEST(Cnn, ParameterBudget) {
  auto m = build_cnn({});
  const auto n = count_parameters(*m);
  EXPECT_GT(n, 0.9 * 24e6);
  EXPECT_LT(n, 1.1 * 24e6);
}

TEST(Cnn, FeatureSidesAt448) {
  auto m = build_cnn({});
  const std::vector<int64_t> expected{224, 112, 112, 56, 56, 28, 14, 7};
  EXPECT_EQ(m->feature_sides(448), expected);
}

TEST(Cnn, ExtraPoolPlacementIsConfigurable) {
  CnnConfig c;
  c.input_size = 128;
  c.extra_pool = ExtraPool::kAfterStage1;
  auto after_stage = build_cnn(c);
  EXPECT_EQ(after_stage->feature_sides(128), (std::vector<int64_t>{64, 32, 32, 32, 16, 8, 4, 2}));
  c.extra_pool = ExtraPool::kNone;
  auto none = build_cnn(c);
  EXPECT_EQ(none->feature_sides(128), (std::vector<int64_t>{64, 32, 32, 32, 16, 8, 4}));
  c.input_size = 100;
  EXPECT_THROW(build_cnn(c), UsageError);
}

TEST(Cnn, ForwardShapeAndRange) {
  CnnConfig c;
  c.input_size = 64;
  auto m = build_cnn(c);
  oracle::calibrate_batch_norm(m, torch::rand({16, 1, 64, 64}));
  torch::NoGradGuard g;
  const auto p = torch::sigmoid(m->forward(torch::rand({16, 1, 64, 64})));
  EXPECT_EQ(p.sizes(), (std::vector<int64_t>{16, 1}));
  EXPECT_TRUE((p > 0).all().item<bool>());
  EXPECT_TRUE((p < 1).all().item<bool>());
}

TEST(Cnn, ReplaceHeadKeepsBackbone) {
  CnnConfig c;
  c.input_size = 64;
  c.out_classes = 14;
  auto m = build_cnn(c);
  m->eval();
  const auto x = torch::rand({2, 1, 64, 64});
  torch::Tensor before;
  {
    torch::NoGradGuard g;
    before = m->features(x);
  }
  const double sum_before = checksum(*m, "head.");
  std::vector<torch::Tensor> backbone_before;
  for (const auto& p : m->named_parameters()) {
    if (p.key().rfind("head.", 0) != 0) backbone_before.push_back(p.value().clone());
  }
  replace_head(m, 1);
  EXPECT_EQ(m->forward(x).size(1), 1);
  std::size_t i = 0;
  for (const auto& p : m->named_parameters()) {
    if (p.key().rfind("head.", 0) == 0) continue;
    EXPECT_TRUE(torch::equal(p.value(), backbone_before[i++])) << p.key();
  }
  EXPECT_EQ(checksum(*m, "head."), sum_before);
  torch::NoGradGuard g;
  EXPECT_TRUE(torch::equal(m->features(x), before));
  const auto n1 = count_parameters(*m);
  replace_head(m, 1);
  EXPECT_EQ(count_parameters(*m), n1);
}

TEST(Cnn, PretrainedThreeChannelStemIsSummed) {
  oracle::TempDir dir;
  CnnConfig rgb;
  rgb.input_size = 64;
  rgb.in_channels = 3;
  rgb.out_classes = 14;
  auto src = build_cnn(rgb);
  oracle::calibrate_batch_norm(src, torch::rand({8, 3, 64, 64}));
  save_checkpoint(dir / "rgb.ckpt", src);
  CnnConfig gray;
  gray.input_size = 64;
  gray.pretrained = dir / "rgb.ckpt";
  auto m = build_cnn(gray);
  const auto src_params = src->named_parameters();
  const auto dst_params = m->named_parameters();
  EXPECT_TRUE(torch::allclose(dst_params["stem_conv.weight"], src_params["stem_conv.weight"].sum(1, true)));
  // Grayscale replicated over three channels responds identically.
  src->eval();
  m->eval();
  torch::NoGradGuard g;
  const auto x = torch::rand({1, 1, 64, 64});
  src->to(torch::kDouble);
  m->to(torch::kDouble);
  const auto xd = x.to(torch::kDouble);
  // The summed stem is rounded to float, so compare relative to the feature norm.
  const auto fa = src->features(xd.repeat({1, 3, 1, 1}));
  const auto fb = m->features(xd);
  EXPECT_LT(((fa - fb).norm() / fa.norm()).item<double>(), 1e-5);
  EXPECT_EQ(m->forward(xd).size(1), 1);

  CnnConfig two;
  two.input_size = 64;
  two.in_channels = 2;
  two.pretrained = dir / "rgb.ckpt";
  EXPECT_THROW(build_cnn(two), Error);
}

TEST(Checkpoint, RoundTripAndCnnLoadsAsMil) {
  oracle::TempDir dir;
  CnnConfig c;
  c.input_size = 64;
  auto m = build_cnn(c);
  save_checkpoint(dir / "cnn.ckpt", m, {{"epoch", 3}});
  auto back = load_cnn(dir / "cnn.ckpt");
  EXPECT_EQ(back->config().input_size, 64);
  for (const auto& p : m->named_parameters()) {
    EXPECT_TRUE(torch::equal(p.value(), back->named_parameters()[p.key()]));
  }
  for (const auto& b : m->named_buffers()) EXPECT_TRUE(torch::equal(b.value(), back->named_buffers()[b.key()]));
  EXPECT_EQ(read_checkpoint(dir / "cnn.ckpt").meta["epoch"], 3);
  EXPECT_THROW(load_fcn(dir / "cnn.ckpt"), Error);
  EXPECT_THROW(read_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(Mil, MaxSemantics) {
  const auto s = bag_from_patch_scores({0.1, 0.7, 0.3, 0.2});
  EXPECT_EQ(s.bag_score, 0.7);
  EXPECT_EQ(s.argmax, 1u);
}

TEST(Mil, IdenticalPatchesAndSizeMismatch) {
  CnnConfig c;
  c.input_size = 64;
  auto m = build_cnn(c);
  PatchBag bag;
  for (int i = 0; i < 16; ++i) bag.patches.push_back(Image(64, 64, 0.3f));
  const auto s = mil_forward(m, bag);
  for (double p : s.patch_scores) EXPECT_NEAR(p, s.patch_scores[0], 1e-6);
  EXPECT_EQ(s.bag_score, *std::max_element(s.patch_scores.begin(), s.patch_scores.end()));
  bag.patches[3] = Image(32, 32);
  EXPECT_THROW(mil_forward(m, bag), Error);
}

TEST(Mil, GradientOnlyThroughArgmaxPatch) {
  CnnConfig c;
  c.input_size = 64;
  auto m = build_cnn(c);
  torch::manual_seed(3);
  oracle::calibrate_batch_norm(m, torch::rand({16, 1, 64, 64}));
  m->to(torch::kDouble);
  auto patches = torch::rand({16, 1, 64, 64}, torch::kDouble).requires_grad_(true);
  const auto loss_of = [&](const torch::Tensor& x) {
    const auto p = mil_bag_probability(m, x).clamp(1e-7, 1 - 1e-7);
    return -torch::log(p);
  };
  const auto loss = loss_of(patches);
  loss.backward();
  const auto probs = torch::sigmoid(m->forward(patches.detach())).view({-1});
  const int64_t arg = probs.argmax().item<int64_t>();
  const auto g = patches.grad();
  for (int64_t i = 0; i < 16; ++i) {
    if (i == arg) {
      EXPECT_GT(g[i].abs().max().item<double>(), 0.0);
    } else {
      EXPECT_EQ(g[i].abs().max().item<double>(), 0.0);
    }
  }
  // Central differences on a non-argmax patch.
  torch::NoGradGuard ng;
  const int64_t other = (arg + 1) % 16;
  auto x = patches.detach().clone();
  for (int t = 0; t < 5; ++t) {
    const int64_t r = 7 * t + 3, col = 11 * t + 5;
    const double orig = x[other][0][r][col].item<double>();
    x[other][0][r][col] = orig + 1e-4;
    const double up = loss_of(x).item<double>();
    x[other][0][r][col] = orig - 1e-4;
    const double down = loss_of(x).item<double>();
    x[other][0][r][col] = orig;
    EXPECT_EQ((up - down) / 2e-4, 0.0);
  }
}

TEST(Fcn, ParameterBudgetAndShapes) {
  auto m = build_fcn({});
  const auto n = count_parameters(*m);
  EXPECT_GT(n, 0.85 * 2.1e6);
  EXPECT_LT(n, 1.15 * 2.1e6);
  EXPECT_EQ(m->bottleneck_side(448), 28);
  m->eval();
  torch::NoGradGuard g;
  const auto out = m->forward(torch::rand({1, 1, 448, 448}));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{1, 1, 448, 448}));
  EXPECT_TRUE((out > 0).all().item<bool>());
  EXPECT_TRUE((out < 1).all().item<bool>());
  EXPECT_THROW(m->forward(torch::rand({1, 1, 100, 100})), Error);
}

TEST(Fcn, ConstantInputGivesFiniteProbabilities) {
  auto m = build_fcn({});
  m->eval();
  torch::NoGradGuard g;
  for (float v : {0.0f, 1.0f}) {
    const auto out = m->forward(torch::full({1, 1, 64, 64}, v));
    EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
    EXPECT_TRUE((out >= 0).all().item<bool>());
    EXPECT_TRUE((out <= 1).all().item<bool>());
  }
}

TEST(CountParameters, SingleConv) {
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(1, 8, 3).bias(true));
  EXPECT_EQ(count_parameters(*conv), 80);
}

TEST(InstanceNorm, MomentsAndDegenerate) {
  torch::manual_seed(1);
  const auto x = torch::randn({3, 4, 9, 7}) * 5 + 2;
  const auto y = instance_norm(x);
  EXPECT_LT(y.mean({2, 3}).abs().max().item<double>(), 1e-5);
  EXPECT_LT((y.var({2, 3}, false) - 1).abs().max().item<double>(), 1e-3);
  const auto c = instance_norm(torch::full({1, 2, 5, 5}, 3.0));
  EXPECT_EQ(c.abs().max().item<double>(), 0.0);
  EXPECT_THROW(instance_norm(torch::rand({1, 1, 1, 1})), Error);
}

TEST(InstanceNorm, SamplesNormalizedIndependently) {
  torch::manual_seed(2);
  const auto x = torch::randn({5, 3, 6, 6});
  const auto perm = torch::tensor({3, 0, 4, 1, 2}, torch::kLong);
  EXPECT_TRUE(torch::allclose(instance_norm(x.index_select(0, perm)), instance_norm(x).index_select(0, perm)));
}

TEST(InstanceNorm, GradientMatchesFiniteDifferences) {
  torch::manual_seed(4);
  const auto w = torch::randn({2, 3, 4, 5}, torch::kDouble);
  const auto rep = oracle::gradcheck([&](const auto& in) { return (instance_norm(in[0]) * w).sum(); },
                                     {torch::randn({2, 3, 4, 5}, torch::kDouble)});
  EXPECT_LT(rep.max_relative_error, 1e-3);
  EXPECT_GT(rep.max_abs_numeric, 0.0);
}

TEST(AttentionGate, IdentityWhenCoefficientsForcedToOne) {
  AttentionGate gate(8, 16, 4);
  {
    torch::NoGradGuard g;
    gate->psi->weight.zero_();
    gate->psi->bias.fill_(100.0);
  }
  const auto skip = torch::randn({2, 8, 12, 12});
  const auto gating = torch::randn({2, 16, 6, 6});
  EXPECT_TRUE(torch::equal(gate->forward(skip, gating), skip));
}

TEST(AttentionGate, RangeBoundAndErrors) {
  torch::manual_seed(5);
  AttentionGate gate(8, 16, 4);
  for (int t = 0; t < 20; ++t) {
    const auto skip = torch::randn({1, 8, 10, 10}) * (t + 1);
    const auto gating = torch::randn({1, 16, 5, 5}) * (t + 1);
    const auto a = gate->coefficients(skip, gating);
    EXPECT_EQ(a.sizes(), (std::vector<int64_t>{1, 1, 10, 10}));
    EXPECT_TRUE((a >= 0).all().item<bool>());
    EXPECT_TRUE((a <= 1).all().item<bool>());
    EXPECT_LE(gate->forward(skip, gating).abs().max().item<double>(), skip.abs().max().item<double>());
  }
  EXPECT_THROW(gate->forward(torch::randn({1, 7, 10, 10}), torch::randn({1, 16, 5, 5})), Error);
  EXPECT_THROW(gate->forward(torch::randn({1, 8, 10, 10}), torch::randn({1, 16, 4, 4})), Error);
}

TEST(AttentionGate, GradientMatchesFiniteDifferences) {
  torch::manual_seed(6);
  AttentionGate gate(4, 6, 2);
  gate->to(torch::kDouble);
  const auto w = torch::randn({1, 4, 6, 6}, torch::kDouble);
  const auto skip = torch::randn({1, 4, 6, 6}, torch::kDouble);
  const auto gating = torch::randn({1, 6, 3, 3}, torch::kDouble);
  const auto rep = oracle::gradcheck([&](const auto& in) { return (gate->forward(in[0], in[1]) * w).sum(); },
                                     {skip, gating});
  EXPECT_LT(rep.max_relative_error, 1e-3);
  const auto prep = oracle::gradcheck_parameters(*gate, [&] { return (gate->forward(skip, gating) * w).sum(); });
  EXPECT_LT(prep.max_relative_error, 1e-3);
}
