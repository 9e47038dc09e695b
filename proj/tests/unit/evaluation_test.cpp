#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ptx/evaluation.hpp"
#include "tempdir.hpp"

using namespace ptx;

namespace {

void expect_monotone(const RocCurve& c) {
  ASSERT_FALSE(c.points.empty());
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.front().tpr, 0.0);
  EXPECT_DOUBLE_EQ(c.points.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(c.points.back().tpr, 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
    EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
  }
}

}  // namespace

TEST(Roc, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<int> y{1, 0};
  const auto c = roc_curve(s, y);
  bool through = false;
  for (const auto& p : c.points) through |= p.fpr == 0.0 && p.tpr == 1.0;
  EXPECT_TRUE(through);
  EXPECT_EQ(auc(c), 1.0);
  const std::vector<double> inv{0.1, 0.9};
  EXPECT_EQ(auc(roc_curve(inv, y)), 0.0);
}

TEST(Roc, AllTiedIsDiagonal) {
  const std::vector<double> s(10, 0.3);
  const std::vector<int> y{1, 0, 1, 0, 0, 1, 1, 0, 0, 0};
  const auto c = roc_curve(s, y);
  EXPECT_EQ(c.points.size(), 2u);
  EXPECT_DOUBLE_EQ(auc(c), 0.5);
}

TEST(Roc, Errors) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> one_class{1, 1};
  EXPECT_THROW(roc_curve(s, one_class), Error);
  const std::vector<double> bad{0.1, NAN};
  const std::vector<int> y{1, 0};
  EXPECT_THROW(roc_curve(bad, y), Error);
}

TEST(Roc, PropertyAucEqualsPairCountOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 500)(rng);
    const auto y = oracle::random_labels(rng, n, std::uniform_real_distribution<double>(0.1, 0.9)(rng));
    const auto s = oracle::random_scores(rng, n, t % 2 == 0);
    const auto c = roc_curve(s, y);
    expect_monotone(c);
    EXPECT_NEAR(auc(c), oracle::pair_count_auc(s, y), 1e-12);
  }
}

TEST(Roc, PropertyMonotoneTransformInvariance) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const auto y = oracle::random_labels(rng, 80);
    const auto s = oracle::random_scores(rng, 80, t % 3 == 0);
    std::vector<double> e, a;
    for (double v : s) {
      e.push_back(std::exp(3.0 * v));
      a.push_back(2.5 * v - 7.0);
    }
    const double base = auc(roc_curve(s, y));
    EXPECT_NEAR(auc(roc_curve(e, y)), base, 1e-12);
    EXPECT_NEAR(auc(roc_curve(a, y)), base, 1e-12);
  }
}

TEST(AverageCurves, Examples) {
  std::mt19937_64 rng(3);
  const auto y = oracle::random_labels(rng, 60);
  const auto c = roc_curve(oracle::random_scores(rng, 60, false), y);
  const std::vector<RocCurve> one{c};
  const auto avg1 = average_curves(one);
  for (double f : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) EXPECT_NEAR(tpr_at_fpr(avg1, f), tpr_at_fpr(c, f), 1e-12);
  const std::vector<RocCurve> two{c, c};
  const auto avg2 = average_curves(two);
  ASSERT_EQ(avg2.points.size(), avg1.points.size());
  for (std::size_t i = 0; i < avg1.points.size(); ++i) EXPECT_EQ(avg2.points[i].tpr, avg1.points[i].tpr);

  RocCurve a{{{0, 0, INFINITY}, {0.5, 0.4, 0.5}, {1, 1, 0}}};
  RocCurve b{{{0, 0, INFINITY}, {0.5, 0.6, 0.5}, {1, 1, 0}}};
  const std::vector<RocCurve> ab{a, b};
  EXPECT_NEAR(tpr_at_fpr(average_curves(ab), 0.5), 0.5, 1e-12);
}

TEST(AverageCurves, PropertyMonotone) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<RocCurve> curves;
    for (int k = 0; k < 5; ++k) {
      const auto y = oracle::random_labels(rng, 40);
      curves.push_back(roc_curve(oracle::random_scores(rng, 40, k % 2 == 0), y));
    }
    const auto avg = average_curves(curves);
    expect_monotone(avg);
  }
}

TEST(TprAtFpr, Examples) {
  std::mt19937_64 rng(5);
  const auto y = oracle::random_labels(rng, 50);
  const auto c = roc_curve(oracle::random_scores(rng, 50, false), y);
  EXPECT_EQ(tpr_at_fpr(c, 1.0), 1.0);
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> yy{1, 1, 0, 0};
  EXPECT_EQ(tpr_at_fpr(roc_curve(s, yy), 0.0), 1.0);
  RocCurve stair{{{0, 0, INFINITY}, {0.0, 0.3, 0.9}, {0.01, 0.3, 0.8}, {0.01, 0.57, 0.7}, {0.5, 0.9, 0.2}, {1, 1, 0}}};
  EXPECT_NEAR(tpr_at_fpr(stair, 0.01), 0.57, 1e-12);
  EXPECT_NEAR(tpr_at_fpr(stair, 0.005), 0.3, 1e-12);
}

TEST(Youden, PicksMaximumSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  const std::vector<int> y{1, 1, 1, 0, 0, 0};
  EXPECT_EQ(youden_threshold(roc_curve(s, y)), 0.7);
}

TEST(Dice, Examples) {
  Mask a(10, 20), b(10, 20);
  for (int c = 0; c < 10; ++c) {
    for (int r = 0; r < 10; ++r) a(r, c) = 1;
  }
  EXPECT_EQ(dice(a, a), 1.0);
  for (int c = 10; c < 20; ++c) {
    for (int r = 0; r < 10; ++r) b(r, c) = 1;
  }
  EXPECT_EQ(dice(a, b), 0.0);
  Mask h(10, 20);
  for (int c = 5; c < 15; ++c) {
    for (int r = 0; r < 10; ++r) h(r, c) = 1;
  }
  EXPECT_EQ(dice(a, h), 0.5);
  EXPECT_EQ(dice(Mask(3, 3), Mask(3, 3)), 1.0);
  EXPECT_THROW(dice(Mask(3, 3), Mask(3, 4)), Error);
}

TEST(Dice, PropertyMatchesSetOracleAndSymmetric) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const int rows = std::uniform_int_distribution<int>(1, 30)(rng);
    const int cols = std::uniform_int_distribution<int>(1, 30)(rng);
    const double d = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
    const auto a = oracle::random_mask(rng, rows, cols, d);
    const auto b = oracle::random_mask(rng, rows, cols, d);
    EXPECT_EQ(dice(a, b), oracle::dice_sets(a, b));
    EXPECT_EQ(dice(a, b), dice(b, a));
  }
}

TEST(DeLong, IdenticalScoresGivePOne) {
  std::mt19937_64 rng(7);
  const auto y = oracle::random_labels(rng, 50);
  const auto s = oracle::random_scores(rng, 50, false);
  EXPECT_EQ(paired_auc_test(s, s, y), 1.0);
  const std::vector<double> tied(50, 0.5);
  EXPECT_EQ(paired_auc_test(tied, tied, y), 1.0);
}

TEST(DeLong, PerfectVersusRandomAgreesWithPermutationOracle) {
  std::mt19937_64 rng(8);
  const std::size_t n = 200;
  const auto y = oracle::random_labels(rng, n);
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = y[i] + 0.1 * std::uniform_real_distribution<double>(0, 1)(rng);
  const auto b = oracle::random_scores(rng, n, false);
  const double p = paired_auc_test(a, b, y);
  EXPECT_LT(p, 0.05);
  EXPECT_LT(oracle::permutation_p(a, b, y, 10000, 1), 0.05);
}

TEST(DeLong, MonotoneTransformInvariance) {
  std::mt19937_64 rng(9);
  const auto y = oracle::random_labels(rng, 80);
  std::vector<double> a(80), b(80), ea(80), lb(80);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 80; ++i) {
    a[i] = y[i] * 0.8 + g(rng);
    b[i] = y[i] * 0.5 + g(rng);
    ea[i] = std::exp(a[i]);
    lb[i] = 3.0 * b[i] + 1.0;
  }
  EXPECT_NEAR(paired_auc_test(a, b, y), paired_auc_test(ea, lb, y), 1e-12);
}

TEST(MeanStd, PopulationStd) {
  const std::vector<double> v{0.93, 0.96, 0.99, 0.95, 0.97};
  const auto ms = mean_std(v);
  EXPECT_NEAR(ms.mean, 0.96, 1e-12);
  double var = 0.0;
  for (double x : v) var += (x - 0.96) * (x - 0.96);
  EXPECT_NEAR(ms.std, std::sqrt(var / 5.0), 1e-12);
  EXPECT_GE(ms.mean, 0.93);
  EXPECT_LE(ms.mean, 0.99);
}

TEST(CurveCsv, RoundTrip) {
  oracle::TempDir dir;
  std::mt19937_64 rng(10);
  const auto y = oracle::random_labels(rng, 30);
  const auto c = roc_curve(oracle::random_scores(rng, 30, false), y);
  write_curve_csv(dir / "c.csv", c);
  const auto back = read_curve_csv(dir / "c.csv");
  ASSERT_EQ(back.points.size(), c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.points[i].fpr, c.points[i].fpr);
    EXPECT_DOUBLE_EQ(back.points[i].tpr, c.points[i].tpr);
  }
}
