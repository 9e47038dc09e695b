#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "oracles.hpp"
#include "ptx/evaluation.hpp"
#include "ptx/synthgen.hpp"
#include "tempdir.hpp"

using namespace ptx;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthSpec small_spec() {
  SynthSpec s;
  s.n_cases = 30;
  s.image_side = 128;
  return s;
}

}  // namespace

TEST(Synth, ByteIdenticalAcrossRuns) {
  oracle::TempDir a, b;
  const auto ra = generate(small_spec(), a.path());
  const auto rb = generate(small_spec(), b.path());
  ASSERT_EQ(ra.size(), rb.size());
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(slurp(ra[i].image_path), slurp(rb[i].image_path)) << ra[i].case_id();
    if (ra[i].mask_path) EXPECT_EQ(slurp(*ra[i].mask_path), slurp(*rb[i].mask_path));
  }
}

TEST(Synth, LabelsMatchMasksAndPatientsRepeat) {
  oracle::TempDir dir;
  const auto spec = small_spec();
  const auto recs = generate(spec, dir.path());
  ASSERT_EQ(recs.size(), 30u);
  int positives = 0;
  std::set<std::string> patients;
  for (const auto& r : recs) {
    patients.insert(r.patient_id);
    positives += r.label;
    ASSERT_TRUE(r.mask_path || r.label == 0);
    const Mask m = load_mask(r, spec.image_side, spec.image_side);
    std::size_t on = 0;
    for (auto v : m.values()) on += v != 0;
    if (r.label == 1) {
      EXPECT_GT(on, 0u) << r.case_id();
    } else {
      EXPECT_EQ(on, 0u) << r.case_id();
    }
  }
  EXPECT_EQ(positives, 15);
  EXPECT_LT(patients.size(), recs.size());
}

TEST(Synth, CrescentDarkerThanPairedNegative) {
  const auto spec = small_spec();
  for (std::size_t i = 0; i < 20; ++i) {
    const auto pos = render_case(spec, i, true);
    const auto neg = render_case(spec, i, false);
    double in_pos = 0.0, in_neg = 0.0;
    int n = 0;
    for (int r = 0; r < pos.mask.rows(); ++r) {
      for (int c = 0; c < pos.mask.cols(); ++c) {
        if (!pos.mask(r, c)) continue;
        in_pos += pos.image(r, c);
        in_neg += neg.image(r, c);
        ++n;
      }
    }
    ASSERT_GT(n, 0);
    EXPECT_LT(in_pos / n, in_neg / n) << "case " << i;
  }
}

TEST(Synth, MasksKeepBorderMargin) {
  SynthSpec spec;
  spec.n_cases = 200;
  spec.image_side = 96;
  spec.crescent_thickness = {0.3, 0.6};
  for (std::size_t i = 0; i < 200; ++i) {
    const auto c = render_case(spec, i, true);
    for (int r = 0; r < c.mask.rows(); ++r) {
      for (int col = 0; col < c.mask.cols(); ++col) {
        if (!c.mask(r, col)) continue;
        EXPECT_GE(std::min({r, col, c.mask.rows() - 1 - r, c.mask.cols() - 1 - col}), 2) << "case " << i;
      }
    }
  }
}

TEST(Synth, LinearQuadrantFeatureIsInformative) {
  SynthSpec spec;
  spec.image_side = 256;
  const auto labels = synth_labels(spec);
  auto region_mean = [](const Image& img, double r0, double r1, double c0, double c1) {
    const int h = img.rows(), w = img.cols();
    double sum = 0.0;
    int n = 0;
    for (int r = static_cast<int>(r0 * h); r < static_cast<int>(r1 * h); ++r) {
      for (int c = static_cast<int>(c0 * w); c < static_cast<int>(c1 * w); ++c) {
        sum += img(r, c);
        ++n;
      }
    }
    return sum / n;
  };
  // Score: darker lower-lateral quadrants of both lung fields.
  std::vector<double> score;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = render_case(spec, i, labels[i] == 1);
    score.push_back(-region_mean(c.image, 0.5, 0.8, 0.15, 0.3) - region_mean(c.image, 0.5, 0.8, 0.7, 0.85));
  }
  const double a = auc(roc_curve(score, labels));
  EXPECT_GT(a, 0.7) << "linear oracle AUC " << a;
  EXPECT_LT(a, 1.0);
}

TEST(Synth, SpecValidation) {
  SynthSpec s;
  s.image_side = 32;
  EXPECT_THROW(s.validate(), Error);
  s = SynthSpec{};
  s.positive_fraction = 1.5;
  EXPECT_THROW(s.validate(), Error);
}
