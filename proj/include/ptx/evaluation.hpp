#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ptx/grid.hpp"

namespace ptx {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  // Decision rule `score >= threshold`; +inf for the origin. NaN on averaged
  // curves, where thresholds from different folds are not comparable.
  double threshold = 0.0;
};

// Ordered from the strictest threshold (0,0) to the most lenient (1,1).
struct RocCurve {
  std::vector<RocPoint> points;
};

// Threshold sweep over the distinct scores; tied scores form one step.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

// Vertical averaging: mean TPR on a fixed FPR grid of `grid_points` points in
// [0,1], prefixed by the origin.
RocCurve average_curves(std::span<const RocCurve> curves, int grid_points = 1001);

// TPR at `fpr_target`, linearly interpolated between curve points. On a
// vertical segment the highest TPR reached at that FPR is returned.
double tpr_at_fpr(const RocCurve& curve, double fpr_target);

// Threshold of the point maximizing TPR - FPR (Youden's J); the first such
// point, i.e. the strictest threshold, wins ties.
double youden_threshold(const RocCurve& curve);

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const Mask& pred, const Mask& truth);

// Two-sided p-value for H0: AUC(a) == AUC(b) on the same cases, using the
// DeLong et al. covariance of the two correlated AUC estimates.
double paired_auc_test(std::span<const double> scores_a, std::span<const double> scores_b,
                       std::span<const int> labels);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

// Two-column `fpr,tpr` table with header.
void write_curve_csv(const std::filesystem::path& path, const RocCurve& curve);
RocCurve read_curve_csv(const std::filesystem::path& path);

}  // namespace ptx
