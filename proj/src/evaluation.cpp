#include "ptx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ptx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw Error("scores must be finite");
    pos += labels[i];
  }
  if (pos == 0 || pos == labels.size()) {
    throw Error("ROC analysis needs at least one positive and one negative case");
  }
}

// 1-based midranks (ties share the average rank).
std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

// DeLong structural components of one modality.
struct Components {
  std::vector<double> v10;  // per positive
  std::vector<double> v01;  // per negative
  double auc = 0.0;
};

Components structural_components(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  const double m = static_cast<double>(pos.size());
  const double n = static_cast<double>(neg.size());
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  const auto tz = midranks(all);
  const auto tx = midranks(pos);
  const auto ty = midranks(neg);
  Components c;
  c.v10.resize(pos.size());
  c.v01.resize(neg.size());
  for (std::size_t i = 0; i < pos.size(); ++i) c.v10[i] = (tz[i] - tx[i]) / n;
  for (std::size_t j = 0; j < neg.size(); ++j) c.v01[j] = 1.0 - (tz[pos.size() + j] - ty[j]) / m;
  c.auc = std::accumulate(c.v10.begin(), c.v10.end(), 0.0) / m;
  return c;
}

double covariance(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (n - 1.0);
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(n) - positives;
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, kInf});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    const double threshold = scores[order[i]];
    while (i < n && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives, threshold});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double tpr_at_fpr(const RocCurve& curve, double fpr_target) {
  if (curve.points.empty()) throw Error("empty ROC curve");
  if (!(fpr_target >= 0.0 && fpr_target <= 1.0)) throw Error("FPR target outside [0,1]");
  constexpr double kTol = 1e-12;
  const auto& pts = curve.points;
  // Last point at or before the target; tpr is nondecreasing so the last
  // point on a vertical segment carries its highest TPR.
  std::size_t last_le = 0;
  bool found = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].fpr <= fpr_target + kTol) {
      last_le = i;
      found = true;
    } else {
      break;
    }
  }
  if (!found) return 0.0;
  const auto& a = pts[last_le];
  if (std::abs(a.fpr - fpr_target) <= kTol || last_le + 1 == pts.size()) return a.tpr;
  const auto& b = pts[last_le + 1];
  const double t = (fpr_target - a.fpr) / (b.fpr - a.fpr);
  return a.tpr + t * (b.tpr - a.tpr);
}

RocCurve average_curves(std::span<const RocCurve> curves, int grid_points) {
  if (curves.empty()) throw Error("average_curves needs at least one curve");
  if (grid_points < 2) throw Error("average_curves needs at least two grid points");
  RocCurve out;
  out.points.push_back({0.0, 0.0, kInf});
  for (int g = 0; g < grid_points; ++g) {
    const double fpr = static_cast<double>(g) / (grid_points - 1);
    double tpr = 0.0;
    for (const auto& c : curves) tpr += tpr_at_fpr(c, fpr);
    out.points.push_back({fpr, tpr / static_cast<double>(curves.size()), kNaN});
  }
  return out;
}

double youden_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw Error("empty ROC curve");
  double best_j = -kInf;
  double threshold = kInf;
  for (const auto& p : curve.points) {
    const double j = p.tpr - p.fpr;
    if (j > best_j) {
      best_j = j;
      threshold = p.threshold;
    }
  }
  return threshold;
}

double dice(const Mask& pred, const Mask& truth) {
  if (!pred.same_shape(truth)) throw Error("dice: mask shapes differ");
  std::size_t a = 0, b = 0, both = 0;
  const auto p = pred.values();
  const auto t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool x = p[i] != 0;
    const bool y = t[i] != 0;
    a += x;
    b += y;
    both += x && y;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double paired_auc_test(std::span<const double> scores_a, std::span<const double> scores_b,
                       std::span<const int> labels) {
  if (scores_a.size() != scores_b.size()) throw Error("paired test needs scores for the same cases");
  check_inputs(scores_a, labels);
  check_inputs(scores_b, labels);
  const auto a = structural_components(scores_a, labels);
  const auto b = structural_components(scores_b, labels);
  if (a.v10.size() < 2 || a.v01.size() < 2) {
    throw Error("paired test needs at least two positive and two negative cases");
  }
  const double diff = a.auc - b.auc;
  if (diff == 0.0) return 1.0;
  const double m = static_cast<double>(a.v10.size());
  const double n = static_cast<double>(a.v01.size());
  const double var10 = covariance(a.v10, a.v10) + covariance(b.v10, b.v10) - 2.0 * covariance(a.v10, b.v10);
  const double var01 = covariance(a.v01, a.v01) + covariance(b.v01, b.v01) - 2.0 * covariance(a.v01, b.v01);
  const double var = var10 / m + var01 / n;
  if (!(var > 1e-300)) return std::abs(diff) < 1e-12 ? 1.0 : 0.0;
  const double z = diff / std::sqrt(var);
  return std::erfc(std::abs(z) / std::numbers::sqrt2);
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw Error("mean_std of an empty sequence");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

void write_curve_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write curve: " + path.string());
  out.precision(17);
  out << "fpr,tpr\n";
  for (const auto& p : curve.points) out << p.fpr << ',' << p.tpr << '\n';
}

RocCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("curve table not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("fpr,tpr", 0) != 0) throw Error("curve table lacks an fpr,tpr header: " + path.string());
  RocCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    RocPoint p;
    char comma = 0;
    if (!(row >> p.fpr >> comma >> p.tpr) || comma != ',') throw Error("malformed curve row: " + line);
    p.threshold = kNaN;
    curve.points.push_back(p);
  }
  if (curve.points.empty()) throw Error("curve table is empty: " + path.string());
  return curve;
}

}  // namespace ptx
