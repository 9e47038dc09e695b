#include "ptx/render.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ptx/error.hpp"

namespace ptx {

namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

cv::Mat to_bgr(const Image& img) {
  cv::Mat out(img.rows(), img.cols(), CV_8UC3);
  for (int r = 0; r < img.rows(); ++r) {
    auto* row = out.ptr<cv::Vec3b>(r);
    for (int c = 0; c < img.cols(); ++c) {
      const auto g = to_u8(img(r, c));
      row[c] = {g, g, g};
    }
  }
  return out;
}

int frame_width(double p, int max_width) {
  if (max_width < 1) throw UsageError("frame width must be at least 1");
  return 1 + static_cast<int>(std::lround(std::clamp(p, 0.0, 1.0) * (max_width - 1)));
}

int default_frame_width(const Geometry& geo) { return std::max(2, geo.bag_side / 80); }

cv::Mat render_mil(const Image& img, const BagScore& score, const Geometry& geo, int max_width) {
  const auto origins = bag_origins(geo);
  if (score.patch_scores.size() != origins.size()) {
    throw Error("render_mil: " + std::to_string(score.patch_scores.size()) + " scores for " +
                std::to_string(origins.size()) + " patches");
  }
  if (max_width <= 0) max_width = default_frame_width(geo);
  cv::Mat out = to_bgr(resize_bilinear(img, geo.bag_side, geo.bag_side));
  std::vector<std::size_t> order(origins.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score.patch_scores[a] < score.patch_scores[b]; });
  for (std::size_t i : order) {
    const int w = frame_width(score.patch_scores[i], max_width);
    const double p = std::clamp(score.patch_scores[i], 0.0, 1.0);
    // Yellow for weak patches shading to red for strong ones.
    const cv::Scalar color(0, 255.0 * (1.0 - p), 255);
    const int r0 = origins[i].row;
    const int c0 = origins[i].col;
    const int side = geo.crop_side;
    cv::rectangle(out, cv::Rect(c0, r0, side, w), color, cv::FILLED);
    cv::rectangle(out, cv::Rect(c0, r0 + side - w, side, w), color, cv::FILLED);
    cv::rectangle(out, cv::Rect(c0, r0, w, side), color, cv::FILLED);
    cv::rectangle(out, cv::Rect(c0 + side - w, r0, w, side), color, cv::FILLED);
  }
  return out;
}

cv::Mat render_fcn_overlay(const Image& input, const Image& prob_map) {
  if (!input.same_shape(prob_map)) throw Error("render_fcn_overlay: image and map shapes differ");
  cv::Mat out(input.rows(), input.cols(), CV_8UC3);
  for (int r = 0; r < input.rows(); ++r) {
    auto* row = out.ptr<cv::Vec3b>(r);
    for (int c = 0; c < input.cols(); ++c) {
      const double g = std::clamp(static_cast<double>(input(r, c)), 0.0, 1.0);
      const double a = std::clamp(static_cast<double>(prob_map(r, c)), 0.0, 1.0);
      if (a == 0.0) {
        const auto v = to_u8(g);
        row[c] = {v, v, v};
        continue;
      }
      row[c] = {to_u8((1.0 - a) * g), to_u8((1.0 - a) * g), to_u8((1.0 - a) * g + a)};
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const cv::Mat& bgr) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image: " + path.string());
}

void write_roc_svg(const std::filesystem::path& path, const std::vector<std::pair<std::string, RocCurve>>& curves) {
  if (curves.empty()) throw UsageError("plot-roc: no curves given");
  constexpr int kSize = 400;
  constexpr int kPad = 50;
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  auto x = [](double fpr) { return kPad + fpr * kSize; };
  auto y = [](double tpr) { return kPad + (1.0 - tpr) * kSize; };

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write figure: " + path.string());
  const int total = kSize + 2 * kPad;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total + 120 << "\" height=\"" << total
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"white\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << x(0) << "\" y1=\"" << y(0) << "\" x2=\"" << x(1) << "\" y2=\"" << y(1)
      << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out << "<text x=\"" << x(v) << "\" y=\"" << kPad + kSize + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
    out << "<text x=\"" << kPad - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  out << "<text x=\"" << kPad + kSize / 2 << "\" y=\"" << total - 8 << "\" text-anchor=\"middle\">False positive rate</text>\n";
  out << "<text x=\"14\" y=\"" << kPad + kSize / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << kPad + kSize / 2 << ")\">True positive rate</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& [name, curve] = curves[i];
    const char* color = kColors[i % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : curve.points) out << x(p.fpr) << ',' << y(p.tpr) << ' ';
    out << "\"/>\n";
    const int ly = kPad + 16 + static_cast<int>(i) * 18;
    out << "<line x1=\"" << kPad + kSize + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kPad + kSize + 30 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kPad + kSize + 36 << "\" y=\"" << ly << "\">" << xml_escape(name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ptx
