#pragma once

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ptx/evaluation.hpp"
#include "ptx/grid.hpp"
#include "ptx/models.hpp"
#include "ptx/preprocess.hpp"

namespace ptx {

// 8-bit BGR copy of a [0,1] image.
cv::Mat to_bgr(const Image& img);

// Stroke width for patch score p: 1 + round(p * (max_width - 1)).
int frame_width(double p, int max_width);
int default_frame_width(const Geometry& geo);  // bag_side / 80, at least 2

// The image resized to the bag frame with one rectangle per patch, drawn
// inside the patch border, thicker for higher scores; low scores are drawn
// first so strong patches stay on top.
cv::Mat render_mil(const Image& img, const BagScore& score, const Geometry& geo, int max_width = 0);

// Red heat blended over the gray input with alpha = probability; a zero map
// leaves the input unchanged.
cv::Mat render_fcn_overlay(const Image& input, const Image& prob_map);

void write_png(const std::filesystem::path& path, const cv::Mat& bgr);

// Static ROC figure; UsageError when `curves` is empty.
void write_roc_svg(const std::filesystem::path& path, const std::vector<std::pair<std::string, RocCurve>>& curves);

}  // namespace ptx
