#include "ptx/raster_io.hpp"

#include <cmath>
#include <opencv2/imgcodecs.hpp>

namespace ptx {

void save_image_png(const std::filesystem::path& path, const Image& img) {
  cv::Mat mat(img.rows(), img.cols(), CV_16UC1);
  for (int r = 0; r < img.rows(); ++r) {
    auto* dst = mat.ptr<std::uint16_t>(r);
    const auto src = img.row(r);
    for (int c = 0; c < img.cols(); ++c) {
      dst[c] = static_cast<std::uint16_t>(std::lround(std::clamp(src[c], 0.0f, 1.0f) * 65535.0f));
    }
  }
  if (!cv::imwrite(path.string(), mat)) throw Error("cannot write image: " + path.string());
}

void save_mask_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat mat(mask.rows(), mask.cols(), CV_8UC1);
  for (int r = 0; r < mask.rows(); ++r) {
    auto* dst = mat.ptr<std::uint8_t>(r);
    const auto src = mask.row(r);
    for (int c = 0; c < mask.cols(); ++c) dst[c] = src[c] ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), mat)) throw Error("cannot write mask: " + path.string());
}

}  // namespace ptx
