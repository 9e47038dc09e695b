#pragma once

#include <filesystem>

#include "ptx/grid.hpp"

namespace ptx {

// 16-bit grayscale PNG, intensities quantized from [0,1].
void save_image_png(const std::filesystem::path& path, const Image& img);
// 8-bit PNG, nonzero pixels written as 255.
void save_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace ptx
