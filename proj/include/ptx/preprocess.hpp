#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ptx/grid.hpp"

namespace ptx {

// Input geometry shared by the three pipelines. The full defaults are a
// 480x480 resize with a centered 448x448 crop (CNN, FCN) and a 1120x1120
// resize tiled by a 4x4 grid of 448x448 patches (MIL).
struct Geometry {
  int resize_side = 480;
  int crop_side = 448;
  int bag_side = 1120;
  int grid = 4;

  int crop_margin() const { return resize_side - crop_side; }
  int bag_stride() const { return (bag_side - crop_side) / (grid - 1); }
  int patches_per_bag() const { return grid * grid; }
  void validate() const;

  static Geometry full() { return {}; }
  // Reduced geometry for CPU-scale runs on the synthetic dataset.
  static Geometry desk() { return {136, 128, 320, 4}; }
  static Geometry named(const std::string& name);

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

// Bilinear, pixel-center aligned (half-pixel offsets, edge clamped).
Image resize_bilinear(const Image& img, int rows, int cols);
Mask resize_nearest(const Mask& mask, int rows, int cols);

// Resize to resize_side then center-crop crop_side.
Image standard_input(const Image& img, const Geometry& geo = {});
Mask standard_input(const Mask& mask, const Geometry& geo = {});

struct Offset {
  int row = 0;
  int col = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

// (0,0), (0,m), (m,0), (m,m), (m/2,m/2) for margin m = resize - crop.
std::array<Offset, 5> five_crop_offsets(const Geometry& geo = {});

// Crops of an already resized (resize_side x resize_side) image.
std::array<Image, 5> five_crop(const Image& resized, const Geometry& geo = {});

struct PatchBag {
  std::vector<Image> patches;
  std::vector<Offset> origins;  // in the bag_side x bag_side frame
  std::string source_case;      // case id of the originating record, if known
};

std::vector<Offset> bag_origins(const Geometry& geo = {});
PatchBag make_bag(const Image& img, const Geometry& geo = {});
// Pastes the patches back at their origins.
Image reassemble(const PatchBag& bag, const Geometry& geo = {});

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct AugmentationParams {
  Interval translation{-0.05, 0.05};  // fraction of the image side, per axis
  Interval scale{0.9, 1.1};
  Interval rotation_deg{-10.0, 10.0};
  double flip_probability = 0.5;
  std::optional<Interval> window_center = Interval{0.4, 0.6};
  std::optional<Interval> window_width = Interval{0.8, 1.2};
  std::optional<Interval> dose = Interval{50.0, 500.0};  // log-uniform
  std::uint64_t seed = 0;

  void validate() const;
  // Every transform disabled or degenerate.
  static AugmentationParams identity();

  friend bool operator==(const AugmentationParams&, const AugmentationParams&) = default;
};

// Linear map of [center - width/2, center + width/2] onto [0,1], clipped.
Image apply_window(const Image& img, double center, double width);

// Poisson(dose * v) / dose per pixel, clipped to [0,1].
Image add_poisson_noise(const Image& img, double dose, std::mt19937_64& rng);

struct Augmented {
  Image image;
  std::optional<Mask> mask;
};

// One draw of flip, rotation, scale and translation about the image center
// (bilinear for the image, nearest for the mask, zero fill outside the
// frame), then windowing and Poisson noise on the image only.
Augmented augment(const Image& img, const Mask* mask, const AugmentationParams& params,
                  std::mt19937_64& rng);

// Independent stream per record so augmentation can be parallelised.
std::mt19937_64 record_rng(std::uint64_t global_seed, std::uint64_t record_index);

}  // namespace ptx
