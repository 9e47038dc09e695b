#include "ptx/preprocess.hpp"

#include <cmath>
#include <numbers>

namespace ptx {

void Geometry::validate() const {
  if (crop_side < 2 || resize_side < crop_side) {
    throw UsageError("geometry: need 2 <= crop_side <= resize_side");
  }
  if (grid < 2 || bag_side < crop_side || (bag_side - crop_side) % (grid - 1) != 0) {
    throw UsageError("geometry: bag_side - crop_side must split evenly into grid - 1 strides");
  }
  if (bag_stride() > crop_side) throw UsageError("geometry: bag patches leave gaps");
}

Geometry Geometry::named(const std::string& name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw UsageError("unknown geometry '" + name + "' (expected full or desk)");
}

Image resize_bilinear(const Image& img, int rows, int cols) {
  if (img.rows() < 1 || img.cols() < 1) throw Error("cannot resize an empty image");
  if (rows == img.rows() && cols == img.cols()) return img;
  Image out(rows, cols);
  const double sy = static_cast<double>(img.rows()) / rows;
  const double sx = static_cast<double>(img.cols()) / cols;
  std::vector<int> x0(cols), x1(cols);
  std::vector<float> fx(cols);
  for (int c = 0; c < cols; ++c) {
    const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.cols() - 1.0);
    x0[c] = static_cast<int>(x);
    x1[c] = std::min(x0[c] + 1, img.cols() - 1);
    fx[c] = static_cast<float>(x - x0[c]);
  }
  for (int r = 0; r < rows; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.rows() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, img.rows() - 1);
    const float fy = static_cast<float>(y - y0);
    const auto top = img.row(y0);
    const auto bottom = img.row(y1);
    auto dst = out.row(r);
    for (int c = 0; c < cols; ++c) {
      const float t = std::lerp(top[x0[c]], top[x1[c]], fx[c]);
      const float b = std::lerp(bottom[x0[c]], bottom[x1[c]], fx[c]);
      dst[c] = std::lerp(t, b, fy);
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int rows, int cols) {
  if (rows == mask.rows() && cols == mask.cols()) return mask;
  Mask out(rows, cols);
  const double sy = static_cast<double>(mask.rows()) / rows;
  const double sx = static_cast<double>(mask.cols()) / cols;
  for (int r = 0; r < rows; ++r) {
    const int y = std::min(static_cast<int>((r + 0.5) * sy), mask.rows() - 1);
    for (int c = 0; c < cols; ++c) {
      const int x = std::min(static_cast<int>((c + 0.5) * sx), mask.cols() - 1);
      out(r, c) = mask(y, x) ? 1 : 0;
    }
  }
  return out;
}

Image standard_input(const Image& img, const Geometry& geo) {
  if (img.rows() < 2 || img.cols() < 2) throw Error("standard_input: image must be at least 2x2");
  const int m = geo.crop_margin() / 2;
  return resize_bilinear(img, geo.resize_side, geo.resize_side).crop(m, m, geo.crop_side, geo.crop_side);
}

Mask standard_input(const Mask& mask, const Geometry& geo) {
  const int m = geo.crop_margin() / 2;
  return resize_nearest(mask, geo.resize_side, geo.resize_side).crop(m, m, geo.crop_side, geo.crop_side);
}

std::array<Offset, 5> five_crop_offsets(const Geometry& geo) {
  const int m = geo.crop_margin();
  return {Offset{0, 0}, Offset{0, m}, Offset{m, 0}, Offset{m, m}, Offset{m / 2, m / 2}};
}

std::array<Image, 5> five_crop(const Image& resized, const Geometry& geo) {
  if (resized.rows() != geo.resize_side || resized.cols() != geo.resize_side) {
    throw Error("five_crop: expected a " + std::to_string(geo.resize_side) + "x" +
                std::to_string(geo.resize_side) + " image, got " + std::to_string(resized.rows()) +
                "x" + std::to_string(resized.cols()));
  }
  std::array<Image, 5> crops;
  const auto offsets = five_crop_offsets(geo);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    crops[i] = resized.crop(offsets[i].row, offsets[i].col, geo.crop_side, geo.crop_side);
  }
  return crops;
}

std::vector<Offset> bag_origins(const Geometry& geo) {
  std::vector<Offset> origins;
  const int stride = geo.bag_stride();
  for (int r = 0; r < geo.grid; ++r) {
    for (int c = 0; c < geo.grid; ++c) origins.push_back({r * stride, c * stride});
  }
  return origins;
}

PatchBag make_bag(const Image& img, const Geometry& geo) {
  geo.validate();
  const Image frame = resize_bilinear(img, geo.bag_side, geo.bag_side);
  PatchBag bag;
  bag.origins = bag_origins(geo);
  for (const auto& o : bag.origins) bag.patches.push_back(frame.crop(o.row, o.col, geo.crop_side, geo.crop_side));
  return bag;
}

Image reassemble(const PatchBag& bag, const Geometry& geo) {
  Image frame(geo.bag_side, geo.bag_side);
  for (std::size_t i = 0; i < bag.patches.size(); ++i) {
    const auto& p = bag.patches[i];
    const auto& o = bag.origins.at(i);
    for (int r = 0; r < p.rows(); ++r) {
      auto src = p.row(r);
      std::copy(src.begin(), src.end(), frame.row(o.row + r).begin() + o.col);
    }
  }
  return frame;
}

void AugmentationParams::validate() const {
  auto check = [](const Interval& i, const char* name) {
    if (!std::isfinite(i.lo) || !std::isfinite(i.hi) || i.lo > i.hi) {
      throw UsageError(std::string("augmentation: invalid ") + name + " range");
    }
  };
  check(translation, "translation");
  check(scale, "scale");
  check(rotation_deg, "rotation");
  if (scale.lo <= 0.0) throw UsageError("augmentation: scale must be positive");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw UsageError("augmentation: flip probability outside [0,1]");
  }
  if (window_center.has_value() != window_width.has_value()) {
    throw UsageError("augmentation: window center and width must be enabled together");
  }
  if (window_center) check(*window_center, "window center");
  if (window_width) {
    check(*window_width, "window width");
    if (window_width->lo <= 0.0) throw UsageError("augmentation: window width must be positive");
  }
  if (dose) {
    check(*dose, "dose");
    if (dose->lo <= 0.0) throw UsageError("augmentation: dose must be positive");
  }
}

AugmentationParams AugmentationParams::identity() {
  AugmentationParams p;
  p.translation = {0.0, 0.0};
  p.scale = {1.0, 1.0};
  p.rotation_deg = {0.0, 0.0};
  p.flip_probability = 0.0;
  p.window_center.reset();
  p.window_width.reset();
  p.dose.reset();
  return p;
}

Image apply_window(const Image& img, double center, double width) {
  if (!(width > 0.0)) throw Error("window width must be positive");
  Image out(img.rows(), img.cols());
  const double lo = center - width / 2.0;
  std::transform(img.values().begin(), img.values().end(), out.values().begin(), [&](float v) {
    return static_cast<float>(std::clamp((v - lo) / width, 0.0, 1.0));
  });
  return out;
}

Image add_poisson_noise(const Image& img, double dose, std::mt19937_64& rng) {
  if (!(dose > 0.0)) throw Error("Poisson dose must be positive");
  Image out(img.rows(), img.cols());
  std::poisson_distribution<long> poisson;
  using Param = std::poisson_distribution<long>::param_type;
  auto dst = out.values().begin();
  for (float v : img.values()) {
    const double mean = dose * std::max(0.0f, v);
    const double sample = mean > 0.0 ? static_cast<double>(poisson(rng, Param(mean))) : 0.0;
    *dst++ = static_cast<float>(std::clamp(sample / dose, 0.0, 1.0));
  }
  return out;
}

namespace {

double draw(const Interval& i, std::mt19937_64& rng) {
  if (i.lo == i.hi) return i.lo;
  return std::uniform_real_distribution<double>(i.lo, i.hi)(rng);
}

// Maps output pixel coordinates (x = col, y = row) back to source coordinates.
struct InverseAffine {
  double a, b, c, d;  // 2x2 inverse linear part
  double cx, cy, tx, ty;

  std::pair<double, double> operator()(int row, int col) const {
    const double u = col - cx - tx;
    const double v = row - cy - ty;
    return {a * u + b * v + cx, c * u + d * v + cy};
  }
};

}  // namespace

Augmented augment(const Image& img, const Mask* mask, const AugmentationParams& params,
                  std::mt19937_64& rng) {
  params.validate();
  if (mask && !mask->same_shape(img)) throw Error("augment: mask and image shapes differ");

  const bool flip = params.flip_probability > 0.0 &&
                    std::bernoulli_distribution(params.flip_probability)(rng);
  const double angle = draw(params.rotation_deg, rng) * std::numbers::pi / 180.0;
  const double scale = draw(params.scale, rng);
  const double tx = draw(params.translation, rng) * img.cols();
  const double ty = draw(params.translation, rng) * img.rows();

  Augmented out;
  const bool identity_geometry = !flip && angle == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0;
  if (identity_geometry) {
    out.image = img;
    if (mask) out.mask = *mask;
  } else {
    // forward: p' = R * S * F * (p - center) + center + t
    const double cs = std::cos(angle) / scale;
    const double sn = std::sin(angle) / scale;
    const double f = flip ? -1.0 : 1.0;
    // (R S F)^-1 = F^-1 S^-1 R^-1 with R^-1 = [[cos, sin], [-sin, cos]]
    const InverseAffine inv{f * cs, f * sn, -sn, cs, (img.cols() - 1) / 2.0, (img.rows() - 1) / 2.0, tx, ty};

    out.image = Image(img.rows(), img.cols());
    if (mask) out.mask = Mask(img.rows(), img.cols());
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        const auto [x, y] = inv(r, c);
        const long xn = std::lround(x);
        const long yn = std::lround(y);
        if (xn < 0 || yn < 0 || xn >= img.cols() || yn >= img.rows()) continue;  // zero fill
        if (mask) (*out.mask)(r, c) = (*mask)(static_cast<int>(yn), static_cast<int>(xn)) ? 1 : 0;
        const double xc = std::clamp(x, 0.0, img.cols() - 1.0);
        const double yc = std::clamp(y, 0.0, img.rows() - 1.0);
        const int x0 = static_cast<int>(xc);
        const int y0 = static_cast<int>(yc);
        const int x1 = std::min(x0 + 1, img.cols() - 1);
        const int y1 = std::min(y0 + 1, img.rows() - 1);
        const float fx = static_cast<float>(xc - x0);
        const float fy = static_cast<float>(yc - y0);
        const float top = std::lerp(img(y0, x0), img(y0, x1), fx);
        const float bottom = std::lerp(img(y1, x0), img(y1, x1), fx);
        out.image(r, c) = std::lerp(top, bottom, fy);
      }
    }
  }

  if (params.window_center && params.window_width) {
    const double center = draw(*params.window_center, rng);
    const double width = draw(*params.window_width, rng);
    out.image = apply_window(out.image, center, width);
  }
  if (params.dose) {
    const double dose = std::exp(draw({std::log(params.dose->lo), std::log(params.dose->hi)}, rng));
    out.image = add_poisson_noise(out.image, dose, rng);
  }
  for (float& v : out.image.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::mt19937_64 record_rng(std::uint64_t global_seed, std::uint64_t record_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(global_seed), static_cast<std::uint32_t>(global_seed >> 32),
                    static_cast<std::uint32_t>(record_index),
                    static_cast<std::uint32_t>(record_index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace ptx
