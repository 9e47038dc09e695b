#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "ptx/error.hpp"

namespace ptx {

// Dense row-major 2-D array. Images are Grid<float> with intensities in [0,1];
// masks are Grid<uint8_t> with values in {0,1}.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}
  Grid(int rows, int cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw Error("grid data size does not match its shape");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> row(int r) { return values().subspan(static_cast<std::size_t>(r) * cols_, cols_); }
  std::span<const T> row(int r) const {
    return values().subspan(static_cast<std::size_t>(r) * cols_, cols_);
  }

  // Copy of the sub-array [r0, r0+h) x [c0, c0+w).
  Grid crop(int r0, int c0, int h, int w) const {
    if (r0 < 0 || c0 < 0 || h < 0 || w < 0 || r0 + h > rows_ || c0 + w > cols_) {
      throw Error("crop window outside the grid");
    }
    Grid out(h, w);
    for (int r = 0; r < h; ++r) {
      auto src = row(r0 + r).subspan(c0, w);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }

  template <typename U>
  bool same_shape(const Grid<U>& other) const { return rows_ == other.rows() && cols_ == other.cols(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw Error("grid dimensions must be non-negative");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<std::uint8_t>;

// Pixel-wise mask projection at 0.5.
inline Mask binarize(const Image& img, float threshold = 0.5f) {
  Mask out(img.rows(), img.cols());
  std::transform(img.values().begin(), img.values().end(), out.values().begin(),
                 [threshold](float v) { return static_cast<std::uint8_t>(v > threshold ? 1 : 0); });
  return out;
}

inline Image to_image(const Mask& mask) {
  Image out(mask.rows(), mask.cols());
  std::transform(mask.values().begin(), mask.values().end(), out.values().begin(),
                 [](std::uint8_t v) { return v ? 1.0f : 0.0f; });
  return out;
}

inline bool any_nonzero(const Mask& mask) {
  return std::any_of(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; });
}

}  // namespace ptx
