#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "irseg/error.hpp"

namespace irseg {

/// Row-major M x N raster. Row index first, column second.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw data_error("grid.shape", "grid data length does not match width x height");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  T& operator[](std::size_t idx) { return data_[idx]; }
  const T& operator[](std::size_t idx) const { return data_[idx]; }

  /// Edge-replicated access; out-of-range coordinates clamp to the border.
  const T& clamped(std::ptrdiff_t row, std::ptrdiff_t col) const {
    const auto r = row < 0 ? 0 : (row >= static_cast<std::ptrdiff_t>(height_) ? height_ - 1 : static_cast<std::size_t>(row));
    const auto c = col < 0 ? 0 : (col >= static_cast<std::ptrdiff_t>(width_) ? width_ - 1 : static_cast<std::size_t>(col));
    return data_[r * width_ + c];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  template <class U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

/// Radiometric temperatures in centikelvin. Raw frames are non-negative;
/// derived fields such as the background residual may be signed.
using TemperatureImage = Grid<double>;
/// Heights in kilometres.
using HeightImage = Grid<double>;
/// 0 = clear, 1 = cloud.
using LabelMask = Grid<std::uint8_t>;
/// Normalized 8-bit intensities.
using ByteImage = Grid<std::uint8_t>;
/// Per-pixel class-1 (cloud) probability.
using ProbabilityMap = Grid<double>;

template <class T, class U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw data_error("grid.shape_mismatch", std::string(what) + ": grid shapes differ");
  }
}

}  // namespace irseg
