#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lfv/error.hpp"

namespace lfv {

// Dense row-major 2D grid. Pixel (x, y) has its centre at coordinates (x, y).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Grid& other) const = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) fail(ErrorCode::InvalidArgument, "negative grid size");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;
// Metric depth per pixel; 0 marks pixels without a surface.
using DepthMap = Grid<float>;
using LabelMap = Grid<std::int32_t>;

// Interleaved float image with values normalised to [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  // Bilinear sample; false when (x, y) lies outside the hull of pixel centres.
  bool sample(double x, double y, int c, float& out) const noexcept {
    if (!(x >= 0.0 && y >= 0.0 && x <= width_ - 1 && y <= height_ - 1)) return false;
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = x0 + 1 < width_ ? x0 + 1 : x0;
    const int y1 = y0 + 1 < height_ ? y0 + 1 : y0;
    const float ax = static_cast<float>(x - x0);
    const float ay = static_cast<float>(y - y0);
    const float v00 = at(x0, y0, c), v10 = at(x1, y0, c);
    const float v01 = at(x0, y1, c), v11 = at(x1, y1, c);
    const float top = v00 + ax * (v10 - v00);
    const float bottom = v01 + ax * (v11 - v01);
    out = top + ay * (bottom - top);
    return true;
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Bilinear sample of a scalar grid, same convention as Image::sample.
bool sample_bilinear(const Grid<float>& grid, double x, double y, float& out) noexcept;

// Nearest-pixel lookup; false outside the grid.
template <typename T>
bool sample_nearest(const Grid<T>& grid, double x, double y, T& out) noexcept {
  const int xi = static_cast<int>(std::floor(x + 0.5));
  const int yi = static_cast<int>(std::floor(y + 0.5));
  if (!grid.contains(xi, yi)) return false;
  out = grid(xi, yi);
  return true;
}

// Rec. 601 luma; single channel images are copied.
Image to_luma(const Image& img);

Image gaussian_blur(const Image& img, double sigma);

// Resamples to the given size mapping output centre x' to input (x' + 0.5) * sx - 0.5.
Image resize_bilinear(const Image& img, int width, int height);

// Blur-and-resample pyramid step for a scale factor in (0, 1).
Image downsample(const Image& img, double scale);
DepthMap downsample_depth(const DepthMap& depth, int width, int height);
Mask downsample_mask(const Mask& mask, int width, int height);

// 3x3 morphology; the border is replicated.
Mask dilate3(const Mask& mask);
Mask erode3(const Mask& mask);
Mask close3(const Mask& mask);

std::size_t count_nonzero(const Mask& mask);

}  // namespace lfv
