#include "lfv/image.hpp"

#include <algorithm>

namespace lfv {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) fail(ErrorCode::InvalidArgument, "negative image size");
  if (channels != 1 && channels != 3) fail(ErrorCode::InvalidArgument, "channels must be 1 or 3");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool sample_bilinear(const Grid<float>& grid, double x, double y, float& out) noexcept {
  const int w = grid.width();
  const int h = grid.height();
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return false;
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = x0 + 1 < w ? x0 + 1 : x0;
  const int y1 = y0 + 1 < h ? y0 + 1 : y0;
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  const float top = grid(x0, y0) + ax * (grid(x1, y0) - grid(x0, y0));
  const float bottom = grid(x0, y1) + ax * (grid(x1, y1) - grid(x0, y1));
  out = top + ay * (bottom - top);
  return true;
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(2 * radius + 1);
  float total = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const int w = img.width(), h = img.height(), ch = img.channels();
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y, c);
        tmp.at(x, y, c) = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1), c);
        out.at(x, y, c) = acc;
      }
  return out;
}

namespace {

double source_coord(int dst, int dst_size, int src_size) {
  const double s = static_cast<double>(src_size) / dst_size;
  return std::clamp((dst + 0.5) * s - 0.5, 0.0, static_cast<double>(src_size - 1));
}

}  // namespace

Image resize_bilinear(const Image& img, int width, int height) {
  Image out(width, height, img.channels());
  for (int y = 0; y < height; ++y) {
    const double sy = source_coord(y, height, img.height());
    for (int x = 0; x < width; ++x) {
      const double sx = source_coord(x, width, img.width());
      for (int c = 0; c < img.channels(); ++c) {
        float v = 0.0f;
        img.sample(sx, sy, c, v);
        out.at(x, y, c) = v;
      }
    }
  }
  return out;
}

Image downsample(const Image& img, double scale) {
  if (!(scale > 0.0 && scale < 1.0)) fail(ErrorCode::InvalidArgument, "scale must be in (0,1)");
  const double sigma = 0.5 * std::sqrt(1.0 / (scale * scale) - 1.0);
  const int w = std::max(1, static_cast<int>(std::ceil(img.width() * scale)));
  const int h = std::max(1, static_cast<int>(std::ceil(img.height() * scale)));
  return resize_bilinear(gaussian_blur(img, sigma), w, h);
}

DepthMap downsample_depth(const DepthMap& depth, int width, int height) {
  DepthMap out(width, height, 0.0f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(std::floor(source_coord(x, width, depth.width()) + 0.5));
      const int sy = static_cast<int>(std::floor(source_coord(y, height, depth.height()) + 0.5));
      out(x, y) = depth(std::min(sx, depth.width() - 1), std::min(sy, depth.height() - 1));
    }
  return out;
}

Mask downsample_mask(const Mask& mask, int width, int height) {
  Mask out(width, height, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(std::floor(source_coord(x, width, mask.width()) + 0.5));
      const int sy = static_cast<int>(std::floor(source_coord(y, height, mask.height()) + 0.5));
      out(x, y) = mask(std::min(sx, mask.width() - 1), std::min(sy, mask.height() - 1));
    }
  return out;
}

namespace {

template <bool Dilate>
Mask morph3(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  Mask out(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hit = !Dilate;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const bool on = mask(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1)) != 0;
          if (Dilate) hit = hit || on;
          else hit = hit && on;
        }
      out(x, y) = hit ? 1 : 0;
    }
  return out;
}

}  // namespace

Mask dilate3(const Mask& mask) { return morph3<true>(mask); }
Mask erode3(const Mask& mask) { return morph3<false>(mask); }
Mask close3(const Mask& mask) { return erode3(dilate3(mask)); }

std::size_t count_nonzero(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace lfv
