#include "cdcn/image.hpp"

#include <algorithm>
#include <cmath>

#include "cdcn/errors.hpp"

namespace cdcn {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  require(height >= 1 && width >= 1, "image dimensions must be positive");
  require(channels >= 1, "image must have at least one channel");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

std::span<double> Image::plane(int c) {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return std::span<double>(data_).subspan(c * n, n);
}

std::span<const double> Image::plane(int c) const {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return std::span<const double>(data_).subspan(c * n, n);
}

namespace {

template <typename Op>
Image elementwise(const Image& a, const Image& b, Op op) {
  require(a.same_shape(b), "image shape mismatch");
  Image out(a.height(), a.width(), a.channels());
  auto va = a.values();
  auto vb = b.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = op(va[i], vb[i]);
  return out;
}

}  // namespace

Image operator+(const Image& a, const Image& b) {
  return elementwise(a, b, [](double x, double y) { return x + y; });
}

Image operator-(const Image& a, const Image& b) {
  return elementwise(a, b, [](double x, double y) { return x - y; });
}

double max_abs_difference(const Image& a, const Image& b) {
  require(a.same_shape(b), "image shape mismatch");
  double worst = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    worst = std::max(worst, std::abs(va[i] - vb[i]));
  }
  return worst;
}

Image crop(const Image& img, int top, int left, int height, int width) {
  require(top >= 0 && left >= 0 && top + height <= img.height() &&
              left + width <= img.width(),
          "crop window outside image");
  Image out(height, width, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(y, x, c) = img.at(top + y, left + x, c);
  return out;
}

Image center_crop_to_multiple(const Image& img, int multiple) {
  require(multiple >= 1, "crop multiple must be positive");
  const int h = img.height() / multiple * multiple;
  const int w = img.width() / multiple * multiple;
  require(h > 0 && w > 0, "image smaller than crop multiple");
  if (h == img.height() && w == img.width()) return img;
  return crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

Image shift_for_display(const Image& img, double offset) {
  Image out = img;
  for (double& v : out.values()) v += offset;
  return out;
}

Image dihedral_transform(const Image& img, int index) {
  require(index >= 0 && index < 8, "dihedral index must be in [0, 8)");
  Image cur = img;
  if (index >= 4) {
    Image flipped(cur.height(), cur.width(), cur.channels());
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x)
          flipped.at(y, x, c) = cur.at(y, cur.width() - 1 - x, c);
    cur = std::move(flipped);
  }
  for (int r = 0; r < index % 4; ++r) {
    Image rotated(cur.width(), cur.height(), cur.channels());
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < rotated.height(); ++y)
        for (int x = 0; x < rotated.width(); ++x)
          rotated.at(y, x, c) = cur.at(x, cur.width() - 1 - y, c);
    cur = std::move(rotated);
  }
  return cur;
}

}  // namespace cdcn
