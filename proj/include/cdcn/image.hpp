#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cdcn {

// Planar real-valued image. Pixel (y, x) of channel c lives at
// data[(c * height + y) * width + x]. Values are nominally in [0, 1] but are
// never clamped here; clamping happens only when exporting to 8-bit.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

Image operator+(const Image& a, const Image& b);
Image operator-(const Image& a, const Image& b);

double max_abs_difference(const Image& a, const Image& b);

Image crop(const Image& img, int top, int left, int height, int width);

// Center crop so both dimensions are multiples of `multiple`.
Image center_crop_to_multiple(const Image& img, int multiple);

// Maps a signed residual into displayable range: v + 0.5 (clipping is left
// to the 8-bit export).
Image shift_for_display(const Image& img, double offset = 0.5);

// The 8 elements of the dihedral group D4: index = 4 * flip + rotations,
// rotations counter-clockwise by 90 degrees, flip horizontal before rotating.
Image dihedral_transform(const Image& img, int index);

}  // namespace cdcn
