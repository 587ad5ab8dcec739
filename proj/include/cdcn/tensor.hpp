#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdcn/image.hpp"

namespace cdcn::nn {

// NCHW extents. Every tensor is 4-D; conv weights use (out, in, k, k) and
// biases (out, 1, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  // Start of sample n / of plane (n, c).
  double* sample(int n) { return data_.data() + offset(n, 0, 0, 0); }
  const double* sample(int n) const { return data_.data() + offset(n, 0, 0, 0); }

  void fill(double v);

 private:
  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<double> data_;
};

// Packs images of identical shape into one (N, C, H, W) tensor.
Tensor stack_images(std::span<const Image> images);
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int index = 0);

}  // namespace cdcn::nn
