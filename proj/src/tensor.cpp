#include "cdcn/tensor.hpp"

#include <algorithm>

#include "cdcn/errors.hpp"

namespace cdcn::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
         ", " + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
          "negative tensor extent");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor stack_images(std::span<const Image> images) {
  require(!images.empty(), "cannot stack an empty image list");
  const Image& first = images.front();
  Tensor t({static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].same_shape(first), "stacked images must share a shape");
    std::copy(images[i].values().begin(), images[i].values().end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

Tensor image_to_tensor(const Image& img) { return stack_images(std::span<const Image>(&img, 1)); }

Image tensor_to_image(const Tensor& t, int index) {
  const Shape& s = t.shape();
  require(index >= 0 && index < s.n, "tensor sample index out of range");
  Image img(s.h, s.w, s.c);
  std::copy(t.sample(index), t.sample(index) + img.size(), img.values().begin());
  return img;
}

}  // namespace cdcn::nn
