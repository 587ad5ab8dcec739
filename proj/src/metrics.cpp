#include "cdcn/metrics.hpp"

#include <cmath>
#include <vector>

#include "cdcn/errors.hpp"

namespace cdcn {

Image rgb_to_y(const Image& rgb) {
  require(rgb.channels() == 3, "rgb_to_y expects a 3-channel image");
  Image y(rgb.height(), rgb.width(), 1);
  auto r = rgb.plane(0);
  auto g = rgb.plane(1);
  auto b = rgb.plane(2);
  auto out = y.plane(0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i] + 16.0) / 255.0;
  return y;
}

Image crop_border(const Image& img, int border) {
  require(border >= 0, "border must be >= 0");
  if (border == 0) return img;
  require(2 * border < img.height() && 2 * border < img.width(), "border too large for image");
  return crop(img, border, border, img.height() - 2 * border, img.width() - 2 * border);
}

double psnr(const Image& a, const Image& b) {
  require(a.same_shape(b), "psnr: shape mismatch");
  auto va = a.values();
  auto vb = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(va.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

Image luma(const Image& img) { return img.channels() == 1 ? img : rgb_to_y(img); }

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable 'valid' filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(oh) * w, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int i = 0; i < k; ++i)
      for (int x = 0; x < w; ++x) tmp[y * w + x] += win[i] * src[(y + i) * w + x];
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += win[j] * tmp[y * w + x + j];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr_y(const Image& a, const Image& b, int border) {
  require(a.same_shape(b), "psnr_y: shape mismatch");
  return psnr(luma(crop_border(a, border)), luma(crop_border(b, border)));
}

double ssim_y(const Image& a, const Image& b, int border) {
  require(a.same_shape(b), "ssim_y: shape mismatch");
  const Image ya = luma(crop_border(a, border));
  const Image yb = luma(crop_border(b, border));
  const int h = ya.height();
  const int w = ya.width();
  require(h >= kSsimWindow && w >= kSsimWindow, "image smaller than the SSIM window");

  const std::vector<double> x(ya.values().begin(), ya.values().end());
  const std::vector<double> y(yb.values().begin(), yb.values().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto win = gaussian_window();
  const auto mx = filter_valid(x, h, w, win);
  const auto my = filter_valid(y, h, w, win);
  const auto sxx = filter_valid(xx, h, w, win);
  const auto syy = filter_valid(yy, h, w, win);
  const auto sxy = filter_valid(xy, h, w, win);

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace cdcn
