#include "cdcn/degradation.hpp"

#include <cmath>
#include <vector>

#include "cdcn/errors.hpp"

namespace cdcn {

namespace {

// Half-sample symmetric index: ... c b a | a b c ... | c b a ...
int reflect_index(int p, int n) {
  const int period = 2 * n;
  int m = p % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

Image blur(const Image& img, const Kernel& kernel) {
  require(kernel.size() <= img.height() && kernel.size() <= img.width(),
          "kernel larger than image");
  const int r = kernel.radius();
  const int h = img.height();
  const int w = img.width();
  const int pw = w + 2 * r;
  const int ph = h + 2 * r;
  Image out(h, w, img.channels());
  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = reflect_index(y - r, h);
      for (int x = 0; x < pw; ++x) padded[y * pw + x] = img.at(sy, reflect_index(x - r, w), c);
    }
    auto dst = out.plane(c);
    for (int y = 0; y < h; ++y) {
      double* row = dst.data() + static_cast<std::size_t>(y) * w;
      for (int i = 0; i < kernel.size(); ++i) {
        const double* src = padded.data() + static_cast<std::size_t>(y + i) * pw;
        for (int j = 0; j < kernel.size(); ++j) {
          const double k = kernel(i, j);
          if (k == 0.0) continue;
          const double* s = src + j;
          for (int x = 0; x < w; ++x) row[x] += k * s[x];
        }
      }
    }
  }
  return out;
}

Image sfold_downsample(const Image& img, int scale) {
  require(scale >= 1, "downsampling factor must be >= 1");
  require(img.height() % scale == 0 && img.width() % scale == 0,
          "image dimensions must be divisible by the scale");
  Image out(img.height() / scale, img.width() / scale, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(y, x, c) = img.at(scale * y, scale * x, c);
  return out;
}

Image degrade(const Image& hr, const Kernel& k_g, const DegradationConfig& cfg) {
  return decompose_labels(hr, k_g, cfg).lr;
}

ComponentTriple decompose_labels(const Image& hr, const Kernel& k_g,
                                 const DegradationConfig& cfg) {
  require(cfg.scale >= 1, "scale must be >= 1");
  require(hr.height() % cfg.scale == 0 && hr.width() % cfg.scale == 0,
          "HR dimensions must be divisible by the scale");
  ComponentTriple t;
  t.structure = blur(hr, k_g);
  t.detail = hr - t.structure;
  t.lr = sfold_downsample(blur(t.structure, make_bicubic_kernel(cfg.scale, cfg.bicubic_a)),
                          cfg.scale);
  return t;
}

namespace {

struct Contribution {
  int first = 0;
  std::vector<double> weights;  // taps at reflect_index(first + k)
};

std::vector<Contribution> resize_contributions(int in, int out, double a) {
  const double scale = static_cast<double>(out) / in;
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double half_width = 2.0 / stretch;
  std::vector<Contribution> result(out);
  for (int i = 0; i < out; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - half_width));
    const int right = static_cast<int>(std::ceil(u + half_width));
    Contribution& c = result[i];
    c.first = left;
    double total = 0.0;
    for (int j = left; j <= right; ++j) {
      const double wgt = stretch * cubic_convolution(stretch * (u - j), a);
      c.weights.push_back(wgt);
      total += wgt;
    }
    for (double& wgt : c.weights) wgt /= total;
  }
  return result;
}

}  // namespace

Image bicubic_resize(const Image& img, int out_height, int out_width, double a) {
  require(out_height >= 1 && out_width >= 1, "output size must be positive");
  const auto rows = resize_contributions(img.height(), out_height, a);
  const auto cols = resize_contributions(img.width(), out_width, a);

  Image tmp(out_height, img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out_height; ++y) {
      const Contribution& rc = rows[y];
      for (std::size_t k = 0; k < rc.weights.size(); ++k) {
        const int sy = reflect_index(rc.first + static_cast<int>(k), img.height());
        const double wgt = rc.weights[k];
        for (int x = 0; x < img.width(); ++x) tmp.at(y, x, c) += wgt * img.at(sy, x, c);
      }
    }

  Image out(out_height, out_width, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x) {
        const Contribution& cc = cols[x];
        double acc = 0.0;
        for (std::size_t k = 0; k < cc.weights.size(); ++k)
          acc += cc.weights[k] * tmp.at(y, reflect_index(cc.first + static_cast<int>(k), img.width()), c);
        out.at(y, x, c) = acc;
      }
  return out;
}

}  // namespace cdcn
