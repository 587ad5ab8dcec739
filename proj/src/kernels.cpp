#include "cdcn/kernels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cdcn/errors.hpp"

namespace cdcn {

namespace {

void normalize_in_place(int size, std::vector<double>& data, bool allow_negative) {
  require(size >= 1 && size % 2 == 1, "kernel size must be odd and positive");
  require(data.size() == static_cast<std::size_t>(size) * size,
          "kernel value count does not match size");
  double total = 0.0;
  for (double v : data) {
    require(std::isfinite(v), "kernel entries must be finite");
    require(allow_negative || v >= 0.0, "kernel entries must be >= 0");
    total += v;
  }
  require(total > 0.0, "kernel entries must have a positive sum");
  for (double& v : data) v /= total;
}

}  // namespace

Kernel::Kernel(int size, std::vector<double> values, std::string description)
    : size_(size), data_(std::move(values)), description_(std::move(description)) {
  normalize_in_place(size_, data_, false);
}

Kernel Kernel::from_signed(int size, std::vector<double> values, std::string description) {
  Kernel k;
  k.size_ = size;
  k.data_ = std::move(values);
  k.description_ = std::move(description);
  normalize_in_place(k.size_, k.data_, true);
  return k;
}

bool Kernel::non_negative() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0; });
}

Kernel Kernel::delta(int size) {
  std::vector<double> v(static_cast<std::size_t>(size) * size, 0.0);
  v[(size / 2) * size + size / 2] = 1.0;
  return Kernel(size, std::move(v), "delta");
}

double Kernel::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

namespace {

std::string shortest(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

}  // namespace

std::string describe(const IsoKernelSpec& spec) { return "iso:width=" + shortest(spec.width); }

std::string describe(const AnisoKernelSpec& spec) {
  return "aniso:l1=" + shortest(spec.lambda1) + ",l2=" + shortest(spec.lambda2) + ",theta=" + shortest(spec.theta) +
         ",noise=" + shortest(spec.noise_level) + ",seed=" + std::to_string(spec.seed);
}

Kernel make_isotropic_gaussian(const IsoKernelSpec& spec) {
  require(spec.width > 0.0, "Gaussian width must be positive");
  require(spec.size >= 3 && spec.size % 2 == 1, "kernel size must be odd and >= 3");
  const int r = spec.size / 2;
  const double inv = 1.0 / (2.0 * spec.width * spec.width);
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(spec.size) * spec.size);
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) v.push_back(std::exp(-(i * i + j * j) * inv));
  return Kernel(spec.size, std::move(v), describe(spec));
}

Kernel make_anisotropic_gaussian(const AnisoKernelSpec& spec) {
  require(spec.lambda1 >= kAnisoLambdaMin && spec.lambda1 <= kAnisoLambdaMax &&
              spec.lambda2 >= kAnisoLambdaMin && spec.lambda2 <= kAnisoLambdaMax,
          "anisotropic lambdas must lie in [0.6, 5]");
  require(std::abs(spec.theta) <= std::numbers::pi + 1e-12, "theta must lie in [-pi, pi]");
  require(spec.noise_level >= 0.0 && spec.noise_level <= kMaxKernelNoise,
          "kernel noise level must lie in [0, 0.25]");
  require(spec.size >= 3 && spec.size % 2 == 1, "kernel size must be odd and >= 3");

  // Sigma = R diag(l1^2, l2^2) R^T; we need its inverse.
  const double c = std::cos(spec.theta);
  const double s = std::sin(spec.theta);
  const double inv1 = 1.0 / (spec.lambda1 * spec.lambda1);
  const double inv2 = 1.0 / (spec.lambda2 * spec.lambda2);
  const double p00 = c * c * inv1 + s * s * inv2;
  const double p01 = c * s * (inv1 - inv2);
  const double p11 = s * s * inv1 + c * c * inv2;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> noise(1.0 - spec.noise_level,
                                               1.0 + spec.noise_level);
  const int r = spec.size / 2;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(spec.size) * spec.size);
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      const double q = p00 * i * i + 2.0 * p01 * i * j + p11 * j * j;
      double value = std::exp(-0.5 * q);
      if (spec.noise_level > 0.0) value *= noise(rng);
      v.push_back(std::max(value, 0.0));
    }
  }
  return Kernel(spec.size, std::move(v), describe(spec));
}

double cubic_convolution(double x, double a) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

std::vector<double> bicubic_taps(int scale, double a) {
  require(scale >= 1, "bicubic scale must be >= 1");
  std::vector<double> taps;
  if (scale % 2 == 0) {
    for (int k = -2 * scale; k < 2 * scale; ++k)
      taps.push_back(cubic_convolution((k + 0.5) / scale, a));
  } else {
    for (int k = -(2 * scale - 1); k <= 2 * scale - 1; ++k)
      taps.push_back(cubic_convolution(static_cast<double>(k) / scale, a));
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= total;
  return taps;
}

Kernel make_bicubic_kernel(int scale, double a) {
  require(scale >= 1, "bicubic scale must be >= 1");
  const std::vector<double> taps = bicubic_taps(scale, a);
  // Integer offset (relative to the sampled pixel s*i) of the first tap.
  const int first = scale % 2 == 0 ? scale / 2 - 2 * scale
                                   : (scale - 1) / 2 - (2 * scale - 1);
  const int last = first + static_cast<int>(taps.size()) - 1;
  const int radius = std::max(-first, last);
  const int size = 2 * radius + 1;
  std::vector<double> line(size, 0.0);
  for (std::size_t k = 0; k < taps.size(); ++k)
    line[radius + first + static_cast<int>(k)] = taps[k];

  std::vector<double> v(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) v[i * size + j] = line[i] * line[j];
  return Kernel::from_signed(size, std::move(v), "bicubic:scale=" + std::to_string(scale));
}

std::array<double, 8> gaussian8_widths(int scale) {
  double lo = 0.0;
  double hi = 0.0;
  switch (scale) {
    case 2: lo = 0.80; hi = 1.60; break;
    case 3: lo = 1.35; hi = 2.40; break;
    case 4: lo = 1.80; hi = 3.20; break;
    default: throw ValidationError("Gaussian8 is defined for scales 2, 3 and 4");
  }
  std::array<double, 8> widths{};
  for (int i = 0; i < 8; ++i) widths[i] = lo + (hi - lo) * i / 7.0;
  widths[7] = hi;
  return widths;
}

std::pair<double, double> training_width_range(int scale) {
  switch (scale) {
    case 2: return {0.2, 2.0};
    case 3: return {0.2, 3.0};
    case 4: return {0.2, 4.0};
    default: throw ValidationError("training width range is defined for scales 2, 3 and 4");
  }
}

AnisoKernelSpec draw_anisotropic_spec(std::mt19937_64& rng, double noise_level, int size) {
  std::uniform_real_distribution<double> lambda(kAnisoLambdaMin, kAnisoLambdaMax);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  AnisoKernelSpec spec;
  spec.lambda1 = lambda(rng);
  spec.lambda2 = lambda(rng);
  spec.theta = angle(rng);
  spec.noise_level = noise_level;
  spec.seed = rng();
  spec.size = size;
  return spec;
}

}  // namespace cdcn
