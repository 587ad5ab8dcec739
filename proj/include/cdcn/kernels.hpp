#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cdcn {

// Square, odd-sized blur kernel whose entries sum to one. Gaussian kernels
// are non-negative; the bicubic kernel keeps its negative cubic lobes.
class Kernel {
 public:
  Kernel() = default;
  // Takes raw values (row-major), checks shape and non-negativity, and
  // normalizes them to sum to one.
  Kernel(int size, std::vector<double> values, std::string description = {});

  static Kernel delta(int size);
  // Same as the constructor but admits negative entries (bicubic lobes).
  static Kernel from_signed(int size, std::vector<double> values,
                            std::string description = {});

  int size() const { return size_; }
  int radius() const { return size_ / 2; }
  double operator()(int row, int col) const { return data_[row * size_ + col]; }
  double center() const { return (*this)(radius(), radius()); }
  double sum() const;
  std::span<const double> values() const { return data_; }
  const std::string& description() const { return description_; }
  bool non_negative() const;

 private:
  int size_ = 0;
  std::vector<double> data_;
  std::string description_;
};

struct IsoKernelSpec {
  double width = 1.0;  // Gaussian sigma in pixels
  int size = 21;
};

struct AnisoKernelSpec {
  double lambda1 = 1.0;  // sigma along the (rotated) row axis
  double lambda2 = 1.0;  // sigma along the (rotated) column axis
  double theta = 0.0;    // radians
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  int size = 11;
};

inline constexpr double kAnisoLambdaMin = 0.6;
inline constexpr double kAnisoLambdaMax = 5.0;
inline constexpr double kMaxKernelNoise = 0.25;

Kernel make_isotropic_gaussian(const IsoKernelSpec& spec);
Kernel make_anisotropic_gaussian(const AnisoKernelSpec& spec);

// Keys cubic convolution kernel W(x) with free parameter a.
double cubic_convolution(double x, double a = -0.5);

// 1-D anti-aliasing taps for s-fold bicubic downsampling, evaluated at
// offsets (k + 0.5) / s (even s) or k / s (odd s) and normalized to sum 1.
std::vector<double> bicubic_taps(int scale, double a = -0.5);

// Separable 2-D bicubic kernel for correlation followed by s-fold
// (upper-left) subsampling. The odd square grid is padded so that the
// filter's center of symmetry lands on the input coordinate
// (s * i + (s - 1) / 2), which is where a bicubic resize samples.
Kernel make_bicubic_kernel(int scale, double a = -0.5);

// Evenly spaced (endpoints inclusive) evaluation widths for scale 2, 3, 4.
std::array<double, 8> gaussian8_widths(int scale);

// Kernel width range used for synthesizing isotropic training pairs.
std::pair<double, double> training_width_range(int scale);

// Draws lambda1, lambda2 ~ U(0.6, 5), theta ~ U(-pi, pi) and a kernel seed.
AnisoKernelSpec draw_anisotropic_spec(std::mt19937_64& rng,
                                      double noise_level = kMaxKernelNoise,
                                      int size = 11);

std::string describe(const IsoKernelSpec& spec);
std::string describe(const AnisoKernelSpec& spec);

}  // namespace cdcn
