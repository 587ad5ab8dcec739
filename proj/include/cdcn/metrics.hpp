#pragma once

#include "cdcn/image.hpp"

namespace cdcn {

// Returned by PSNR for identical inputs.
inline constexpr double kPsnrCap = 100.0;

// BT.601 studio-swing luma on [0, 1] inputs:
// Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255.
Image rgb_to_y(const Image& rgb);

// Removes `border` pixels from every side.
Image crop_border(const Image& img, int border);

// 10 log10(1 / MSE) over all elements; kPsnrCap when MSE is zero.
double psnr(const Image& a, const Image& b);

// PSNR on the Y channel after cropping `border` pixels. Single-channel
// inputs are treated as luma already.
double psnr_y(const Image& a, const Image& b, int border = 0);

// Single-scale SSIM on Y: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1, averaged over all fully covered windows.
double ssim_y(const Image& a, const Image& b, int border = 0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace cdcn
