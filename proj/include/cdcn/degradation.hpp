#pragma once

#include "cdcn/image.hpp"
#include "cdcn/kernels.hpp"

namespace cdcn {

struct DegradationConfig {
  int scale = 2;
  double bicubic_a = -0.5;
};

// Structure / detail / LR labels synthesized from one HR image and one
// Gaussian blur kernel. structure + detail reproduces the HR image.
struct ComponentTriple {
  Image structure;
  Image detail;  // signed, never clamped
  Image lr;
};

// Per-channel 2-D correlation with half-sample symmetric (reflect) padding.
Image blur(const Image& img, const Kernel& kernel);

// Keeps the upper-left pixel of every s x s block.
Image sfold_downsample(const Image& img, int scale);

// hr (x) k_g (x) k_b, then s-fold subsampling.
Image degrade(const Image& hr, const Kernel& k_g, const DegradationConfig& cfg);

ComponentTriple decompose_labels(const Image& hr, const Kernel& k_g,
                                 const DegradationConfig& cfg);

// Bicubic resize with pixel-center alignment and symmetric boundary handling.
// Downscaling widens the filter by the scale ratio (anti-aliasing).
Image bicubic_resize(const Image& img, int out_height, int out_width,
                     double a = -0.5);

}  // namespace cdcn
