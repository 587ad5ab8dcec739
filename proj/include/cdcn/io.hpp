#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdcn/image.hpp"
#include "cdcn/kernels.hpp"

namespace cdcn {

// 8-bit PNG <-> [0, 1] reals: v / 255 on read, round(clamp(v) * 255) on write.
// Gray PNGs load as one channel; alpha is dropped.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Rounds every value to the nearest 8-bit level (what a PNG round trip does).
Image quantize_8bit(const Image& img);

// Kernel text format: "size description" then `size` rows of `size`
// space-separated decimals printed with 17 significant digits.
void write_kernel(const std::filesystem::path& path, const Kernel& kernel);
Kernel read_kernel(const std::filesystem::path& path);
std::string format_kernel(const Kernel& kernel);
Kernel parse_kernel(const std::string& text);

// Lossless float32 dump: "CDCNF32 height width channels\n" followed by the
// planar little-endian float32 payload.
void write_f32(const std::filesystem::path& path, const Image& img);
Image read_f32(const std::filesystem::path& path);

// Sorted list of *.png files in a directory (non-recursive).
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

}  // namespace cdcn
