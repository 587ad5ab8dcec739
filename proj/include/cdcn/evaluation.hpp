#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cdcn/image.hpp"
#include "cdcn/kernels.hpp"
#include "cdcn/model.hpp"

namespace cdcn {

// Maps an LR image to an SR image of scale x its size.
using Upscaler = std::function<Image(const Image& lr)>;
using ComponentModel = std::function<ModelOutput(const Image& lr)>;

Upscaler bicubic_upscaler(int scale);
Upscaler model_upscaler(const ModelParams& params);
ComponentModel component_model(const ModelParams& params);

struct Dataset {
  std::vector<std::string> ids;  // file stems
  std::vector<Image> images;     // HR, 3 channels
};

// Loads every PNG in `dir` (sorted by name); gray images are replicated to RGB.
Dataset load_dataset(const std::filesystem::path& dir);

struct KernelCase {
  std::string id;
  Kernel kernel;
};

struct MetricRow {
  std::string image_id;
  std::string kernel_id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::string protocol;
  int scale = 0;
  int border = 0;
  std::vector<std::pair<std::string, std::string>> kernels;  // id -> description
  std::vector<MetricRow> rows;  // ordered by (image, kernel)
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void recompute_aggregate();
};

struct EvalOptions {
  int workers = 1;
};

// Scores every image against the kernels returned for it. HR images are
// center-cropped to a multiple of `scale`; LR and SR are quantized to 8 bit
// as if stored as PNG; PSNR/SSIM use Y with a `scale`-pixel border crop.
MetricReport evaluate_cases(const Upscaler& model, const Dataset& data, int scale,
                            const std::string& protocol,
                            const std::function<std::vector<KernelCase>(std::size_t image)>& kernels_for,
                            const EvalOptions& options = {});

// 8 isotropic widths per image (21x21 kernels).
MetricReport evaluate_gaussian8(const Upscaler& model, const Dataset& data, int scale,
                                const EvalOptions& options = {});

// One anisotropic kernel per image, drawn from seeds[i % seeds.size()].
MetricReport evaluate_anisotropic(const Upscaler& model, const Dataset& data, int scale,
                                  const std::vector<std::uint64_t>& seeds, const EvalOptions& options = {});
// Same protocol with explicit per-image specs (specs[i % specs.size()]).
MetricReport evaluate_anisotropic(const Upscaler& model, const Dataset& data, int scale,
                                  const std::vector<AnisoKernelSpec>& specs, const EvalOptions& options = {});

// Mean PSNR between predicted and true detail components per kernel width.
// Both are shifted by +0.5 before scoring (PSNR on Y, border = scale).
std::vector<double> component_psnr(const ComponentModel& model, const Dataset& data, int scale,
                                   const std::vector<double>& widths);

// Report file: one '#'-prefixed header line with protocol metadata, one
// "image_id,kernel_id,psnr,ssim" line per row, and a footer
// "mean,,<psnr>,<ssim>".
std::string format_report(const MetricReport& report);
MetricReport parse_report(const std::string& text);
void write_report(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report(const std::filesystem::path& path);

}  // namespace cdcn
