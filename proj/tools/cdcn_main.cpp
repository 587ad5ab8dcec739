// cdcn command-line tool.
//
// Exit codes: 0 success, 1 I/O or other runtime failure, 2 usage/validation,
// 3 numerical failure, 4 artifact mismatch.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdcn/checkpoint.hpp"
#include "cdcn/degradation.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/evaluation.hpp"
#include "cdcn/io.hpp"
#include "cdcn/kernels.hpp"
#include "cdcn/model.hpp"
#include "cdcn/training.hpp"

namespace fs = std::filesystem;
using namespace cdcn;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitArtifact = 4;

struct KernelFlags {
  std::string file;
  std::string type;
  std::optional<double> width;
  std::optional<int> size;
  std::optional<double> l1, l2, theta;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void add_to(CLI::App* cmd, bool allow_file) {
    if (allow_file) cmd->add_option("--kernel", file, "Kernel text file");
    cmd->add_option("--type", type, "iso | aniso")->check(CLI::IsMember({"iso", "aniso"}));
    cmd->add_option("--width", width, "Isotropic Gaussian width (sigma)");
    cmd->add_option("--size", size, "Kernel side length (odd)");
    cmd->add_option("--l1", l1, "Anisotropic sigma along axis 1");
    cmd->add_option("--l2", l2, "Anisotropic sigma along axis 2");
    cmd->add_option("--theta", theta, "Rotation angle in radians");
    cmd->add_option("--noise", noise, "Multiplicative noise level");
    cmd->add_option("--seed", seed, "Noise seed");
  }

  bool given() const { return !file.empty() || !type.empty() || width.has_value(); }

  // Checks flag consistency without touching the filesystem.
  void validate() const {
    if (!file.empty()) {
      require(type.empty() && !width && !l1 && !l2, "--kernel cannot be combined with an inline kernel spec");
      return;
    }
    const std::string t = type.empty() && width ? "iso" : type;
    if (t == "iso") {
      require(width.has_value(), "--type iso requires --width");
      require(!l1 && !l2 && !theta, "--l1/--l2/--theta apply to --type aniso only");
    } else if (t == "aniso") {
      require(l1 && l2 && theta, "--type aniso requires --l1, --l2 and --theta");
      require(!width, "--width applies to --type iso only");
    } else {
      throw ValidationError("a kernel is required: --kernel FILE or --type iso|aniso with parameters");
    }
  }

  Kernel build() const {
    validate();
    if (!file.empty()) return read_kernel(file);
    if (l1) {
      AnisoKernelSpec spec{*l1, *l2, *theta, noise, seed};
      if (size) spec.size = *size;
      return make_anisotropic_gaussian(spec);
    }
    IsoKernelSpec spec{*width};
    if (size) spec.size = *size;
    return make_isotropic_gaussian(spec);
  }
};

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  require(img.channels() == 1, "expected a gray or RGB image");
  Image rgb(img.height(), img.width(), 3);
  for (int c = 0; c < 3; ++c) std::copy(img.plane(0).begin(), img.plane(0).end(), rgb.plane(c).begin());
  return rgb;
}

Image crop_with_warning(const Image& hr, int scale) {
  if (hr.height() % scale == 0 && hr.width() % scale == 0) return hr;
  Image cropped = center_crop_to_multiple(hr, scale);
  std::cerr << "warning: cropping " << hr.height() << "x" << hr.width() << " to " << cropped.height() << "x"
            << cropped.width() << " so both sides divide by " << scale << "\n";
  return cropped;
}

Image hconcat(const std::vector<Image>& tiles) {
  int h = 0, w = 0;
  for (const Image& t : tiles) {
    h = std::max(h, t.height());
    w += t.width();
  }
  Image out(h, w, 3, 0.0);
  int x0 = 0;
  for (const Image& t : tiles) {
    const Image rgb = to_rgb(t);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) out.at(y, x0 + x, c) = rgb.at(y, x, c);
    x0 += t.width();
  }
  return out;
}

Image vconcat(const Image& top, const Image& bottom) {
  Image out(top.height() + bottom.height(), std::max(top.width(), bottom.width()), 3, 0.0);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < top.height(); ++y)
      for (int x = 0; x < top.width(); ++x) out.at(y, x, c) = top.at(y, x, c);
    for (int y = 0; y < bottom.height(); ++y)
      for (int x = 0; x < bottom.width(); ++x) out.at(top.height() + y, x, c) = bottom.at(y, x, c);
  }
  return out;
}

// ---- kernel ----------------------------------------------------------------

struct KernelCmd {
  KernelFlags k;
  std::string out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("kernel", "Build a blur kernel and write it in text form");
    k.add_to(cmd, false);
    cmd->add_option("--out", out, "Output kernel file");
    cmd->callback([this] { run(); });
  }

  void run() {
    require(!k.type.empty(), "--type is required");
    k.validate();
    const Kernel kernel = k.build();
    if (!out.empty()) {
      ensure_dir(fs::path(out).parent_path());
      write_kernel(out, kernel);
    } else {
      std::cout << format_kernel(kernel);
    }
    std::cout << std::setprecision(12) << "sum " << kernel.sum() << "\ncenter " << kernel.center() << "\n";
  }
};

// ---- degrade ---------------------------------------------------------------

struct DegradeCmd {
  KernelFlags k;
  std::string hr_path, out;
  int scale = 0;
  bool float_out = false;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("degrade", "Synthesize an LR image from an HR image");
    cmd->add_option("--hr", hr_path, "HR PNG")->required();
    k.add_to(cmd, true);
    cmd->add_option("--scale", scale, "Scale factor")->required()->check(CLI::Range(1, 8));
    cmd->add_option("--out", out, "Output LR PNG")->required();
    cmd->add_flag("--float-out", float_out, "Also write a lossless .f32 array");
    cmd->callback([this] { run(); });
  }

  void run() {
    k.validate();
    const Kernel kernel = k.build();
    const Image hr = crop_with_warning(read_png(hr_path), scale);
    const Image lr = degrade(hr, kernel, DegradationConfig{scale});
    ensure_dir(fs::path(out).parent_path());
    write_png(out, lr);
    if (float_out) write_f32(fs::path(out).replace_extension(".f32"), lr);
    std::cout << "wrote " << out << " (" << lr.height() << "x" << lr.width() << ")\n";
  }
};

// ---- labels ----------------------------------------------------------------

struct LabelsCmd {
  KernelFlags k;
  std::string hr_path, out;
  int scale = 0;
  bool float_out = false;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("labels", "Write structure, detail and LR labels for an HR image");
    cmd->add_option("--hr", hr_path, "HR PNG")->required();
    k.add_to(cmd, true);
    cmd->add_option("--scale", scale, "Scale factor")->required()->check(CLI::Range(1, 8));
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_flag("--float-out", float_out, "Also write lossless .f32 arrays (detail unshifted)");
    cmd->callback([this] { run(); });
  }

  void run() {
    k.validate();
    const Kernel kernel = k.build();
    const Image hr = crop_with_warning(read_png(hr_path), scale);
    const ComponentTriple t = decompose_labels(hr, kernel, DegradationConfig{scale});
    const fs::path dir(out);
    ensure_dir(dir);
    const std::string stem = fs::path(hr_path).stem().string();
    write_png(dir / (stem + "_s.png"), t.structure);
    write_png(dir / (stem + "_d.png"), shift_for_display(t.detail));
    write_png(dir / (stem + "_lr.png"), t.lr);
    if (float_out) {
      write_f32(dir / (stem + "_s.f32"), t.structure);
      write_f32(dir / (stem + "_d.f32"), t.detail);
      write_f32(dir / (stem + "_lr.f32"), t.lr);
    }
    std::cout << "wrote " << stem << "_{s,d,lr} to " << dir.string() << "\n";
  }
};

// ---- train -----------------------------------------------------------------

struct TrainCmd {
  std::string config, data, out, resume;
  std::vector<std::string> overrides;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train a model");
    cmd->add_option("--config", config, "Config file")->required();
    cmd->add_option("--data", data, "Directory of HR PNGs")->required();
    cmd->add_option("--out", out, "Run directory")->required();
    cmd->add_option("--set", overrides, "key=value override (repeatable)");
    cmd->add_option("--resume", resume, "Resume from a .state file");
    cmd->callback([this] { run(); });
  }

  void run() {
    TrainConfig cfg = load_train_config(config);
    std::cout << "config file: " << config << "\n";
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      require(eq != std::string::npos, "--set expects key=value, got '" + kv + "'");
      apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      std::cout << "override: " << kv << "\n";
    }
    cfg.model.scale = cfg.scale;
    cfg.validate();
    require(fs::is_directory(data), "data directory " + data + " does not exist");
    std::cout << "resolved config:\n" << format_train_config(cfg) << std::flush;

    TrainOptions options;
    if (!resume.empty()) options.resume_from = resume;
    options.on_step = [&cfg](long iter, const StepResult& r) {
      if (iter == 1 || iter % 100 == 0 || iter == cfg.total_iters)
        std::cout << "iter " << iter << " loss " << r.loss.total << " lr " << r.lr << "\n";
    };
    const TrainSummary summary = train(cfg, fs::path(data), out, options);
    std::cout << "ran " << summary.iterations_run << " iterations; " << summary.checkpoints.size()
              << " checkpoints in " << out << "\n";
  }
};

// ---- eval ------------------------------------------------------------------

struct EvalCmd {
  std::string checkpoint, baseline, protocol, data, out;
  std::optional<int> scale;
  std::vector<std::uint64_t> seeds;
  int workers = 1;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Benchmark a model or baseline");
    auto* ck = cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
    auto* bl = cmd->add_option("--baseline", baseline, "Baseline upscaler (bicubic)");
    ck->excludes(bl);
    cmd->add_option("--protocol", protocol, "gaussian8 | anisotropic")->required();
    cmd->add_option("--data", data, "Directory of HR PNGs")->required();
    cmd->add_option("--scale", scale, "Scale factor");
    cmd->add_option("--out", out, "Report file");
    cmd->add_option("--seeds", seeds, "Anisotropic kernel seeds (default: image index)");
    cmd->add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);
    cmd->callback([this] { run(); });
  }

  void run() {
    require(protocol == "gaussian8" || protocol == "anisotropic", "unknown protocol '" + protocol + "'");
    require(!checkpoint.empty() || !baseline.empty(), "need --checkpoint or --baseline");
    if (!baseline.empty()) {
      require(baseline == "bicubic", "unknown baseline '" + baseline + "'");
      require(scale.has_value(), "--baseline requires --scale");
    }
    require(!scale || (*scale >= 1 && *scale <= 8), "--scale must be in [1, 8]");

    std::optional<ModelParams> params;
    int s = scale.value_or(0);
    if (!checkpoint.empty()) {
      params = load_checkpoint(checkpoint);
      const int model_scale = params->config().scale;
      if (scale && *scale != model_scale)
        throw ArtifactMismatch("checkpoint was trained for x" + std::to_string(model_scale) + " but --scale is " +
                               std::to_string(*scale));
      s = model_scale;
    }
    const Upscaler up = params ? model_upscaler(*params) : bicubic_upscaler(s);
    const Dataset ds = load_dataset(data);
    const EvalOptions opts{workers};

    MetricReport report;
    if (protocol == "gaussian8") {
      report = evaluate_gaussian8(up, ds, s, opts);
    } else {
      std::vector<std::uint64_t> use = seeds;
      if (use.empty())
        for (std::size_t i = 0; i < ds.images.size(); ++i) use.push_back(i);
      report = evaluate_anisotropic(up, ds, s, use, opts);
    }
    if (!out.empty()) {
      ensure_dir(fs::path(out).parent_path());
      write_report(out, report);
    }
    std::cout << std::fixed << std::setprecision(4) << protocol << " x" << s << " images=" << ds.images.size()
              << " rows=" << report.rows.size() << " psnr=" << report.mean_psnr << " ssim=" << report.mean_ssim
              << "\n";
  }
};

// ---- decompose -------------------------------------------------------------

struct DecomposeCmd {
  KernelFlags k;
  std::string checkpoint, lr_path, hr_path, out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("decompose", "Dump predicted structure/detail components and SR");
    cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    auto* lr = cmd->add_option("--lr", lr_path, "LR PNG");
    auto* hr = cmd->add_option("--hr", hr_path, "HR PNG (LR is synthesized with the given kernel)");
    lr->excludes(hr);
    k.add_to(cmd, true);
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() {
    require(!lr_path.empty() || !hr_path.empty(), "need --lr or --hr");
    if (!hr_path.empty()) k.validate();
    else require(!k.given(), "kernel flags apply only with --hr");
    require(fs::exists(checkpoint), "checkpoint " + checkpoint + " does not exist");

    const ModelParams params = load_checkpoint(checkpoint);
    const int scale = params.config().scale;
    const fs::path dir(out);
    ensure_dir(dir);

    std::optional<ComponentTriple> labels;
    Image lr;
    std::string stem;
    if (!hr_path.empty()) {
      const Image hr = crop_with_warning(to_rgb(read_png(hr_path)), scale);
      labels = decompose_labels(hr, k.build(), DegradationConfig{scale});
      lr = quantize_8bit(labels->lr);
      stem = fs::path(hr_path).stem().string();
    } else {
      lr = to_rgb(read_png(lr_path));
      stem = fs::path(lr_path).stem().string();
    }

    const ModelOutput o = cdcn_forward(lr, params);
    write_png(dir / (stem + "_sr.png"), o.sr);
    std::vector<Image> predicted{o.sr};
    if (o.structure_hat) {
      write_png(dir / (stem + "_s_hat.png"), *o.structure_hat);
      write_png(dir / (stem + "_d_hat.png"), shift_for_display(*o.detail_hat));
      predicted.push_back(*o.structure_hat);
      predicted.push_back(shift_for_display(*o.detail_hat));
    } else {
      std::cerr << "note: " << to_string(params.config().ablation) << " model has no component outputs\n";
    }
    if (labels) {
      const Image hr = labels->structure + labels->detail;
      write_png(dir / (stem + "_s.png"), labels->structure);
      write_png(dir / (stem + "_d.png"), shift_for_display(labels->detail));
      write_png(dir / (stem + "_lr.png"), labels->lr);
      std::vector<Image> truth{hr};
      if (o.structure_hat) {
        truth.push_back(labels->structure);
        truth.push_back(shift_for_display(labels->detail));
      }
      write_png(dir / (stem + "_panel.png"), vconcat(hconcat(predicted), hconcat(truth)));
    } else {
      write_png(dir / (stem + "_panel.png"), hconcat(predicted));
    }
    std::cout << "wrote " << stem << " outputs (" << o.sr.height() << "x" << o.sr.width() << ") to "
              << dir.string() << "\n";
  }
};

// ---- params ----------------------------------------------------------------

struct ParamsCmd {
  ModelConfig cfg;
  std::string ablation = "full";

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("params", "Count learnable parameters");
    cmd->add_option("--groups", cfg.num_groups, "Residual groups (N)")->required();
    cmd->add_option("--blocks", cfg.blocks_per_group, "Blocks per group (M)")->required();
    cmd->add_option("--channels", cfg.channels, "Feature channels")->capture_default_str();
    cmd->add_option("--scale", cfg.scale, "Scale factor")->capture_default_str();
    cmd->add_option("--reduction", cfg.ca_reduction, "Channel-attention reduction")->capture_default_str();
    cmd->add_option("--ablation", ablation, "Network variant")->capture_default_str();
    cmd->callback([this] { run(); });
  }

  void run() {
    cfg.ablation = parse_ablation(ablation);
    cfg.validate();
    const std::size_t n = param_count(cfg);
    std::cout << n << "\n" << std::fixed << std::setprecision(2) << static_cast<double>(n) / 1e6 << "M\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Components-decomposition blind super-resolution toolkit"};
  app.require_subcommand(1);

  KernelCmd kernel_cmd;
  DegradeCmd degrade_cmd;
  LabelsCmd labels_cmd;
  TrainCmd train_cmd;
  EvalCmd eval_cmd;
  DecomposeCmd decompose_cmd;
  ParamsCmd params_cmd;
  kernel_cmd.add(app);
  degrade_cmd.add(app);
  labels_cmd.add(app);
  train_cmd.add(app);
  eval_cmd.add(app);
  decompose_cmd.add(app);
  params_cmd.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ArtifactMismatch& e) {
    std::cerr << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
