#include "cdcn/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "cdcn/degradation.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/io.hpp"
#include "cdcn/metrics.hpp"

namespace cdcn {

namespace fs = std::filesystem;

Upscaler bicubic_upscaler(int scale) {
  require(scale >= 1, "scale must be >= 1");
  return [scale](const Image& lr) {
    return bicubic_resize(lr, lr.height() * scale, lr.width() * scale);
  };
}

Upscaler model_upscaler(const ModelParams& params) {
  return [&params](const Image& lr) { return cdcn_forward(lr, params).sr; };
}

ComponentModel component_model(const ModelParams& params) {
  return [&params](const Image& lr) { return cdcn_forward(lr, params); };
}

Dataset load_dataset(const fs::path& dir) {
  Dataset data;
  for (const fs::path& file : list_png_files(dir)) {
    Image img = read_png(file);
    if (img.channels() == 1) {
      Image rgb(img.height(), img.width(), 3);
      for (int c = 0; c < 3; ++c) std::copy(img.plane(0).begin(), img.plane(0).end(), rgb.plane(c).begin());
      img = std::move(rgb);
    }
    data.ids.push_back(file.stem().string());
    data.images.push_back(std::move(img));
  }
  require(!data.images.empty(), "dataset " + dir.string() + " contains no PNG images");
  return data;
}

void MetricReport::recompute_aggregate() {
  double p = 0.0, s = 0.0;
  for (const MetricRow& r : rows) {
    p += r.psnr;
    s += r.ssim;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  mean_psnr = p / n;
  mean_ssim = s / n;
}

MetricReport evaluate_cases(const Upscaler& model, const Dataset& data, int scale, const std::string& protocol,
                            const std::function<std::vector<KernelCase>(std::size_t)>& kernels_for,
                            const EvalOptions& options) {
  require(!data.images.empty(), "empty dataset");
  require(data.ids.size() == data.images.size(), "dataset ids and images differ in length");
  MetricReport report;
  report.protocol = protocol;
  report.scale = scale;
  report.border = scale;

  const std::size_t count = data.images.size();
  std::vector<std::vector<KernelCase>> cases(count);
  for (std::size_t i = 0; i < count; ++i) {
    cases[i] = kernels_for(i);
    for (const KernelCase& kc : cases[i]) {
      const bool seen = std::any_of(report.kernels.begin(), report.kernels.end(),
                                    [&](const auto& k) { return k.first == kc.id; });
      if (!seen) report.kernels.emplace_back(kc.id, kc.kernel.description());
    }
  }

  std::vector<std::vector<MetricRow>> per_image(count);
  auto run_image = [&](std::size_t i) {
    const Image hr = center_crop_to_multiple(data.images[i], scale);
    for (const KernelCase& kc : cases[i]) {
      const Image lr = quantize_8bit(degrade(hr, kc.kernel, DegradationConfig{scale}));
      const Image sr = model(lr);
      require(sr.same_shape(hr), "model output size does not match the HR image");
      const Image sr8 = quantize_8bit(sr);
      per_image[i].push_back({data.ids[i], kc.id, psnr_y(sr8, hr, scale), ssim_y(sr8, hr, scale)});
    }
  };

  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) run_image(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= count || failure) return;
            i = next++;
          }
          try {
            run_image(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (auto& rows : per_image)
    for (MetricRow& r : rows) report.rows.push_back(std::move(r));
  report.recompute_aggregate();
  return report;
}

MetricReport evaluate_gaussian8(const Upscaler& model, const Dataset& data, int scale, const EvalOptions& options) {
  const auto widths = gaussian8_widths(scale);
  std::vector<KernelCase> cases;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    cases.push_back({"g" + std::to_string(k), make_isotropic_gaussian({widths[k], 21})});
  }
  return evaluate_cases(model, data, scale, "gaussian8", [&](std::size_t) { return cases; }, options);
}

MetricReport evaluate_anisotropic(const Upscaler& model, const Dataset& data, int scale,
                                  const std::vector<AnisoKernelSpec>& specs, const EvalOptions& options) {
  require(!specs.empty(), "need at least one anisotropic kernel spec");
  return evaluate_cases(
      model, data, scale, "anisotropic",
      [&](std::size_t i) {
        const std::size_t k = i % specs.size();
        return std::vector<KernelCase>{{"a" + std::to_string(k), make_anisotropic_gaussian(specs[k])}};
      },
      options);
}

MetricReport evaluate_anisotropic(const Upscaler& model, const Dataset& data, int scale,
                                  const std::vector<std::uint64_t>& seeds, const EvalOptions& options) {
  require(!seeds.empty(), "need at least one kernel seed");
  std::vector<AnisoKernelSpec> specs;
  for (std::uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    specs.push_back(draw_anisotropic_spec(rng));
  }
  return evaluate_anisotropic(model, data, scale, specs, options);
}

std::vector<double> component_psnr(const ComponentModel& model, const Dataset& data, int scale,
                                   const std::vector<double>& widths) {
  require(!data.images.empty(), "empty dataset");
  std::vector<double> curve;
  for (double width : widths) {
    const Kernel k = make_isotropic_gaussian({width, 21});
    double total = 0.0;
    for (const Image& img : data.images) {
      const Image hr = center_crop_to_multiple(img, scale);
      const ComponentTriple labels = decompose_labels(hr, k, DegradationConfig{scale});
      const ModelOutput out = model(labels.lr);
      if (!out.detail_hat) throw ValidationError("model does not produce a detail component");
      total += psnr_y(shift_for_display(*out.detail_hat), shift_for_display(labels.detail), scale);
    }
    curve.push_back(total / static_cast<double>(data.images.size()));
  }
  return curve;
}

std::string format_report(const MetricReport& report) {
  std::ostringstream os;
  os << "#protocol=" << report.protocol << ";scale=" << report.scale << ";border=" << report.border
     << ";metric=Y;kernels=";
  for (std::size_t i = 0; i < report.kernels.size(); ++i) {
    if (i) os << '|';
    os << report.kernels[i].first << '=' << report.kernels[i].second;
  }
  os << '\n' << std::setprecision(10);
  for (const MetricRow& r : report.rows)
    os << r.image_id << ',' << r.kernel_id << ',' << r.psnr << ',' << r.ssim << '\n';
  os << "mean,," << report.mean_psnr << ',' << report.mean_ssim << '\n';
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

MetricReport parse_report(const std::string& text) try {
  MetricReport report;
  std::istringstream is(text);
  std::string line;
  bool footer = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      for (const std::string& field : split(line.substr(1), ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "protocol") report.protocol = value;
        else if (key == "scale") report.scale = std::stoi(value);
        else if (key == "border") report.border = std::stoi(value);
        else if (key == "kernels" && !value.empty()) {
          for (const std::string& k : split(value, '|')) {
            const auto keq = k.find('=');
            report.kernels.emplace_back(k.substr(0, keq), keq == std::string::npos ? "" : k.substr(keq + 1));
          }
        }
      }
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw ArtifactMismatch("malformed report line: " + line);
    if (cols[0] == "mean" && cols[1].empty()) {
      report.mean_psnr = std::stod(cols[2]);
      report.mean_ssim = std::stod(cols[3]);
      footer = true;
      continue;
    }
    report.rows.push_back({cols[0], cols[1], std::stod(cols[2]), std::stod(cols[3])});
  }
  if (!footer) throw ArtifactMismatch("report has no aggregate footer");
  return report;
} catch (const std::logic_error& e) {  // stoi / stod
  throw ArtifactMismatch(std::string("unreadable number in report: ") + e.what());
}

void write_report(const fs::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_report(report);
}

MetricReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactMismatch("cannot open report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

}  // namespace cdcn
