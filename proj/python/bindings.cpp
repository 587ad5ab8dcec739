#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cdcn/checkpoint.hpp"
#include "cdcn/degradation.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/evaluation.hpp"
#include "cdcn/io.hpp"
#include "cdcn/kernels.hpp"
#include "cdcn/metrics.hpp"
#include "cdcn/model.hpp"
#include "cdcn/training.hpp"

namespace py = pybind11;
using namespace cdcn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) arrays <-> planar images.
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ValidationError("expected an (H, W) or (H, W, C) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(h, w, c);
  auto r = a.unchecked();
  const double* p = r.data(0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(y, x, k) = p[(static_cast<std::size_t>(y) * w + x) * c + k];
  return img;
}

Array to_array(const Image& img) {
  Array a({img.height(), img.width(), img.channels()});
  double* p = a.mutable_data();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int k = 0; k < img.channels(); ++k)
        p[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + k] = img.at(y, x, k);
  return a;
}

Array kernel_to_array(const Kernel& k) {
  Array a({k.size(), k.size()});
  std::copy(k.values().begin(), k.values().end(), a.mutable_data());
  return a;
}

Kernel array_to_kernel(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ValidationError("kernel must be a square 2-D array");
  const int n = static_cast<int>(a.shape(0));
  return Kernel::from_signed(n, std::vector<double>(a.data(), a.data() + a.size()), "array");
}

ModelConfig make_config(int groups, int blocks, int channels, int scale, int reduction, const std::string& ablation) {
  ModelConfig cfg;
  cfg.num_groups = groups;
  cfg.blocks_per_group = blocks;
  cfg.channels = channels;
  cfg.scale = scale;
  cfg.ca_reduction = reduction;
  cfg.ablation = parse_ablation(ablation);
  cfg.validate();
  return cfg;
}

py::dict report_to_dict(const MetricReport& r) {
  py::list rows;
  for (const MetricRow& row : r.rows) rows.append(py::make_tuple(row.image_id, row.kernel_id, row.psnr, row.ssim));
  py::dict d;
  d["protocol"] = r.protocol;
  d["scale"] = r.scale;
  d["rows"] = rows;
  d["mean_psnr"] = r.mean_psnr;
  d["mean_ssim"] = r.mean_ssim;
  return d;
}

}  // namespace

PYBIND11_MODULE(pycdcn, m) {
  m.doc() = "Blind super-resolution by structure/detail decomposition";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ArtifactMismatch>(m, "ArtifactMismatch", PyExc_IOError);

  m.def("isotropic_gaussian", [](double width, int size) {
    return kernel_to_array(make_isotropic_gaussian({width, size}));
  }, py::arg("width"), py::arg("size") = 21);
  m.def("anisotropic_gaussian", [](double l1, double l2, double theta, double noise, std::uint64_t seed, int size) {
    return kernel_to_array(make_anisotropic_gaussian({l1, l2, theta, noise, seed, size}));
  }, py::arg("l1"), py::arg("l2"), py::arg("theta"), py::arg("noise") = 0.0, py::arg("seed") = 0,
     py::arg("size") = 11);
  m.def("bicubic_kernel", [](int scale) { return kernel_to_array(make_bicubic_kernel(scale)); }, py::arg("scale"));
  m.def("gaussian8_widths", &gaussian8_widths, py::arg("scale"));

  m.def("degrade", [](const Array& hr, const Array& kernel, int scale) {
    return to_array(degrade(to_image(hr), array_to_kernel(kernel), DegradationConfig{scale}));
  }, py::arg("hr"), py::arg("kernel"), py::arg("scale"));
  m.def("decompose_labels", [](const Array& hr, const Array& kernel, int scale) {
    const ComponentTriple t = decompose_labels(to_image(hr), array_to_kernel(kernel), DegradationConfig{scale});
    return py::make_tuple(to_array(t.structure), to_array(t.detail), to_array(t.lr));
  }, py::arg("hr"), py::arg("kernel"), py::arg("scale"), "Returns (structure, detail, lr).");
  m.def("bicubic_resize", [](const Array& img, int height, int width) {
    return to_array(bicubic_resize(to_image(img), height, width));
  }, py::arg("image"), py::arg("height"), py::arg("width"));

  m.def("psnr_y", [](const Array& a, const Array& b, int border) {
    return psnr_y(to_image(a), to_image(b), border);
  }, py::arg("a"), py::arg("b"), py::arg("border") = 0);
  m.def("ssim_y", [](const Array& a, const Array& b, int border) {
    return ssim_y(to_image(a), to_image(b), border);
  }, py::arg("a"), py::arg("b"), py::arg("border") = 0);

  m.def("param_count", [](int groups, int blocks, int channels, int scale, int reduction, const std::string& ablation) {
    return param_count(make_config(groups, blocks, channels, scale, reduction, ablation));
  }, py::arg("groups") = 5, py::arg("blocks") = 10, py::arg("channels") = 64, py::arg("scale") = 4,
     py::arg("reduction") = 16, py::arg("ablation") = "full");

  py::class_<ModelParams>(m, "Model")
      .def_static("create", [](int groups, int blocks, int channels, int scale, int reduction,
                               const std::string& ablation, std::uint64_t seed) {
        return ModelParams::initialize(make_config(groups, blocks, channels, scale, reduction, ablation), seed);
      }, py::arg("groups"), py::arg("blocks"), py::arg("channels"), py::arg("scale"), py::arg("reduction") = 16,
         py::arg("ablation") = "full", py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const ModelParams& self, const std::filesystem::path& p) { save_checkpoint(p, self); },
           py::arg("path"))
      .def_property_readonly("scale", [](const ModelParams& self) { return self.config().scale; })
      .def_property_readonly("num_params", [](const ModelParams& self) { return self.scalar_count(); })
      .def("__call__", [](const ModelParams& self, const Array& lr) {
        const Image input = to_image(lr);
        ModelOutput o;
        {
          py::gil_scoped_release release;
          o = cdcn_forward(input, self);
        }
        py::dict d;
        d["sr"] = to_array(o.sr);
        d["structure"] = o.structure_hat ? py::object(to_array(*o.structure_hat)) : py::none();
        d["detail"] = o.detail_hat ? py::object(to_array(*o.detail_hat)) : py::none();
        return d;
      }, py::arg("lr"), "Returns a dict with 'sr', 'structure' and 'detail' (None for single-path models).");

  m.def("train", [](const std::filesystem::path& config, const std::filesystem::path& data,
                    const std::filesystem::path& out, const std::map<std::string, std::string>& overrides) {
    TrainConfig cfg = load_train_config(config);
    for (const auto& [k, v] : overrides) apply_config_value(cfg, k, v);
    cfg.model.scale = cfg.scale;
    cfg.validate();
    py::gil_scoped_release release;
    const TrainSummary s = train(cfg, data, out);
    return s.checkpoints;
  }, py::arg("config"), py::arg("data"), py::arg("out"), py::arg("overrides") = std::map<std::string, std::string>{},
     "Runs training and returns the checkpoint paths.");

  m.def("evaluate_bicubic", [](const std::filesystem::path& data, int scale, const std::string& protocol) {
    const Dataset ds = load_dataset(data);
    if (protocol == "gaussian8") return report_to_dict(evaluate_gaussian8(bicubic_upscaler(scale), ds, scale));
    if (protocol != "anisotropic") throw ValidationError("unknown protocol '" + protocol + "'");
    std::vector<std::uint64_t> seeds(ds.images.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
    return report_to_dict(evaluate_anisotropic(bicubic_upscaler(scale), ds, scale, seeds));
  }, py::arg("data"), py::arg("scale"), py::arg("protocol") = "gaussian8");
}
