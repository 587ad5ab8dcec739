#include "cdcn/losses.hpp"

#include <cmath>

#include "cdcn/errors.hpp"

namespace cdcn {

double mean_abs_error(const Image& a, const Image& b) {
  require(a.same_shape(b), "loss: shape mismatch");
  auto va = a.values();
  auto vb = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += std::abs(va[i] - vb[i]);
  return acc / static_cast<double>(va.size());
}

double loss_structure(const Image& structure_hat, const Image& structure_label) {
  return mean_abs_error(structure_hat, structure_label);
}

double loss_detail(const Image& detail_hat, const Image& hr, const Kernel& k_g) {
  require(detail_hat.same_shape(hr), "loss: shape mismatch");
  return mean_abs_error(detail_hat, hr - blur(hr, k_g));
}

double loss_sr(const Image& sr, const Image& hr) { return mean_abs_error(sr, hr); }

LossTerms total_loss(const ModelOutput& output, const ComponentTriple& labels, const Image& hr,
                     const LossToggles& toggles) {
  require(toggles.any(), "at least one loss term must be enabled");
  LossTerms t;
  t.sr = loss_sr(output.sr, hr);
  if (output.structure_hat) t.structure = loss_structure(*output.structure_hat, labels.structure);
  if (output.detail_hat) t.detail = mean_abs_error(*output.detail_hat, labels.detail);
  t.total = (toggles.structure ? t.structure : 0.0) + (toggles.detail ? t.detail : 0.0) +
            (toggles.sr ? t.sr : 0.0);
  return t;
}

}  // namespace cdcn
