#pragma once

#include "cdcn/degradation.hpp"
#include "cdcn/image.hpp"
#include "cdcn/kernels.hpp"
#include "cdcn/model.hpp"

namespace cdcn {

struct LossToggles {
  bool structure = true;
  bool detail = true;
  bool sr = true;

  bool any() const { return structure || detail || sr; }
  bool operator==(const LossToggles&) const = default;
};

struct LossTerms {
  double structure = 0.0;
  double detail = 0.0;
  double sr = 0.0;
  double total = 0.0;
};

// All losses are mean absolute errors over every element.
double mean_abs_error(const Image& a, const Image& b);
double loss_structure(const Image& structure_hat, const Image& structure_label);
// Detail label is recomputed as hr - hr (x) k_g.
double loss_detail(const Image& detail_hat, const Image& hr, const Kernel& k_g);
double loss_sr(const Image& sr, const Image& hr);

// Unweighted sum of the enabled terms. `labels` are the HR-resolution labels
// of decompose_labels. Terms for outputs the model does not emit are 0.
LossTerms total_loss(const ModelOutput& output, const ComponentTriple& labels, const Image& hr,
                     const LossToggles& toggles);

}  // namespace cdcn
