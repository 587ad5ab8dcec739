#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdcn/autograd.hpp"
#include "cdcn/image.hpp"

namespace cdcn {

// Network variants. `full` is the complete dual-path network; the MCB
// variants swap the block internals; `no_decomposition` is a single-path
// network of the same depth with only the SR head.
enum class Ablation { full, no_decomposition, no_collab, plain_block, fuse_concat, fuse_add };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view name);

struct ModelConfig {
  int num_groups = 5;
  int blocks_per_group = 10;
  int channels = 64;
  int scale = 4;
  double leaky_slope = 0.2;
  int ca_reduction = 16;
  Ablation ablation = Ablation::full;

  void validate() const;
  bool dual_path() const { return ablation != Ablation::no_decomposition; }
  bool operator==(const ModelConfig&) const = default;
};

// θ_s, θ_d, θ_f.
enum class Partition { structure, detail, fusion };
std::string_view to_string(Partition p);

struct ParamSpec {
  std::string name;
  nn::Shape shape;
  Partition partition = Partition::fusion;
  bool is_bias = false;
  int fan_in = 0;
};

// Every learned tensor in a deterministic order. Cheap; allocates no weights.
std::vector<ParamSpec> param_layout(const ModelConfig& cfg);
std::size_t param_count(const ModelConfig& cfg);

class ModelParams {
 public:
  // Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::size_t size() const { return tensors_.size(); }
  const ParamSpec& spec(std::size_t i) const { return specs_[i]; }
  nn::Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const nn::Tensor& tensor(std::size_t i) const { return tensors_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  nn::Tensor& operator[](const std::string& name) { return tensors_[index_of(name)]; }
  const nn::Tensor& operator[](const std::string& name) const { return tensors_[index_of(name)]; }

  std::size_t scalar_count() const;
  std::size_t scalar_count(Partition p) const;
  bool all_finite() const;

 private:
  explicit ModelParams(const ModelConfig& cfg);

  ModelConfig cfg_;
  std::vector<ParamSpec> specs_;
  std::vector<nn::Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Exposes a ModelParams set as autograd leaves for one forward pass.
class BoundParams {
 public:
  BoundParams(const ModelParams& params, bool requires_grad);

  const nn::Var& operator()(const std::string& name) const;
  const ModelConfig& config() const { return params_->config(); }
  const ModelParams& params() const { return *params_; }

  // Gradient of the last backward() for each tensor, zeros where unreached.
  std::vector<nn::Tensor> gradients() const;

 private:
  const ModelParams* params_;
  std::vector<nn::Var> leaves_;
};

struct FeaturePair {
  nn::Var structure;
  nn::Var detail;
};

// Building blocks, each mirroring one stage of the network. `prefix` names
// the parameter group (see param_layout for the naming scheme).
nn::Var conv(const nn::Var& x, const BoundParams& p, const std::string& prefix);
nn::Var shallow_extract(const nn::Var& lr, const BoundParams& p);
FeaturePair cdm_decompose(const nn::Var& f_in, const BoundParams& p);
FeaturePair mcb_forward(const FeaturePair& in, const BoundParams& p, const std::string& prefix);
FeaturePair rg_forward(const FeaturePair& in, const BoundParams& p, int group);
FeaturePair global_residual(const FeaturePair& deep, const nn::Var& f_in, const nn::Var& f_d0,
                            const BoundParams& p);
nn::Var msfm_forward(const FeaturePair& in, const BoundParams& p);
nn::Var upsample_head(const nn::Var& f, const BoundParams& p, const std::string& prefix);

struct ForwardResult {
  nn::Var sr;
  std::optional<nn::Var> structure_hat;
  std::optional<nn::Var> detail_hat;
  nn::Var shallow;             // F_in
  FeaturePair decomposed;      // (F_s^0, F_d^0); single path uses .structure
  FeaturePair after_residual;  // (F_s, F_d) after the global residual
};

ForwardResult forward(const nn::Var& lr, const BoundParams& p);

struct ModelOutput {
  Image sr;
  std::optional<Image> structure_hat;
  std::optional<Image> detail_hat;  // signed, unclamped
};

// Inference on one 3-channel LR image; records no graph.
ModelOutput cdcn_forward(const Image& lr, const ModelParams& params);

}  // namespace cdcn
