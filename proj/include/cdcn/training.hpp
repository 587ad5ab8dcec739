#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cdcn/degradation.hpp"
#include "cdcn/losses.hpp"
#include "cdcn/model.hpp"

namespace cdcn {

enum class KernelMode { isotropic, anisotropic };

struct TrainConfig {
  int scale = 4;
  int patch_size = 64;  // LR patch side; the HR crop is patch_size * scale
  int batch_size = 16;
  long total_iters = 20000;
  double lr_init = 2e-4;
  long lr_halve_every = 5000;
  KernelMode kernel_mode = KernelMode::isotropic;
  double width_low = 0.2;  // width_range
  double width_high = 4.0;
  LossToggles loss_toggles;
  std::uint64_t seed = 0;
  long checkpoint_every = 1000;
  int iso_kernel_size = 21;
  int aniso_kernel_size = 11;
  double aniso_noise = 0.25;
  // Architecture (scale is kept in sync with `scale` above).
  ModelConfig model{2, 4, 32, 4, 0.2, 8, Ablation::full};

  void validate() const;
  int kernel_size() const {
    return kernel_mode == KernelMode::isotropic ? iso_kernel_size : aniso_kernel_size;
  }
};

// Flat "key = value" text; '#' starts a comment. Keys are the field names
// above plus the model fields (num_groups, blocks_per_group, channels,
// ca_reduction, leaky_slope, ablation). width_range takes two numbers and
// loss_toggles a list drawn from {structure, detail, sr}.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string format_train_config(const TrainConfig& cfg);

struct TrainingSample {
  Image hr;      // augmented HR crop
  Kernel kernel;
  ComponentTriple labels;
  int augmentation = 0;  // dihedral index in [0, 8)
};

// Random crop + flip/rot90 + one freshly drawn blur kernel per patch.
TrainingSample sample_patch(std::span<const Image> pool, const TrainConfig& cfg,
                            std::mt19937_64& rng);

double lr_schedule(long iter, const TrainConfig& cfg);

struct TrainState {
  ModelParams params;
  std::vector<nn::Tensor> first_moment;
  std::vector<nn::Tensor> second_moment;
  long iter = 0;
  std::mt19937_64 rng;
};

TrainState init_train_state(const TrainConfig& cfg);

struct LossAndGradients {
  LossTerms loss;
  std::vector<nn::Tensor> gradients;  // parallel to ModelParams tensors
};

// Forward + backward of the summed loss on a batch without updating.
LossAndGradients loss_and_gradients(const ModelParams& params, std::span<const TrainingSample> batch,
                                    const LossToggles& toggles);
LossTerms batch_loss(const ModelParams& params, std::span<const TrainingSample> batch,
                     const LossToggles& toggles);

struct StepResult {
  LossTerms loss;
  double lr = 0.0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.99;
inline constexpr double kAdamEpsilon = 1e-8;

// One Adam step at lr_schedule(state.iter); throws NumericalError on a
// non-finite loss without touching the state.
StepResult train_step(TrainState& state, std::span<const TrainingSample> batch, const TrainConfig& cfg);

// Full optimizer state including rng; used for exact resumption.
void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path, const ModelConfig& expected);

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;  // a state file
  std::function<void(long iter, const StepResult&)> on_step;
};

struct TrainSummary {
  long iterations_run = 0;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path loss_log;
};

std::vector<Image> load_training_pool(const std::filesystem::path& data_dir);

// Writes checkpoint_<iter>.cdcn / state_<iter>.state every checkpoint_every
// iterations (and at iteration 0 and the last one) and appends
// "iter total L_structure L_detail L_SR lr" lines to loss.log.
TrainSummary train(const TrainConfig& cfg, std::span<const Image> pool,
                   const std::filesystem::path& out_dir, const TrainOptions& options = {});
TrainSummary train(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                   const std::filesystem::path& out_dir, const TrainOptions& options = {});

}  // namespace cdcn
