#include "cdcn/training.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdcn/checkpoint.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/io.hpp"

namespace cdcn {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);  // accepts 5e5
    if (used == value.size() && v == std::floor(v)) return static_cast<long>(v);
  } catch (const std::exception&) {
  }
  throw ValidationError("bad integer for " + key + ": '" + value + "'");
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("bad number for " + key + ": '" + value + "'");
}

constexpr std::uint64_t kRngStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  require(model.scale == scale, "model scale must equal training scale");
  require(patch_size >= 1, "patch_size must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_iters >= 0, "total_iters must be >= 0");
  require(lr_init > 0.0, "lr_init must be > 0");
  require(lr_halve_every >= 1, "lr_halve_every must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(loss_toggles.any(), "at least one of loss_toggles must be enabled");
  require(model.dual_path() || (!loss_toggles.structure && !loss_toggles.detail),
          "no_decomposition has no structure/detail outputs; enable only the sr loss");
  require(patch_size * scale > kernel_size(), "HR patch must be larger than the blur kernel");
  if (kernel_mode == KernelMode::isotropic) {
    require(width_low > 0.0 && width_low <= width_high, "width_range must satisfy 0 < low <= high");
  } else {
    require(aniso_noise >= 0.0 && aniso_noise <= kMaxKernelNoise, "aniso_noise must lie in [0, 0.25]");
  }
}

void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "scale") {
    cfg.scale = static_cast<int>(parse_long(key, value));
    cfg.model.scale = cfg.scale;
  } else if (key == "patch_size") cfg.patch_size = static_cast<int>(parse_long(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(key, value));
  else if (key == "total_iters") cfg.total_iters = parse_long(key, value);
  else if (key == "lr_init") cfg.lr_init = parse_real(key, value);
  else if (key == "lr_halve_every") cfg.lr_halve_every = parse_long(key, value);
  else if (key == "kernel_mode") {
    if (value == "isotropic") cfg.kernel_mode = KernelMode::isotropic;
    else if (value == "anisotropic") cfg.kernel_mode = KernelMode::anisotropic;
    else throw ValidationError("kernel_mode must be isotropic or anisotropic");
  } else if (key == "width_range") {
    std::istringstream is(value);
    std::string lo, hi, extra;
    if (!(is >> lo >> hi) || (is >> extra)) throw ValidationError("width_range needs two numbers");
    cfg.width_low = parse_real(key, lo);
    cfg.width_high = parse_real(key, hi);
  } else if (key == "loss_toggles") {
    LossToggles t{false, false, false};
    std::istringstream is(value);
    std::string term;
    while (is >> term) {
      if (term == "structure") t.structure = true;
      else if (term == "detail") t.detail = true;
      else if (term == "sr") t.sr = true;
      else if (term != "none") throw ValidationError("unknown loss term '" + term + "'");
    }
    cfg.loss_toggles = t;
  } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_long(key, value);
  else if (key == "iso_kernel_size") cfg.iso_kernel_size = static_cast<int>(parse_long(key, value));
  else if (key == "aniso_kernel_size") cfg.aniso_kernel_size = static_cast<int>(parse_long(key, value));
  else if (key == "aniso_noise") cfg.aniso_noise = parse_real(key, value);
  else if (key == "num_groups") cfg.model.num_groups = static_cast<int>(parse_long(key, value));
  else if (key == "blocks_per_group") cfg.model.blocks_per_group = static_cast<int>(parse_long(key, value));
  else if (key == "channels") cfg.model.channels = static_cast<int>(parse_long(key, value));
  else if (key == "ca_reduction") cfg.model.ca_reduction = static_cast<int>(parse_long(key, value));
  else if (key == "leaky_slope") cfg.model.leaky_slope = parse_real(key, value);
  else if (key == "ablation") cfg.model.ablation = parse_ablation(value);
  else throw ValidationError("unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream os;
  std::string toggles;
  if (cfg.loss_toggles.structure) toggles += " structure";
  if (cfg.loss_toggles.detail) toggles += " detail";
  if (cfg.loss_toggles.sr) toggles += " sr";
  os << "scale = " << cfg.scale << '\n'
     << "patch_size = " << cfg.patch_size << '\n'
     << "batch_size = " << cfg.batch_size << '\n'
     << "total_iters = " << cfg.total_iters << '\n'
     << "lr_init = " << shortest(cfg.lr_init) << '\n'
     << "lr_halve_every = " << cfg.lr_halve_every << '\n'
     << "kernel_mode = " << (cfg.kernel_mode == KernelMode::isotropic ? "isotropic" : "anisotropic") << '\n'
     << "width_range = " << shortest(cfg.width_low) << ' ' << shortest(cfg.width_high) << '\n'
     << "loss_toggles =" << (toggles.empty() ? " none" : toggles) << '\n'
     << "seed = " << cfg.seed << '\n'
     << "checkpoint_every = " << cfg.checkpoint_every << '\n'
     << "iso_kernel_size = " << cfg.iso_kernel_size << '\n'
     << "aniso_kernel_size = " << cfg.aniso_kernel_size << '\n'
     << "aniso_noise = " << shortest(cfg.aniso_noise) << '\n'
     << "num_groups = " << cfg.model.num_groups << '\n'
     << "blocks_per_group = " << cfg.model.blocks_per_group << '\n'
     << "channels = " << cfg.model.channels << '\n'
     << "ca_reduction = " << cfg.model.ca_reduction << '\n'
     << "leaky_slope = " << shortest(cfg.model.leaky_slope) << '\n'
     << "ablation = " << to_string(cfg.model.ablation) << '\n';
  return os.str();
}

TrainingSample sample_patch(std::span<const Image> pool, const TrainConfig& cfg, std::mt19937_64& rng) {
  require(!pool.empty(), "training pool is empty");
  const int crop_side = cfg.patch_size * cfg.scale;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const Image& src = pool[pick(rng)];
  require(src.height() >= crop_side && src.width() >= crop_side,
          "training image smaller than the HR crop (" + std::to_string(crop_side) + " px)");
  std::uniform_int_distribution<int> top(0, src.height() - crop_side);
  std::uniform_int_distribution<int> left(0, src.width() - crop_side);
  std::uniform_int_distribution<int> aug(0, 7);
  const int y0 = top(rng);
  const int x0 = left(rng);

  TrainingSample s;
  s.augmentation = aug(rng);
  s.hr = dihedral_transform(crop(src, y0, x0, crop_side, crop_side), s.augmentation);
  if (cfg.kernel_mode == KernelMode::isotropic) {
    double width = cfg.width_low;
    if (cfg.width_high > cfg.width_low) {
      width = std::uniform_real_distribution<double>(cfg.width_low, cfg.width_high)(rng);
    }
    s.kernel = make_isotropic_gaussian({width, cfg.iso_kernel_size});
  } else {
    s.kernel = make_anisotropic_gaussian(draw_anisotropic_spec(rng, cfg.aniso_noise, cfg.aniso_kernel_size));
  }
  s.labels = decompose_labels(s.hr, s.kernel, DegradationConfig{cfg.scale});
  return s;
}

double lr_schedule(long iter, const TrainConfig& cfg) {
  require(iter >= 0, "iteration must be >= 0");
  return cfg.lr_init * std::pow(0.5, static_cast<double>(iter / cfg.lr_halve_every));
}

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state{ModelParams::initialize(cfg.model, cfg.seed), {}, {}, 0,
                   std::mt19937_64(cfg.seed ^ kRngStream)};
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    state.first_moment.emplace_back(state.params.tensor(i).shape(), 0.0);
    state.second_moment.emplace_back(state.params.tensor(i).shape(), 0.0);
  }
  return state;
}

namespace {

struct BatchTensors {
  nn::Tensor lr, hr, structure, detail;
};

BatchTensors stack_batch(std::span<const TrainingSample> batch) {
  require(!batch.empty(), "empty batch");
  std::vector<Image> lr, hr, st, de;
  for (const TrainingSample& s : batch) {
    lr.push_back(s.labels.lr);
    hr.push_back(s.hr);
    st.push_back(s.labels.structure);
    de.push_back(s.labels.detail);
  }
  return {nn::stack_images(lr), nn::stack_images(hr), nn::stack_images(st), nn::stack_images(de)};
}

struct LossGraph {
  LossTerms values;
  nn::Var total;
};

LossGraph build_loss(const BoundParams& bound, const BatchTensors& t, const LossToggles& toggles) {
  require(toggles.any(), "at least one loss term must be enabled");
  ForwardResult out = forward(nn::constant(t.lr), bound);
  LossGraph g;
  std::vector<nn::Var> terms;
  nn::Var l_sr = nn::l1_loss(out.sr, t.hr);
  g.values.sr = l_sr.value().data()[0];
  if (toggles.sr) terms.push_back(l_sr);
  if (out.structure_hat) {
    nn::Var l = nn::l1_loss(*out.structure_hat, t.structure);
    g.values.structure = l.value().data()[0];
    if (toggles.structure) terms.push_back(l);
  }
  if (out.detail_hat) {
    nn::Var l = nn::l1_loss(*out.detail_hat, t.detail);
    g.values.detail = l.value().data()[0];
    if (toggles.detail) terms.push_back(l);
  }
  require(!terms.empty(), "enabled loss terms are not produced by this model");
  g.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) g.total = nn::add(g.total, terms[i]);
  g.values.total = g.total.value().data()[0];
  return g;
}

}  // namespace

LossAndGradients loss_and_gradients(const ModelParams& params, std::span<const TrainingSample> batch,
                                    const LossToggles& toggles) {
  const BatchTensors t = stack_batch(batch);
  BoundParams bound(params, true);
  LossAndGradients result;
  {
    LossGraph g = build_loss(bound, t, toggles);
    result.loss = g.values;
    nn::backward(g.total);
  }
  result.gradients = bound.gradients();
  return result;
}

LossTerms batch_loss(const ModelParams& params, std::span<const TrainingSample> batch,
                     const LossToggles& toggles) {
  const BatchTensors t = stack_batch(batch);
  BoundParams bound(params, false);
  return build_loss(bound, t, toggles).values;
}

StepResult train_step(TrainState& state, std::span<const TrainingSample> batch, const TrainConfig& cfg) {
  LossAndGradients lg = loss_and_gradients(state.params, batch, cfg.loss_toggles);
  if (!std::isfinite(lg.loss.total)) {
    throw NumericalError("non-finite loss at iteration " + std::to_string(state.iter + 1));
  }
  StepResult result{lg.loss, lr_schedule(state.iter, cfg)};
  const long t = state.iter + 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    auto p = state.params.tensor(i).values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    auto g = lg.gradients[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= result.lr * mhat / (std::sqrt(vhat) + kAdamEpsilon);
    }
  }
  state.iter = t;
  return result;
}

namespace {

constexpr const char* kStateMagic = "CDCNSTATE1";

void write_doubles(std::ostream& os, const nn::Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

void read_doubles(std::istream& is, nn::Tensor& t) {
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!is) throw ArtifactMismatch("training state truncated");
}

}  // namespace

void save_train_state(const fs::path& path, const TrainState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << kStateMagic << '\n' << format_model_config(state.params.config()) << '\n'
     << state.iter << '\n' << state.rng << '\n';
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    write_doubles(os, state.params.tensor(i));
    write_doubles(os, state.first_moment[i]);
    write_doubles(os, state.second_moment[i]);
  }
  if (!os) throw std::runtime_error("failed writing training state " + path.string());
}

TrainState load_train_state(const fs::path& path, const ModelConfig& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactMismatch("cannot open training state " + path.string());
  std::string magic, cfg_line, iter_line, rng_line;
  std::getline(is, magic);
  if (magic != kStateMagic) throw ArtifactMismatch(path.string() + " is not a training state file");
  std::getline(is, cfg_line);
  std::getline(is, iter_line);
  std::getline(is, rng_line);
  ModelConfig cfg;
  long iter = 0;
  try {
    cfg = parse_model_config(cfg_line);
    iter = std::stol(iter_line);
  } catch (const std::exception& e) {
    throw ArtifactMismatch(path.string() + ": bad training state header: " + e.what());
  }
  if (!(cfg == expected)) throw ArtifactMismatch("training state was written for a different model config");
  TrainState state{ModelParams::zeros(cfg), {}, {}, iter, {}};
  std::istringstream(rng_line) >> state.rng;
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    state.first_moment.emplace_back(state.params.tensor(i).shape(), 0.0);
    state.second_moment.emplace_back(state.params.tensor(i).shape(), 0.0);
    read_doubles(is, state.params.tensor(i));
    read_doubles(is, state.first_moment[i]);
    read_doubles(is, state.second_moment[i]);
  }
  return state;
}

std::vector<Image> load_training_pool(const fs::path& data_dir) {
  std::vector<Image> pool;
  for (const fs::path& file : list_png_files(data_dir)) {
    Image img = read_png(file);
    if (img.channels() == 1) {
      Image rgb(img.height(), img.width(), 3);
      for (int c = 0; c < 3; ++c)
        std::copy(img.plane(0).begin(), img.plane(0).end(), rgb.plane(c).begin());
      img = std::move(rgb);
    }
    pool.push_back(std::move(img));
  }
  require(!pool.empty(), "no PNG images found in " + data_dir.string());
  return pool;
}

namespace {

std::string numbered(const char* stem, long iter, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%07ld%s", stem, iter, ext);
  return buf;
}

}  // namespace

TrainSummary train(const TrainConfig& cfg, std::span<const Image> pool, const fs::path& out_dir,
                   const TrainOptions& options) {
  cfg.validate();
  require(!pool.empty(), "training pool is empty");
  fs::create_directories(out_dir);
  TrainSummary summary;
  summary.loss_log = out_dir / "loss.log";

  const bool resuming = options.resume_from.has_value();
  TrainState state = resuming ? load_train_state(*options.resume_from, cfg.model) : init_train_state(cfg);
  std::ofstream log(summary.loss_log, resuming ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + summary.loss_log.string());
  log.precision(9);

  auto snapshot = [&] {
    const fs::path ckpt = out_dir / numbered("checkpoint", state.iter, ".cdcn");
    save_checkpoint(ckpt, state.params);
    save_train_state(out_dir / numbered("state", state.iter, ".state"), state);
    summary.checkpoints.push_back(ckpt);
  };
  if (!resuming) snapshot();

  std::vector<TrainingSample> batch;
  while (state.iter < cfg.total_iters) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(sample_patch(pool, cfg, state.rng));
    const StepResult step = train_step(state, batch, cfg);
    ++summary.iterations_run;
    log << state.iter << ' ' << step.loss.total << ' ' << step.loss.structure << ' ' << step.loss.detail
        << ' ' << step.loss.sr << ' ' << step.lr << '\n';
    log.flush();
    if (options.on_step) options.on_step(state.iter, step);
    if (state.iter % cfg.checkpoint_every == 0 || state.iter == cfg.total_iters) snapshot();
  }
  return summary;
}

TrainSummary train(const TrainConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                   const TrainOptions& options) {
  cfg.validate();
  const std::vector<Image> pool = load_training_pool(data_dir);
  return train(cfg, pool, out_dir, options);
}

}  // namespace cdcn
