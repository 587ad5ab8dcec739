#include "cdcn/model.hpp"

#include <cmath>
#include <random>

#include "cdcn/errors.hpp"

namespace cdcn {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_decomposition: return "no_decomposition";
    case Ablation::no_collab: return "no_collab";
    case Ablation::plain_block: return "plain_block";
    case Ablation::fuse_concat: return "fuse_concat";
    case Ablation::fuse_add: return "fuse_add";
  }
  return "unknown";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::full, Ablation::no_decomposition, Ablation::no_collab,
                     Ablation::plain_block, Ablation::fuse_concat, Ablation::fuse_add}) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError("unknown ablation '" + std::string(name) + "'");
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::structure: return "structure";
    case Partition::detail: return "detail";
    case Partition::fusion: return "fusion";
  }
  return "unknown";
}

namespace {

bool supported_scale(int s) { return s == 2 || s == 3 || s == 4 || s == 8; }

}  // namespace

void ModelConfig::validate() const {
  require(num_groups >= 1, "num_groups must be >= 1");
  require(blocks_per_group >= 1, "blocks_per_group must be >= 1");
  require(channels >= 4, "channels must be >= 4");
  require(ca_reduction >= 1 && channels % ca_reduction == 0,
          "channels must be divisible by ca_reduction");
  require(supported_scale(scale), "scale must be one of 2, 3, 4, 8");
  require(std::isfinite(leaky_slope) && leaky_slope >= 0.0, "leaky_slope must be >= 0");
}

namespace {

class LayoutBuilder {
 public:
  void conv(const std::string& name, int in, int out, int k, Partition part) {
    const int fan_in = in * k * k;
    specs.push_back({name + ".weight", Shape{out, in, k, k}, part, false, fan_in});
    specs.push_back({name + ".bias", Shape{out, 1, 1, 1}, part, true, fan_in});
  }
  std::vector<ParamSpec> specs;
};

std::string block_name(int group, int block) {
  return "rg" + std::to_string(group) + ".mcb" + std::to_string(block);
}

void upsample_layout(LayoutBuilder& b, const std::string& prefix, int c, int scale,
                     Partition part) {
  if (scale == 3) {
    b.conv(prefix + ".up0", c, 9 * c, 3, part);
  } else {
    int stage = 0;
    for (int s = scale; s > 1; s /= 2) b.conv(prefix + ".up" + std::to_string(stage++), c, 4 * c, 3, part);
  }
  b.conv(prefix + ".out", c, 3, 3, part);
}

}  // namespace

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  const int r = cfg.ca_reduction;
  const auto S = Partition::structure;
  const auto D = Partition::detail;
  const auto F = Partition::fusion;
  LayoutBuilder b;

  if (!cfg.dual_path()) {
    b.conv("shallow", 3, c, 3, F);
    b.conv("cdm.conv1", c, c, 3, F);
    b.conv("cdm.conv2", c, c, 3, F);
    for (int g = 0; g < cfg.num_groups; ++g) {
      for (int m = 0; m < cfg.blocks_per_group; ++m) {
        const std::string p = block_name(g, m);
        b.conv(p + ".conv1", c, c, 3, F);
        b.conv(p + ".conv2", c, c, 3, F);
        b.conv(p + ".ca.reduce", c, c / r, 1, F);
        b.conv(p + ".ca.expand", c / r, c, 1, F);
      }
      b.conv("rg" + std::to_string(g) + ".tail", c, c, 3, F);
    }
    b.conv("global", c, c, 3, F);
    upsample_layout(b, "head_sr", c, cfg.scale, F);
    return b.specs;
  }

  b.conv("shallow", 3, c, 3, S);
  for (auto [path, part] : {std::pair{"s", S}, std::pair{"d", D}}) {
    b.conv(std::string("cdm.") + path + ".conv1", c, c, 3, part);
    b.conv(std::string("cdm.") + path + ".conv2", c, c, 3, part);
  }
  for (int g = 0; g < cfg.num_groups; ++g) {
    for (int m = 0; m < cfg.blocks_per_group; ++m) {
      const std::string p = block_name(g, m);
      b.conv(p + ".s.conv1", c, c, 3, S);
      b.conv(p + ".s.conv2", c, c, 3, S);
      b.conv(p + ".d.conv1", c, c, 3, D);
      b.conv(p + ".d.conv2", c, c, 3, D);
      switch (cfg.ablation) {
        case Ablation::full:
          b.conv(p + ".ca_s.reduce", 2 * c, 2 * c / r, 1, S);
          b.conv(p + ".ca_s.expand", 2 * c / r, c, 1, S);
          b.conv(p + ".ca_d.reduce", 2 * c, 2 * c / r, 1, D);
          b.conv(p + ".ca_d.expand", 2 * c / r, c, 1, D);
          break;
        case Ablation::no_collab:
          b.conv(p + ".ca_s.reduce", c, c / r, 1, S);
          b.conv(p + ".ca_s.expand", c / r, c, 1, S);
          b.conv(p + ".ca_d.reduce", c, c / r, 1, D);
          b.conv(p + ".ca_d.expand", c / r, c, 1, D);
          break;
        case Ablation::fuse_concat:
          b.conv(p + ".fuse_s", 2 * c, c, 1, S);
          b.conv(p + ".fuse_d", 2 * c, c, 1, D);
          break;
        case Ablation::fuse_add:
          b.conv(p + ".cross_s", c, c, 1, S);
          b.conv(p + ".cross_d", c, c, 1, D);
          break;
        case Ablation::plain_block:
        case Ablation::no_decomposition:
          break;
      }
    }
    b.conv("rg" + std::to_string(g) + ".tail_s", c, c, 3, S);
    b.conv("rg" + std::to_string(g) + ".tail_d", c, c, 3, D);
  }
  b.conv("global.s", c, c, 3, S);
  b.conv("global.d", c, c, 3, D);

  for (const char* input : {"s", "d", "sum"})
    for (int k : {3, 5, 7})
      b.conv(std::string("msfm.extract.") + input + ".k" + std::to_string(k), c, c, k, F);
  for (int k : {3, 5, 7}) b.conv("msfm.fuse.k" + std::to_string(k), 3 * c, c, k, F);
  b.conv("msfm.reduce", 3 * c, c, 1, F);
  for (int j = 0; j < 6; ++j) b.conv("msfm.dense" + std::to_string(j), (j + 1) * c, c, 3, F);
  b.conv("msfm.compress", 7 * c, c, 1, F);

  upsample_layout(b, "head_s", c, cfg.scale, S);
  upsample_layout(b, "head_d", c, cfg.scale, D);
  upsample_layout(b, "head_sr", c, cfg.scale, F);
  return b.specs;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  for (const ParamSpec& s : param_layout(cfg)) total += s.shape.numel();
  return total;
}

ModelParams::ModelParams(const ModelConfig& cfg) : cfg_(cfg), specs_(param_layout(cfg)) {
  tensors_.reserve(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    tensors_.emplace_back(specs_[i].shape, 0.0);
    index_.emplace(specs_[i].name, i);
  }
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) { return ModelParams(cfg); }

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < p.specs_.size(); ++i) {
    if (p.specs_[i].is_bias) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.specs_[i].fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.tensors_[i].values()) v = dist(rng);
  }
  return p;
}

std::size_t ModelParams::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("no parameter named '" + name + "'");
  return it->second;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t total = 0;
  for (const Tensor& t : tensors_) total += t.numel();
  return total;
}

std::size_t ModelParams::scalar_count(Partition part) const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (specs_[i].partition == part) total += tensors_[i].numel();
  return total;
}

bool ModelParams::all_finite() const {
  for (const Tensor& t : tensors_)
    for (double v : t.values())
      if (!std::isfinite(v)) return false;
  return true;
}

BoundParams::BoundParams(const ModelParams& params, bool requires_grad) : params_(&params) {
  leaves_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    leaves_.push_back(nn::leaf(params.tensor(i), requires_grad));
}

const Var& BoundParams::operator()(const std::string& name) const {
  return leaves_[params_->index_of(name)];
}

std::vector<Tensor> BoundParams::gradients() const {
  std::vector<Tensor> grads;
  grads.reserve(leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const Tensor* g = leaves_[i].grad();
    grads.push_back(g ? *g : Tensor(params_->tensor(i).shape(), 0.0));
  }
  return grads;
}

Var conv(const Var& x, const BoundParams& p, const std::string& prefix) {
  return nn::conv2d(x, p(prefix + ".weight"), p(prefix + ".bias"));
}

namespace {

Var conv_act_conv(const Var& x, const BoundParams& p, const std::string& prefix) {
  const double slope = p.config().leaky_slope;
  return conv(nn::leaky_relu(conv(x, p, prefix + ".conv1"), slope), p, prefix + ".conv2");
}

// pool -> 1x1 reduce -> LeakyReLU -> 1x1 expand -> sigmoid
Var channel_attention(const Var& x, const BoundParams& p, const std::string& prefix) {
  const double slope = p.config().leaky_slope;
  Var squeezed = conv(nn::global_avg_pool(x), p, prefix + ".reduce");
  return nn::sigmoid(conv(nn::leaky_relu(squeezed, slope), p, prefix + ".expand"));
}

}  // namespace

Var shallow_extract(const Var& lr, const BoundParams& p) {
  require(lr.shape().c == 3, "network input must have 3 channels");
  return conv(lr, p, "shallow");
}

FeaturePair cdm_decompose(const Var& f_in, const BoundParams& p) {
  require(f_in.shape().c == p.config().channels, "CDM input channel mismatch");
  if (!p.config().dual_path()) return {nn::add(f_in, conv_act_conv(f_in, p, "cdm")), Var()};
  return {nn::add(f_in, conv_act_conv(f_in, p, "cdm.s")),
          nn::add(f_in, conv_act_conv(f_in, p, "cdm.d"))};
}

FeaturePair mcb_forward(const FeaturePair& in, const BoundParams& p, const std::string& prefix) {
  const ModelConfig& cfg = p.config();
  require(in.structure.shape().c == cfg.channels, "MCB input channel mismatch");
  if (!cfg.dual_path()) {
    Var x = conv_act_conv(in.structure, p, prefix);
    return {nn::add(in.structure, nn::scale_channels(x, channel_attention(x, p, prefix + ".ca"))),
            Var()};
  }
  require(in.detail.shape() == in.structure.shape(), "MCB path shape mismatch");
  Var xs = conv_act_conv(in.structure, p, prefix + ".s");
  Var xd = conv_act_conv(in.detail, p, prefix + ".d");
  switch (cfg.ablation) {
    case Ablation::full: {
      Var x = nn::concat_channels({xs, xd});
      Var as = channel_attention(x, p, prefix + ".ca_s");
      Var ad = channel_attention(x, p, prefix + ".ca_d");
      return {nn::add(in.structure, nn::scale_channels(xs, as)),
              nn::add(in.detail, nn::scale_channels(xd, ad))};
    }
    case Ablation::no_collab:
      return {nn::add(in.structure, nn::scale_channels(xs, channel_attention(xs, p, prefix + ".ca_s"))),
              nn::add(in.detail, nn::scale_channels(xd, channel_attention(xd, p, prefix + ".ca_d")))};
    case Ablation::plain_block:
      return {nn::add(in.structure, xs), nn::add(in.detail, xd)};
    case Ablation::fuse_concat: {
      Var x = nn::concat_channels({xs, xd});
      return {nn::add(in.structure, conv(x, p, prefix + ".fuse_s")),
              nn::add(in.detail, conv(x, p, prefix + ".fuse_d"))};
    }
    case Ablation::fuse_add:
      return {nn::add(in.structure, nn::add(xs, conv(xd, p, prefix + ".cross_s"))),
              nn::add(in.detail, nn::add(xd, conv(xs, p, prefix + ".cross_d")))};
    case Ablation::no_decomposition:
      break;
  }
  throw ValidationError("unreachable ablation");
}

FeaturePair rg_forward(const FeaturePair& in, const BoundParams& p, int group) {
  const ModelConfig& cfg = p.config();
  require(group >= 0 && group < cfg.num_groups, "residual group index out of range");
  FeaturePair cur = in;
  for (int m = 0; m < cfg.blocks_per_group; ++m) cur = mcb_forward(cur, p, block_name(group, m));
  const std::string g = "rg" + std::to_string(group);
  if (!cfg.dual_path()) return {nn::add(in.structure, conv(cur.structure, p, g + ".tail")), Var()};
  return {nn::add(in.structure, conv(cur.structure, p, g + ".tail_s")),
          nn::add(in.detail, conv(cur.detail, p, g + ".tail_d"))};
}

FeaturePair global_residual(const FeaturePair& deep, const Var& f_in, const Var& f_d0,
                            const BoundParams& p) {
  if (!p.config().dual_path()) return {nn::add(f_in, conv(deep.structure, p, "global")), Var()};
  return {nn::add(f_in, conv(deep.structure, p, "global.s")),
          nn::add(f_d0, conv(deep.detail, p, "global.d"))};
}

Var msfm_forward(const FeaturePair& in, const BoundParams& p) {
  require(p.config().dual_path(), "the fusion module needs both component paths");
  require(in.structure.shape() == in.detail.shape(), "fusion inputs must share a shape");
  const double slope = p.config().leaky_slope;
  const Var sum = nn::add(in.structure, in.detail);
  const std::pair<const char*, Var> inputs[] = {{"s", in.structure}, {"d", in.detail}, {"sum", sum}};

  std::vector<Var> fused;
  for (int k : {3, 5, 7}) {
    const std::string ks = ".k" + std::to_string(k);
    std::vector<Var> branch;
    for (const auto& [name, x] : inputs) branch.push_back(conv(x, p, std::string("msfm.extract.") + name + ks));
    fused.push_back(conv(nn::concat_channels(branch), p, "msfm.fuse" + ks));
  }
  Var f_fused = conv(nn::concat_channels(fused), p, "msfm.reduce");

  std::vector<Var> dense{f_fused};
  for (int j = 0; j < 6; ++j) {
    dense.push_back(nn::leaky_relu(conv(nn::concat_channels(dense), p, "msfm.dense" + std::to_string(j)), slope));
  }
  return nn::add(sum, conv(nn::concat_channels(dense), p, "msfm.compress"));
}

Var upsample_head(const Var& f, const BoundParams& p, const std::string& prefix) {
  const int scale = p.config().scale;
  require(f.shape().c == p.config().channels, "upsample head channel mismatch");
  Var x = f;
  if (scale == 3) {
    x = nn::pixel_shuffle(conv(x, p, prefix + ".up0"), 3);
  } else {
    int stage = 0;
    for (int s = scale; s > 1; s /= 2) x = nn::pixel_shuffle(conv(x, p, prefix + ".up" + std::to_string(stage++)), 2);
  }
  return conv(x, p, prefix + ".out");
}

ForwardResult forward(const Var& lr, const BoundParams& p) {
  const ModelConfig& cfg = p.config();
  ForwardResult r;
  r.shallow = shallow_extract(lr, p);
  r.decomposed = cdm_decompose(r.shallow, p);
  FeaturePair cur = r.decomposed;
  for (int g = 0; g < cfg.num_groups; ++g) cur = rg_forward(cur, p, g);
  r.after_residual = global_residual(cur, r.shallow, r.decomposed.detail, p);
  if (!cfg.dual_path()) {
    r.sr = upsample_head(r.after_residual.structure, p, "head_sr");
    return r;
  }
  r.sr = upsample_head(msfm_forward(r.after_residual, p), p, "head_sr");
  r.structure_hat = upsample_head(r.after_residual.structure, p, "head_s");
  r.detail_hat = upsample_head(r.after_residual.detail, p, "head_d");
  return r;
}

ModelOutput cdcn_forward(const Image& lr, const ModelParams& params) {
  require(lr.channels() == 3, "network input must have 3 channels");
  BoundParams bound(params, false);
  ForwardResult r = forward(nn::constant(nn::image_to_tensor(lr)), bound);
  ModelOutput out;
  out.sr = nn::tensor_to_image(r.sr.value());
  if (r.structure_hat) out.structure_hat = nn::tensor_to_image(r.structure_hat->value());
  if (r.detail_hat) out.detail_hat = nn::tensor_to_image(r.detail_hat->value());
  return out;
}

}  // namespace cdcn
