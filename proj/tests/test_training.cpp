#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cdcn/checkpoint.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/losses.hpp"
#include "cdcn/training.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace cdcn;

namespace {

double brute_l1(const Image& a, const Image& b) {
  long double s = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) s += std::fabs(a.at(y, x, c) - b.at(y, x, c));
  return static_cast<double>(s / static_cast<long double>(a.size()));
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.scale = 2;
  cfg.patch_size = 12;
  cfg.batch_size = 2;
  cfg.total_iters = 6;
  cfg.lr_init = 1e-3;
  cfg.lr_halve_every = 4;
  cfg.width_low = 0.2;
  cfg.width_high = 2.0;
  cfg.seed = 5;
  cfg.checkpoint_every = 3;
  cfg.model = ModelConfig{1, 1, 4, 2, 0.2, 2, Ablation::full};
  return cfg;
}

std::vector<Image> tiny_pool() { return {test::smooth_image(40, 44, 1), test::smooth_image(36, 30, 2)}; }

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Losses, StructureL1) {
  const Image a = test::random_image(6, 5, 3, 1), b = test::random_image(6, 5, 3, 2);
  EXPECT_EQ(loss_structure(a, a), 0.0);
  EXPECT_DOUBLE_EQ(loss_structure(Image(4, 4, 3, 0.5), Image(4, 4, 3, 0.0)), 0.5);
  EXPECT_NEAR(loss_structure(a, b), brute_l1(a, b), 1e-12);
  EXPECT_THROW(loss_structure(a, Image(6, 6, 3)), ValidationError);
}

TEST(Losses, DetailAgainstDecomposition) {
  const Image hr = test::random_image(24, 24, 3, 3);
  EXPECT_EQ(loss_detail(Image(24, 24, 3, 0.0), hr, Kernel::delta(21)), 0.0);
  const Kernel k = make_isotropic_gaussian({1.3, 21});
  const ComponentTriple t = decompose_labels(hr, k, DegradationConfig{2});
  EXPECT_EQ(loss_detail(t.detail, hr, k), 0.0);
  const Image guess = test::random_image(24, 24, 3, 4);
  EXPECT_NEAR(loss_detail(guess, hr, k), brute_l1(guess, t.detail), 1e-12);
}

TEST(Losses, SrL1) {
  const Image a = test::random_image(5, 7, 3, 5), b = test::random_image(5, 7, 3, 6);
  EXPECT_EQ(loss_sr(a, a), 0.0);
  Image shifted = a;
  for (double& v : shifted.values()) v -= 0.125;
  EXPECT_NEAR(loss_sr(shifted, a), 0.125, 1e-15);
  EXPECT_NEAR(loss_sr(a, b), brute_l1(a, b), 1e-12);
}

TEST(Losses, TotalIsSumOfEnabledTerms) {
  const Image hr = test::random_image(24, 24, 3, 7);
  const Kernel k = make_isotropic_gaussian({1.1, 21});
  const ComponentTriple t = decompose_labels(hr, k, DegradationConfig{2});
  const ModelOutput perfect{hr, t.structure, t.detail};
  EXPECT_EQ(total_loss(perfect, t, hr, {}).total, 0.0);

  const ModelOutput out{test::random_image(24, 24, 3, 8), test::random_image(24, 24, 3, 9),
                        test::random_image(24, 24, 3, 10)};
  const double ls = loss_structure(*out.structure_hat, t.structure);
  const double ld = loss_detail(*out.detail_hat, hr, k);
  const double lsr = loss_sr(out.sr, hr);
  EXPECT_NEAR(total_loss(out, t, hr, {}).total, ls + ld + lsr, 1e-12);
  // No structure constraint: only the structure term drops out.
  EXPECT_NEAR(total_loss(out, t, hr, {false, true, true}).total, ld + lsr, 1e-12);
  EXPECT_NEAR(total_loss(out, t, hr, {true, false, true}).total, ls + lsr, 1e-12);
  EXPECT_NEAR(total_loss(out, t, hr, {false, false, true}).total, lsr, 1e-12);
  EXPECT_THROW(total_loss(out, t, hr, {false, false, false}), ValidationError);
}

TEST(LrSchedule, HalvingRule) {
  TrainConfig cfg;
  cfg.lr_init = 2e-4;
  cfg.lr_halve_every = 100000;
  EXPECT_DOUBLE_EQ(lr_schedule(0, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(99999, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(100000, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(250000, cfg), 5e-5);
  double prev = lr_schedule(0, cfg);
  for (long it = 0; it < 600000; it += 12345) {
    const double lr = lr_schedule(it, cfg);
    EXPECT_LE(lr, prev);
    EXPECT_EQ(lr, lr_schedule((it / 100000) * 100000, cfg));
    prev = lr;
  }
}

TEST(TrainConfig, ParseFormatRoundTrip) {
  const TrainConfig cfg = parse_train_config(
      "# comment\nscale = 3\npatch_size = 16\nbatch_size=4\ntotal_iters = 7\nlr_init = 5e-4\n"
      "lr_halve_every = 3\nkernel_mode = anisotropic\nwidth_range = 0.2 3.0\nloss_toggles = detail sr\n"
      "seed = 9\ncheckpoint_every = 2\nnum_groups = 2\nblocks_per_group = 3\nchannels = 8\n"
      "ca_reduction = 4\nablation = fuse_add\n");
  EXPECT_EQ(cfg.scale, 3);
  EXPECT_EQ(cfg.model.scale, 3);
  EXPECT_EQ(cfg.patch_size, 16);
  EXPECT_EQ(cfg.kernel_mode, KernelMode::anisotropic);
  EXPECT_EQ(cfg.width_high, 3.0);
  EXPECT_EQ(cfg.loss_toggles, (LossToggles{false, true, true}));
  EXPECT_EQ(cfg.model.ablation, Ablation::fuse_add);
  const TrainConfig again = parse_train_config(format_train_config(cfg));
  EXPECT_EQ(format_train_config(again), format_train_config(cfg));
  EXPECT_EQ(again.lr_init, 5e-4);
}

TEST(TrainConfig, RejectsBadInput) {
  EXPECT_THROW(parse_train_config("bogus_key = 1\n"), ValidationError);
  EXPECT_THROW(parse_train_config("scale = two\n"), ValidationError);
  EXPECT_THROW(parse_train_config("loss_toggles = none\n").validate(), ValidationError);
  EXPECT_THROW(parse_train_config("lr_init = 0\n").validate(), ValidationError);
  TrainConfig cfg = tiny_config();
  cfg.patch_size = 5;  // 10 px HR crop cannot hold a 21-tap kernel
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = tiny_config();
  cfg.model.ablation = Ablation::no_decomposition;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.loss_toggles = {false, false, true};
  EXPECT_NO_THROW(cfg.validate());
}

TEST(SamplePatch, ShapesLabelsAndDeterminism) {
  TrainConfig cfg = tiny_config();
  cfg.patch_size = 64;
  cfg.scale = 4;
  cfg.model.scale = 4;
  const std::vector<Image> pool{test::smooth_image(300, 280, 3)};
  std::mt19937_64 a(1), b(1);
  std::set<int> augs;
  for (int i = 0; i < 40; ++i) {
    const TrainingSample s = sample_patch(pool, cfg, a);
    const TrainingSample t = sample_patch(pool, cfg, b);
    EXPECT_EQ(s.hr.height(), 256);
    EXPECT_EQ(s.hr.width(), 256);
    EXPECT_EQ(s.labels.lr.height(), 64);
    EXPECT_EQ(s.labels.lr.width(), 64);
    EXPECT_EQ(max_abs_difference(s.labels.structure + s.labels.detail, s.hr), 0.0);
    EXPECT_EQ(max_abs_difference(s.hr, t.hr), 0.0);
    EXPECT_EQ(s.kernel.description(), t.kernel.description());
    augs.insert(s.augmentation);
  }
  EXPECT_GE(augs.size(), 6u);
  EXPECT_THROW(sample_patch(std::vector<Image>{test::smooth_image(100, 300, 1)}, cfg, a), ValidationError);
}

TEST(SamplePatch, AugmentationIsADihedralImageOfACrop) {
  TrainConfig cfg = tiny_config();
  const Image src = test::random_image(24, 24, 3, 12);  // crop side is 24: the crop is the whole image
  std::mt19937_64 rng(2);
  for (int i = 0; i < 16; ++i) {
    const TrainingSample s = sample_patch(std::vector<Image>{src}, cfg, rng);
    EXPECT_EQ(max_abs_difference(s.hr, dihedral_transform(src, s.augmentation)), 0.0);
  }
  // The 8 transforms are distinct and form a group closed under composition.
  std::set<std::vector<double>> seen;
  for (int k = 0; k < 8; ++k) {
    const Image t = dihedral_transform(src, k);
    seen.insert(std::vector<double>(t.values().begin(), t.values().end()));
    for (int j = 0; j < 8; ++j) {
      const Image tt = dihedral_transform(t, j);
      bool found = false;
      for (int m = 0; m < 8 && !found; ++m) found = max_abs_difference(tt, dihedral_transform(src, m)) == 0.0;
      EXPECT_TRUE(found);
    }
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(SamplePatch, AnisotropicMode) {
  TrainConfig cfg = tiny_config();
  cfg.kernel_mode = KernelMode::anisotropic;
  std::mt19937_64 rng(3);
  const TrainingSample s = sample_patch(tiny_pool(), cfg, rng);
  EXPECT_EQ(s.kernel.size(), 11);
  EXPECT_EQ(s.kernel.description().rfind("aniso:", 0), 0u);
}

TEST(TrainStep, LossGradientMatchesFiniteDifferences) {
  TrainConfig cfg = tiny_config();
  cfg.patch_size = 8;
  cfg.iso_kernel_size = 7;
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(sample_patch(tiny_pool(), cfg, state.rng));

  const LossAndGradients lg = loss_and_gradients(state.params, batch, cfg.loss_toggles);
  std::mt19937_64 rng(4);
  std::size_t checked = 0, passed = 0;
  double max_part[3] = {0, 0, 0};
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    for (double g : lg.gradients[i].values())
      max_part[static_cast<int>(state.params.spec(i).partition)] =
          std::max(max_part[static_cast<int>(state.params.spec(i).partition)], std::abs(g));
    nn::Tensor& t = state.params.tensor(i);
    std::uniform_int_distribution<std::size_t> pick(0, t.numel() - 1);
    for (int k = 0; k < 2; ++k) {
      const std::size_t j = pick(rng);
      const double orig = t.data()[j], eps = 1e-5;
      t.data()[j] = orig + eps;
      const double up = batch_loss(state.params, batch, cfg.loss_toggles).total;
      t.data()[j] = orig - eps;
      const double down = batch_loss(state.params, batch, cfg.loss_toggles).total;
      t.data()[j] = orig;
      ++checked;
      const double num = (up - down) / (2 * eps);
      // The real loss has L1 kinks, and attention weights see gradients near
      // roundoff; the 1e-6 floor treats those as absolute comparisons.
      if (test::relative_error(lg.gradients[i].data()[j], num, 1e-6) < 1e-3) ++passed;
    }
  }
  EXPECT_GE(static_cast<double>(passed) / checked, 0.99) << passed << "/" << checked;
  for (double m : max_part) EXPECT_GT(m, 0.0);
}

TEST(TrainStep, DisabledHeadsGetNoGradient) {
  TrainConfig cfg = tiny_config();
  cfg.loss_toggles = {false, false, true};
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch{sample_patch(tiny_pool(), cfg, state.rng)};
  const LossAndGradients lg = loss_and_gradients(state.params, batch, cfg.loss_toggles);
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const std::string& name = state.params.spec(i).name;
    double m = 0.0;
    for (double g : lg.gradients[i].values()) m = std::max(m, std::abs(g));
    if (name.rfind("head_s.", 0) == 0 || name.rfind("head_d.", 0) == 0) EXPECT_EQ(m, 0.0) << name;
    if (name.rfind("rg0.", 0) == 0 && name.find(".weight") != std::string::npos) EXPECT_GT(m, 0.0) << name;
  }
}

TEST(TrainStep, BatchPermutationInvariance) {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 3;
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(sample_patch(tiny_pool(), cfg, state.rng));
  const LossTerms a = batch_loss(state.params, batch, cfg.loss_toggles);
  std::swap(batch[0], batch[2]);
  const LossTerms b = batch_loss(state.params, batch, cfg.loss_toggles);
  EXPECT_NEAR(a.total, b.total, 1e-14);
  EXPECT_NEAR(a.detail, b.detail, 1e-14);
}

TEST(TrainStep, DescendsAndZeroLrIsNoOp) {
  TrainConfig cfg = tiny_config();
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(sample_patch(tiny_pool(), cfg, state.rng));

  TrainConfig frozen = cfg;
  frozen.lr_init = 0.0;
  TrainState copy = state;
  train_step(copy, batch, frozen);
  EXPECT_EQ(copy.iter, 1);
  for (std::size_t i = 0; i < state.params.size(); ++i)
    EXPECT_EQ(test::max_abs(copy.params.tensor(i).values(), state.params.tensor(i).values()), 0.0);

  const StepResult first = train_step(state, batch, cfg);
  const StepResult second = train_step(state, batch, cfg);
  EXPECT_LT(second.loss.total, first.loss.total);
  EXPECT_EQ(state.iter, 2);
  EXPECT_DOUBLE_EQ(first.lr, 1e-3);
}

TEST(TrainStep, AdamMatchesReferenceUpdate) {
  // One step from zero moments moves every parameter with a nonzero gradient
  // by lr * g / (|g| + eps') where eps' absorbs the bias correction.
  TrainConfig cfg = tiny_config();
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch{sample_patch(tiny_pool(), cfg, state.rng)};
  const ModelParams before = state.params;
  const LossAndGradients lg = loss_and_gradients(before, batch, cfg.loss_toggles);
  train_step(state, batch, cfg);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t j = 0; j < before.tensor(i).numel(); ++j) {
      const double g = lg.gradients[i].data()[j];
      const double m = 0.1 * g / 0.1, v = 0.01 * g * g / 0.01;
      const double expect = before.tensor(i).data()[j] - 1e-3 * m / (std::sqrt(v) + 1e-8);
      EXPECT_NEAR(state.params.tensor(i).data()[j], expect, 1e-15);
    }
}

TEST(TrainStep, NonFiniteLossAborts) {
  TrainConfig cfg = tiny_config();
  TrainState state = init_train_state(cfg);
  std::vector<TrainingSample> batch{sample_patch(tiny_pool(), cfg, state.rng)};
  state.params["head_sr.out.bias"].data()[0] = std::nan("");
  const ModelParams before = state.params;
  EXPECT_THROW(train_step(state, batch, cfg), NumericalError);
  EXPECT_EQ(state.iter, 0);
}

TEST(Train, CheckpointsLogAndDeterminism) {
  const TrainConfig cfg = tiny_config();
  const auto dir1 = test::scratch_dir("train1"), dir2 = test::scratch_dir("train2");
  const TrainSummary s = train(cfg, tiny_pool(), dir1);
  train(cfg, tiny_pool(), dir2);
  EXPECT_EQ(s.iterations_run, 6);
  ASSERT_EQ(s.checkpoints.size(), 3u);  // iterations 0, 3, 6
  EXPECT_TRUE(std::filesystem::exists(dir1 / "checkpoint_0000000.cdcn"));
  EXPECT_TRUE(std::filesystem::exists(dir1 / "checkpoint_0000006.cdcn"));
  const std::string log = read_text(dir1 / "loss.log");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 6);
  EXPECT_EQ(log, read_text(dir2 / "loss.log"));
  std::istringstream first(log);
  long iter;
  double total, ls, ld, lsr, lr;
  first >> iter >> total >> ls >> ld >> lsr >> lr;
  EXPECT_EQ(iter, 1);
  EXPECT_NEAR(total, ls + ld + lsr, 1e-7);
  EXPECT_DOUBLE_EQ(lr, 1e-3);

  const ModelParams last = load_checkpoint(dir1 / "checkpoint_0000006.cdcn");
  EXPECT_EQ(last.config(), cfg.model);
}

TEST(Train, ZeroIterationsWritesInitialCheckpointOnly) {
  TrainConfig cfg = tiny_config();
  cfg.total_iters = 0;
  const auto dir = test::scratch_dir("train0");
  const TrainSummary s = train(cfg, tiny_pool(), dir);
  EXPECT_EQ(s.iterations_run, 0);
  ASSERT_EQ(s.checkpoints.size(), 1u);
  EXPECT_EQ(read_text(dir / "loss.log"), "");
}

TEST(Train, ResumeReproducesLossSequence) {
  const TrainConfig cfg = tiny_config();
  const auto full = test::scratch_dir("resume_full"), part = test::scratch_dir("resume_part");
  train(cfg, tiny_pool(), full);
  TrainConfig shorter = cfg;
  shorter.total_iters = 3;
  train(shorter, tiny_pool(), part);
  TrainOptions opts;
  opts.resume_from = part / "state_0000003.state";
  const TrainSummary resumed = train(cfg, tiny_pool(), part, opts);
  EXPECT_EQ(resumed.iterations_run, 3);
  EXPECT_EQ(read_text(full / "loss.log"), read_text(part / "loss.log"));

  TrainConfig other = cfg;
  other.model.channels = 8;
  EXPECT_THROW(train(other, tiny_pool(), part, opts), ArtifactMismatch);
}

TEST(Train, AblationsRunOneStep) {
  for (Ablation a : {Ablation::full, Ablation::no_collab, Ablation::plain_block, Ablation::fuse_concat,
                     Ablation::fuse_add, Ablation::no_decomposition}) {
    TrainConfig cfg = tiny_config();
    cfg.model.ablation = a;
    if (a == Ablation::no_decomposition) cfg.loss_toggles = {false, false, true};
    TrainState state = init_train_state(cfg);
    std::vector<TrainingSample> batch{sample_patch(tiny_pool(), cfg, state.rng)};
    const StepResult r = train_step(state, batch, cfg);
    EXPECT_TRUE(std::isfinite(r.loss.total)) << to_string(a);
    EXPECT_TRUE(state.params.all_finite()) << to_string(a);
  }
}
