#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "cdcn/degradation.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/evaluation.hpp"
#include "cdcn/io.hpp"
#include "cdcn/metrics.hpp"
#include "test_util.hpp"

using namespace cdcn;

namespace {

Dataset small_set() {
  Dataset d;
  d.ids = {"a", "b"};
  d.images = {test::smooth_image(50, 47, 1), test::smooth_image(45, 52, 2)};
  return d;
}

Dataset constant_set() {
  Dataset d;
  d.ids = {"flat"};
  d.images = {Image(40, 40, 3, 0.4)};
  return d;
}

}  // namespace

TEST(Gaussian8, RowLayoutAndMetadata) {
  const Dataset d = small_set();
  const MetricReport r = evaluate_gaussian8(bicubic_upscaler(2), d, 2);
  EXPECT_EQ(r.protocol, "gaussian8");
  EXPECT_EQ(r.border, 2);
  ASSERT_EQ(r.rows.size(), 16u);
  ASSERT_EQ(r.kernels.size(), 8u);
  const auto widths = gaussian8_widths(2);
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(r.kernels[k].first, "g" + std::to_string(k));
    EXPECT_EQ(r.kernels[k].second, make_isotropic_gaussian({widths[k], 21}).description());
    EXPECT_EQ(r.rows[k].image_id, "a");
    EXPECT_EQ(r.rows[8 + k].image_id, "b");
    EXPECT_EQ(r.rows[k].kernel_id, r.kernels[k].first);
  }
  double mp = 0.0;
  for (const MetricRow& row : r.rows) {
    EXPECT_TRUE(std::isfinite(row.psnr));
    EXPECT_GT(row.ssim, 0.0);
    mp += row.psnr;
  }
  EXPECT_NEAR(r.mean_psnr, mp / 16.0, 1e-12);
}

TEST(Gaussian8, RowMatchesManualPipeline) {
  const Dataset d = small_set();
  const MetricReport r = evaluate_gaussian8(bicubic_upscaler(2), d, 2);
  // Image "b" cropped to 44x52, third kernel.
  const Image hr = center_crop_to_multiple(d.images[1], 2);
  ASSERT_EQ(hr.height(), 44);
  const Kernel k = make_isotropic_gaussian({gaussian8_widths(2)[2], 21});
  const Image lr = quantize_8bit(degrade(hr, k, DegradationConfig{2}));
  const Image sr = quantize_8bit(bicubic_resize(lr, 44, 52));
  EXPECT_NEAR(r.rows[10].psnr, psnr_y(sr, hr, 2), 1e-12);
  EXPECT_NEAR(r.rows[10].ssim, ssim_y(sr, hr, 2), 1e-12);
}

TEST(Gaussian8, PerfectModelHitsTheCap) {
  const MetricReport r = evaluate_gaussian8(bicubic_upscaler(4), constant_set(), 4);
  for (const MetricRow& row : r.rows) {
    EXPECT_EQ(row.psnr, kPsnrCap);
    EXPECT_NEAR(row.ssim, 1.0, 1e-12);
  }
}

TEST(Evaluation, WorkersDoNotChangeResults) {
  Dataset d = small_set();
  d.ids.push_back("c");
  d.images.push_back(test::smooth_image(48, 48, 3));
  const MetricReport one = evaluate_gaussian8(bicubic_upscaler(3), d, 3);
  const MetricReport three = evaluate_gaussian8(bicubic_upscaler(3), d, 3, EvalOptions{3});
  EXPECT_EQ(format_report(one), format_report(three));
}

TEST(Evaluation, RejectsWrongOutputSize) {
  const Upscaler bad = [](const Image& lr) { return Image(lr.height(), lr.width(), 3); };
  EXPECT_THROW(evaluate_gaussian8(bad, small_set(), 2), ValidationError);
  EXPECT_THROW(evaluate_gaussian8(bicubic_upscaler(2), Dataset{}, 2), ValidationError);
}

TEST(Anisotropic, SeededAndDeterministic) {
  const Dataset d = small_set();
  const MetricReport a = evaluate_anisotropic(bicubic_upscaler(2), d, 2, std::vector<std::uint64_t>{7, 8});
  const MetricReport b = evaluate_anisotropic(bicubic_upscaler(2), d, 2, std::vector<std::uint64_t>{7, 8});
  EXPECT_EQ(a.protocol, "anisotropic");
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(format_report(a), format_report(b));
  ASSERT_EQ(a.kernels.size(), 2u);
  for (const auto& [id, desc] : a.kernels) EXPECT_EQ(desc.rfind("aniso:", 0), 0u) << id;
  const MetricReport c = evaluate_anisotropic(bicubic_upscaler(2), d, 2, std::vector<std::uint64_t>{9, 10});
  EXPECT_NE(a.kernels[0].second, c.kernels[0].second);
}

TEST(Anisotropic, ExplicitSpecs) {
  const AnisoKernelSpec spec{4.0, 1.0, 0.5, 0.0, 0, 11};
  const MetricReport r =
      evaluate_anisotropic(bicubic_upscaler(2), small_set(), 2, std::vector<AnisoKernelSpec>{spec});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.kernels[0].second, make_anisotropic_gaussian(spec).description());
}

TEST(Report, RoundTripAndRecompute) {
  const MetricReport r = evaluate_gaussian8(bicubic_upscaler(2), small_set(), 2);
  const MetricReport back = parse_report(format_report(r));
  EXPECT_EQ(back.protocol, r.protocol);
  EXPECT_EQ(back.scale, 2);
  EXPECT_EQ(back.kernels, r.kernels);
  ASSERT_EQ(back.rows.size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].kernel_id, r.rows[i].kernel_id);
    EXPECT_NEAR(back.rows[i].psnr, r.rows[i].psnr, 1e-7);
    EXPECT_NEAR(back.rows[i].ssim, r.rows[i].ssim, 1e-9);
  }
  MetricReport again = back;
  again.recompute_aggregate();
  EXPECT_NEAR(again.mean_psnr, back.mean_psnr, 1e-7);
  EXPECT_NEAR(again.mean_ssim, back.mean_ssim, 1e-9);

  const auto dir = test::scratch_dir("report");
  write_report(dir / "r.csv", r);
  EXPECT_EQ(format_report(read_report(dir / "r.csv")), format_report(back));
}

TEST(Report, MalformedInputIsArtifactMismatch) {
  EXPECT_THROW(parse_report("#protocol=x\na,b,1\nmean,,1,1\n"), ArtifactMismatch);
  EXPECT_THROW(parse_report("#protocol=x\na,b,1,0.5\n"), ArtifactMismatch);
  EXPECT_THROW(parse_report("a,b,abc,0.5\nmean,,1,1\n"), ArtifactMismatch);
  EXPECT_THROW(read_report("/nonexistent/report.csv"), ArtifactMismatch);
}

TEST(ComponentPsnr, PerfectAndMissingDetail) {
  const Dataset d = constant_set();
  const ComponentModel zero_detail = [](const Image& lr) {
    return ModelOutput{Image(lr.height() * 2, lr.width() * 2, 3), std::nullopt,
                       Image(lr.height() * 2, lr.width() * 2, 3, 0.0)};
  };
  const std::vector<double> curve = component_psnr(zero_detail, d, 2, {0.5, 1.5});
  ASSERT_EQ(curve.size(), 2u);
  for (double v : curve) EXPECT_EQ(v, kPsnrCap);
  const ComponentModel no_detail = [](const Image& lr) {
    return ModelOutput{Image(lr.height() * 2, lr.width() * 2, 3), std::nullopt, std::nullopt};
  };
  EXPECT_THROW(component_psnr(no_detail, d, 2, {1.0}), ValidationError);
}

TEST(ComponentPsnr, UntrainedModelIsFinite) {
  const ModelParams p = ModelParams::initialize({1, 1, 4, 2, 0.2, 2, Ablation::full}, 1);
  const std::vector<double> curve = component_psnr(component_model(p), small_set(), 2, {1.0});
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_TRUE(std::isfinite(curve[0]));
}

TEST(Dataset, LoadsSortedAndPromotesGray) {
  const auto dir = test::scratch_dir("dataset");
  EXPECT_ANY_THROW(load_dataset(dir));
  write_png(dir / "z.png", test::random_image(8, 9, 3, 1));
  write_png(dir / "m.png", test::random_image(8, 9, 1, 2));
  const Dataset d = load_dataset(dir);
  ASSERT_EQ(d.ids, (std::vector<std::string>{"m", "z"}));
  EXPECT_EQ(d.images[0].channels(), 3);
  EXPECT_EQ(d.images[0].at(3, 4, 0), d.images[0].at(3, 4, 2));
}
