#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "cdcn/checkpoint.hpp"
#include "cdcn/errors.hpp"
#include "cdcn/io.hpp"
#include "test_util.hpp"

using namespace cdcn;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Png, RoundTripIsQuantization) {
  const auto dir = test::scratch_dir("png");
  for (int c : {1, 3}) {
    const Image img = test::random_image(13, 17, c, 1 + c);
    write_png(dir / "a.png", img);
    const Image back = read_png(dir / "a.png");
    ASSERT_EQ(back.channels(), c);
    EXPECT_EQ(max_abs_difference(back, quantize_8bit(img)), 0.0);
    EXPECT_LE(max_abs_difference(back, img), 0.5 / 255.0 + 1e-12);
  }
}

TEST(Png, QuantizeClampsAndRounds) {
  Image img(1, 4, 1);
  img.at(0, 0, 0) = -0.3;
  img.at(0, 1, 0) = 1.7;
  img.at(0, 2, 0) = 10.4 / 255.0;
  img.at(0, 3, 0) = 10.6 / 255.0;
  const Image q = quantize_8bit(img);
  EXPECT_EQ(q.at(0, 0, 0), 0.0);
  EXPECT_EQ(q.at(0, 1, 0), 1.0);
  EXPECT_EQ(q.at(0, 2, 0), 10.0 / 255.0);
  EXPECT_EQ(q.at(0, 3, 0), 11.0 / 255.0);
  EXPECT_EQ(max_abs_difference(quantize_8bit(q), q), 0.0);
}

TEST(Png, MissingOrCorruptFails) {
  const auto dir = test::scratch_dir("png_bad");
  EXPECT_ANY_THROW(read_png(dir / "missing.png"));
  write_bytes(dir / "junk.png", "not a png");
  EXPECT_ANY_THROW(read_png(dir / "junk.png"));
  EXPECT_THROW(write_png(dir / "empty.png", Image()), ValidationError);
}

TEST(Png, ListingIsSorted) {
  const auto dir = test::scratch_dir("png_list");
  for (const char* n : {"b.png", "a.png", "c.txt"}) write_bytes(dir / n, "x");
  const auto files = list_png_files(dir);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.png");
  EXPECT_EQ(files[1].filename(), "b.png");
}

TEST(KernelText, RoundTrip) {
  const auto dir = test::scratch_dir("kernel");
  for (const Kernel& k : {make_isotropic_gaussian({1.7, 21}), make_anisotropic_gaussian({3.1, 0.8, 0.4, 0.2, 11, 11}),
                          make_bicubic_kernel(3)}) {
    write_kernel(dir / "k.txt", k);
    const Kernel back = read_kernel(dir / "k.txt");
    ASSERT_EQ(back.size(), k.size());
    EXPECT_EQ(back.description(), k.description());
    EXPECT_LT(test::max_abs(back.values(), k.values()), 1e-15);
  }
}

TEST(KernelText, RejectsMalformed) {
  EXPECT_ANY_THROW(parse_kernel("3 x\n1 2 3\n"));
  EXPECT_ANY_THROW(parse_kernel("2 even\n0.25 0.25\n0.25 0.25\n"));
  EXPECT_ANY_THROW(parse_kernel(""));
}

TEST(F32, RoundTripIsFloatRounding) {
  const auto dir = test::scratch_dir("f32");
  Image img = test::random_image(5, 9, 3, 4);
  img.at(0, 0, 0) = -0.75;  // detail maps are signed
  write_f32(dir / "a.f32", img);
  const Image back = read_f32(dir / "a.f32");
  ASSERT_EQ(back.height(), 5);
  ASSERT_EQ(back.width(), 9);
  for (std::size_t i = 0; i < img.size(); ++i)
    EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(img.values()[i])));
  const std::string bytes = read_bytes(dir / "a.f32");
  EXPECT_EQ(bytes.rfind("CDCNF32 5 9 3\n", 0), 0u);
  write_bytes(dir / "short.f32", bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(read_f32(dir / "short.f32"), ArtifactMismatch);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  const auto dir = test::scratch_dir("ckpt");
  const ModelConfig cfg{1, 2, 8, 3, 0.2, 4, Ablation::fuse_concat};
  const ModelParams p = ModelParams::initialize(cfg, 3);
  save_checkpoint(dir / "m.cdcn", p);
  const ModelParams back = load_checkpoint(dir / "m.cdcn");
  EXPECT_EQ(back.config(), cfg);
  ASSERT_EQ(back.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(back.spec(i).name, p.spec(i).name);
    for (std::size_t j = 0; j < p.tensor(i).numel(); ++j)
      EXPECT_EQ(back.tensor(i).data()[j], static_cast<double>(static_cast<float>(p.tensor(i).data()[j])));
  }
}

TEST(Checkpoint, ConfigLineRoundTrip) {
  const ModelConfig cfg{5, 10, 64, 4, 0.2, 16, Ablation::no_decomposition};
  EXPECT_EQ(parse_model_config(format_model_config(cfg)), cfg);
  EXPECT_THROW(parse_model_config("num_groups=5"), ValidationError);
}

TEST(Checkpoint, CorruptFilesAreArtifactMismatches) {
  const auto dir = test::scratch_dir("ckpt_bad");
  save_checkpoint(dir / "m.cdcn", ModelParams::initialize({1, 1, 4, 2, 0.2, 2, Ablation::full}, 1));
  const std::string bytes = read_bytes(dir / "m.cdcn");
  write_bytes(dir / "magic.cdcn", "XXXX" + bytes.substr(4));
  EXPECT_THROW(load_checkpoint(dir / "magic.cdcn"), ArtifactMismatch);
  write_bytes(dir / "trunc.cdcn", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "trunc.cdcn"), ArtifactMismatch);
  EXPECT_ANY_THROW(load_checkpoint(dir / "missing.cdcn"));
}
