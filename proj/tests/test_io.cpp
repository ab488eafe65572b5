#include <gtest/gtest.h>

#include <fstream>

#include "latentforge/code_io.hpp"
#include "latentforge/hash.hpp"
#include "latentforge/image_io.hpp"
#include "latentforge/manifest.hpp"
#include "latentforge/rng.hpp"
#include "latentforge/types.hpp"
#include "test_support.hpp"

namespace {

lf::Image gradient_image(int h, int w) {
  lf::Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::fmod(0.013 * (y * w + x) + 0.31 * c, 1.0);
  return img;
}

TEST(Png, QuantizedRoundTripIsExact) {
  const lf::Image img = lf::quantized(gradient_image(7, 9));
  const auto back = lf::decode_png(lf::encode_png(img));
  EXPECT_EQ(back.height, 7);
  EXPECT_EQ(back.width, 9);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Png, RoundTripQuantizesToNearestLevel) {
  lf::Image img(1, 2);
  img.pixels = {0.0, 1.0, 0.5, 0.001, 0.999, 1.7};
  const auto back = lf::decode_png(lf::encode_png(img));
  EXPECT_EQ(back.pixels[0], 0.0);
  EXPECT_EQ(back.pixels[1], 1.0);
  EXPECT_EQ(back.pixels[2], 128.0 / 255.0);
  EXPECT_EQ(back.pixels[3], 0.0);
  EXPECT_EQ(back.pixels[4], 1.0);
  EXPECT_EQ(back.pixels[5], 1.0);
}

TEST(Png, TextChunksAndDeterministicBytes) {
  const lf::Image img = gradient_image(4, 4);
  const std::map<std::string, std::string> text = {{"config", "{\"a\":1}"}, {"tool_version", "x"}};
  const auto bytes = lf::encode_png(img, text);
  EXPECT_EQ(bytes, lf::encode_png(img, text));
  EXPECT_EQ(lf::decode_png_with_text(bytes).text, text);
}

TEST(Png, GarbageRejected) {
  EXPECT_THROW(lf::decode_png("not a png at all"), lf::Error);
  auto bytes = lf::encode_png(gradient_image(8, 8));
  EXPECT_THROW(lf::decode_png(bytes.substr(0, bytes.size() / 2)), lf::Error);
  EXPECT_THROW(lf::encode_png(lf::Image()), lf::ShapeError);
}

TEST(Png, DirectoryListingSorted) {
  lf::testing::TempDir dir;
  for (const char* n : {"b.png", "a.png", "c.txt"}) {
    if (std::string(n).ends_with(".png")) lf::write_png(dir.path() / n, lf::Image(2, 2, 0.5));
    else lf::write_file(dir.path() / n, "x");
  }
  const auto files = lf::list_pngs(dir.path());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.png");
  EXPECT_EQ(lf::read_png_dir(dir.path()).size(), 2u);
}

TEST(CodeFile, RoundTripWithProvenance) {
  lf::ExtendedCode c(Eigen::MatrixXd::Random(4, 16));
  const auto bytes = lf::encode_code(c, lf::SeedProvenance{7, 42});
  const auto back = lf::decode_code(bytes);
  ASSERT_EQ(back.code.layers(), 4);
  ASSERT_EQ(back.code.dim(), 16);
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < 16; ++j) EXPECT_EQ(back.code.rows(l, j), static_cast<double>(static_cast<float>(c.rows(l, j))));
  ASSERT_TRUE(back.provenance.has_value());
  EXPECT_EQ(*back.provenance, (lf::SeedProvenance{7, 42}));
  // little-endian float32 payload after the header
  const std::uint32_t hlen = static_cast<unsigned char>(bytes[0]) | static_cast<unsigned char>(bytes[1]) << 8;
  float first;
  std::memcpy(&first, bytes.data() + 4 + hlen, 4);
  EXPECT_EQ(first, static_cast<float>(c.rows(0, 0)));
}

TEST(CodeFile, TruncationDetected) {
  const auto bytes = lf::encode_code(lf::ExtendedCode(Eigen::MatrixXd::Ones(2, 3)));
  EXPECT_THROW(lf::decode_code(bytes.substr(0, bytes.size() - 1)), lf::Error);
  EXPECT_THROW(lf::decode_code(bytes.substr(0, 2)), lf::Error);
  EXPECT_FALSE(lf::decode_code(bytes).provenance.has_value());
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(lf::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(lf::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, FilesAndParentDirectories) {
  lf::testing::TempDir dir;
  const auto p = dir.path() / "deep" / "er" / "f.bin";
  lf::write_file(p, "abc");
  EXPECT_EQ(lf::read_file(p), "abc");
  EXPECT_EQ(lf::sha256_file(p), lf::sha256_hex("abc"));
  EXPECT_THROW(lf::read_file(dir.path() / "missing"), lf::Error);
}

lf::DatasetManifest sample_manifest() {
  lf::DatasetManifest m;
  m.task = "gender";
  m.view = "0to1";
  m.config = {{"forge", {{"seed", 11}}}};
  m.bundle_hash = "abc";
  for (int i = 0; i < 3; ++i) {
    lf::SampleRecord r;
    r.id = "gender-00000" + std::to_string(i);
    r.seed = 11;
    r.index = static_cast<std::uint64_t>(i);
    r.task = "gender";
    r.split = "train";
    r.labels.push_back({"s-1", -1.0, {1.0, 0, 0.99, -2.5}});
    if (i == 1) {
      r.rejection = "class 1 unrepresented";
    } else {
      r.roles = {{"source", "train/a.png"}, {"target", "train/b.png"}};
      r.chosen_scales = {{"source", -1.0}, {"target", 1.0}};
    }
    m.records.push_back(r);
  }
  m.recount();
  return m;
}

TEST(Manifest, SerializeParseRoundTrip) {
  const auto m = sample_manifest();
  EXPECT_EQ(m.counts.generated, 3u);
  EXPECT_EQ(m.counts.accepted, 2u);
  EXPECT_EQ(m.counts.filtered, 1u);
  const auto text = lf::serialize_manifest(m);
  const auto back = lf::parse_manifest(text);
  EXPECT_EQ(lf::serialize_manifest(back), text);
  EXPECT_EQ(lf::manifest_hash(back), lf::manifest_hash(m));
  EXPECT_EQ(back.accepted().size(), 2u);
  EXPECT_EQ(back.records[1].rejection, "class 1 unrepresented");
  // header first, one record per line
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(lf::Json::parse(text.substr(0, text.find('\n')))["type"], "header");
}

TEST(Manifest, FileRootAndErrors) {
  lf::testing::TempDir dir;
  const auto path = dir.path() / "gender" / "manifest_0to1.jsonl";
  lf::write_manifest(path, sample_manifest());
  const auto m = lf::read_manifest(path);
  EXPECT_EQ(m.resolve("train/a.png"), dir.path() / "gender" / "train/a.png");
  EXPECT_THROW(lf::parse_manifest(""), lf::Error);
  EXPECT_THROW(lf::parse_manifest("{\"type\":\"sample\"}\n"), lf::Error);
}

TEST(Rng, StreamsAreKeyedByIndexOnly) {
  lf::Rng a(7, 3, 1), b(7, 3, 1), c(7, 4, 1), d(7, 3, 2);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
  lf::Rng u(1, 0, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    ASSERT_LT(u.below(7), 7u);
  }
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  lf::Rng(3, 0, 0).shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(ImageOps, ResizeAndMetrics) {
  const lf::Image flat(8, 8, 0.4);
  const auto small = lf::resize_bilinear(flat, 3, 5);
  for (double v : small.pixels) EXPECT_NEAR(v, 0.4, 1e-15);
  const auto img = gradient_image(6, 6);
  EXPECT_EQ(lf::resize_bilinear(img, 6, 6).pixels, img.pixels);
  // 2x downsample with half-pixel centers averages 2x2 blocks
  const auto half = lf::resize_bilinear(img, 3, 3);
  for (int c = 0; c < 3; ++c)
    EXPECT_NEAR(half.at(0, 0, c), (img.at(0, 0, c) + img.at(0, 1, c) + img.at(1, 0, c) + img.at(1, 1, c)) / 4, 1e-12);
  lf::Image a(2, 2, 0.5), b(2, 2, 0.6);
  EXPECT_NEAR(lf::mean_abs_diff(a, b), 0.1, 1e-12);
  EXPECT_NEAR(lf::psnr(a, b), 20.0, 1e-9);
  EXPECT_TRUE(std::isinf(lf::psnr(a, a)));
  EXPECT_THROW(lf::mean_abs_diff(a, lf::Image(3, 2)), lf::ShapeError);
}

}  // namespace
