#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "support/synthetic.hpp"
#include "zscd/zscd.hpp"

using namespace zscd;
using zscd::testing::Rng;

namespace {

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected zscd::Error";
  return ErrorCode::IoFailure;
}

const GridGeometry kGeom{16, 32, 32};

}  // namespace

TEST(Zstf, SmallGridRoundTrip) {
  const auto dir = zscd::testing::temp_dir("zstf_small");
  std::vector<float> v(12);
  for (int i = 0; i < 12; ++i) v[i] = 0.5f * i - 1.0f;
  const PatchEmbeddingGrid g(2, 2, 3, v, kGeom);
  write_tensor(g, dir / "g.zstf");
  const auto back = read_tensor(dir / "g.zstf", kGeom);
  EXPECT_EQ(back.height(), 2u);
  EXPECT_EQ(back.width(), 2u);
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back, g);
}

TEST(Zstf, HeaderIsLittleEndian) {
  const std::array<std::uint32_t, 3> dims{2, 2, 1};
  const std::array<float, 4> vals{1.0f, 2.0f, 3.0f, 4.0f};
  const auto b = encode_zstf(dims, vals);
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 12 + 4 + 16);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "ZSTF");
  EXPECT_EQ(b[4], 1);  // version
  EXPECT_EQ(b[8], 3);  // ndim
  EXPECT_EQ(b[24], 1); // dtype
  // 1.0f == 0x3F800000 stored low byte first
  EXPECT_EQ(static_cast<unsigned char>(b[28]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(b[31]), 0x3F);
}

TEST(Zstf, RandomGridsRoundTripBitwise) {
  const auto dir = zscd::testing::temp_dir("zstf_prop");
  Rng rng(11);
  std::uniform_int_distribution<int> side(2, 9), dim(1, 24);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = side(rng), w = side(rng), d = dim(rng);
    std::vector<float> v(h * w * d);
    for (auto& x : v) {
      do {
        x = std::bit_cast<float>(bits(rng));
      } while (!std::isfinite(x));
    }
    const GridGeometry geom{8, static_cast<int>(h) * 8, static_cast<int>(w) * 8};
    const PatchEmbeddingGrid g(h, w, d, v, geom);
    write_tensor(g, dir / "g.zstf");
    const auto back = read_tensor(dir / "g.zstf", geom);
    ASSERT_EQ(back.height(), h);
    ASSERT_EQ(back.dim(), d);
    ASSERT_EQ(0, std::memcmp(back.data().data(), g.data().data(), v.size() * sizeof(float))) << "trial " << trial;
  }
}

TEST(Zstf, CorruptFilesAreRejected) {
  const auto dir = zscd::testing::temp_dir("zstf_bad");
  const PatchEmbeddingGrid g(2, 2, 3, std::vector<float>(12, 1.0f), kGeom);
  write_tensor(g, dir / "ok.zstf");
  const auto good = bytes_of(dir / "ok.zstf");

  auto write = [&](std::vector<char> b) {
    std::ofstream(dir / "bad.zstf", std::ios::binary | std::ios::trunc).write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / "bad.zstf";
  };

  auto shortened = good;
  shortened.resize(good.size() - 4);
  EXPECT_EQ(code_of([&] { read_zstf(write(shortened)); }), ErrorCode::TruncatedPayload);

  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(code_of([&] { read_zstf(write(magic)); }), ErrorCode::BadMagic);

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(code_of([&] { read_zstf(write(version)); }), ErrorCode::UnsupportedVersion);

  auto dtype = good;
  dtype[24] = 7;
  EXPECT_EQ(code_of([&] { read_zstf(write(dtype)); }), ErrorCode::UnsupportedDtype);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(code_of([&] { read_zstf(write(trailing)); }), ErrorCode::TrailingBytes);

  auto dims = good;
  dims[12] = 3;  // claims 3x2x3 with a 2x2x3 payload
  EXPECT_EQ(code_of([&] { read_zstf(write(dims)); }), ErrorCode::TruncatedPayload);

  auto huge = good;
  huge[15] = 0x7F;  // absurd first dim
  EXPECT_EQ(code_of([&] { read_zstf(write(huge)); }), ErrorCode::TruncatedPayload);

  auto nan = good;
  const auto nan_bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  std::memcpy(&nan[28 + 8], &nan_bits, 4);
  try {
    read_zstf(write(nan));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteValue);
    EXPECT_NE(std::string(e.what()).find("offset 36"), std::string::npos);
  }

  EXPECT_EQ(code_of([&] { read_zstf(dir / "missing.zstf"); }), ErrorCode::IoFailure);
}

TEST(Zstf, GridNeedsThreeDims) {
  const auto dir = zscd::testing::temp_dir("zstf_rank");
  const std::array<std::uint32_t, 2> dims{2, 2};
  const std::array<float, 4> vals{1, 2, 3, 4};
  write_zstf(dir / "r2.zstf", dims, vals);
  EXPECT_EQ(code_of([&] { read_tensor(dir / "r2.zstf", kGeom); }), ErrorCode::BadShape);
}

TEST(Grid, InvariantsEnforced) {
  EXPECT_EQ(code_of([] { PatchEmbeddingGrid(1, 2, 1, std::vector<float>(2, 1.0f), kGeom); }), ErrorCode::BadShape);
  EXPECT_EQ(code_of([] { PatchEmbeddingGrid(2, 2, 1, std::vector<float>(3, 1.0f), kGeom); }), ErrorCode::BadShape);
  EXPECT_EQ(code_of([] {
              PatchEmbeddingGrid(2, 2, 1, {1, 2, std::numeric_limits<float>::infinity(), 4}, kGeom);
            }),
            ErrorCode::NonFiniteValue);
  // 4 patches of 16 px cannot describe a 32 px image
  EXPECT_EQ(code_of([] { PatchEmbeddingGrid(4, 2, 1, std::vector<float>(8, 1.0f), kGeom); }), ErrorCode::BadShape);
  // a partial last patch is fine
  EXPECT_NO_THROW(PatchEmbeddingGrid(3, 3, 1, std::vector<float>(9, 1.0f), GridGeometry{16, 40, 40}));
}

TEST(Rle, DecodeExamples) {
  Segment full{1, {0, 0, 2, 2}, {0, 4}, 4};
  const auto m = decode_rle(full);
  EXPECT_EQ(m.count(), 4u);

  Segment none{2, {0, 0, 2, 2}, {4}, 0};
  EXPECT_EQ(decode_rle(none).count(), 0u);

  Segment diag{3, {0, 0, 2, 2}, {0, 1, 2, 1}, 2};
  const auto d = decode_rle(diag);
  EXPECT_TRUE(d.at(0, 0));
  EXPECT_FALSE(d.at(1, 0));
  EXPECT_FALSE(d.at(0, 1));
  EXPECT_TRUE(d.at(1, 1));
}

TEST(Rle, DecodeErrors) {
  EXPECT_EQ(code_of([] { decode_rle(Segment{1, {0, 0, 2, 2}, {0, 5}, 5}); }), ErrorCode::RunLengthOverflow);
  EXPECT_EQ(code_of([] { decode_rle(Segment{1, {0, 0, 2, 2}, {1, 2}, 2}); }), ErrorCode::InvalidSegment);
  EXPECT_EQ(code_of([] { decode_rle(Segment{1, {0, 0, 2, 2}, {0, 4}, 3}); }), ErrorCode::InvalidSegment);
}

TEST(Rle, RandomMasksRoundTrip) {
  Rng rng(5);
  std::uniform_int_distribution<int> side(0, 20);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int w = side(rng), h = side(rng);
    const auto m = zscd::testing::random_mask(rng, w, h, density(rng));
    Segment s{trial, {0, 0, w, h}, encode_rle(m), m.count()};
    ASSERT_EQ(decode_rle(s), m) << "trial " << trial;
    std::uint64_t sum = 0;
    for (auto r : s.rle) sum += r;
    ASSERT_EQ(sum, static_cast<std::uint64_t>(w) * h);
  }
}

TEST(Segments, FromMaskAndFrame) {
  BinaryMask frame(10, 8);
  frame.set(3, 2);
  frame.set(5, 4);
  const auto s = segment_from_mask(7, frame);
  EXPECT_EQ(s.bbox, (BoundingBox{3, 2, 3, 3}));
  EXPECT_EQ(s.area, 2u);
  EXPECT_EQ(segment_frame_mask(s, 10, 8), frame);
  EXPECT_EQ(code_of([&] { segment_frame_mask(s, 5, 5); }), ErrorCode::InvalidSegment);
  EXPECT_EQ(code_of([] { segment_from_mask(1, BinaryMask(4, 4)); }), ErrorCode::EmptySegment);
}

TEST(Segments, JsonRoundTripAndValidation) {
  const auto dir = zscd::testing::temp_dir("segjson");
  Rng rng(3);
  SegmentSet set{Epoch::T1, {}};
  for (int id = 0; id < 4; ++id) {
    auto m = zscd::testing::random_mask(rng, 12, 9, 0.3);
    m.set(0, 0);
    set.segments.push_back(segment_from_mask(id, m));
  }
  write_segments(set, dir / "s.json");
  const auto back = read_segments(dir / "s.json");
  EXPECT_EQ(back, set);
  EXPECT_NO_THROW(validate_segments(back, 12, 9));

  auto dup = set;
  dup.segments[1].id = dup.segments[0].id;
  EXPECT_EQ(code_of([&] { validate_segments(dup, 12, 9); }), ErrorCode::InvalidSegment);

  const auto j = nlohmann::json::parse(R"({"image_tag":"T0","segments":[{"id":1,"bbox":[0,0,1,1],"area":1,"rle":[0,-1]}]})");
  EXPECT_EQ(code_of([&] { segments_from_json(j); }), ErrorCode::ParseError);
  const auto tag = nlohmann::json::parse(R"({"image_tag":"T2","segments":[]})");
  EXPECT_EQ(code_of([&] { segments_from_json(tag); }), ErrorCode::ParseError);
}

TEST(MaskPng, ZerosAndSinglePixel) {
  const auto dir = zscd::testing::temp_dir("maskpng");
  write_mask_png(BinaryMask(4, 4), dir / "zeros.png");
  int w = 0, h = 0;
  auto gray = read_gray_png(dir / "zeros.png", w, h);
  EXPECT_EQ(w, 4);
  EXPECT_EQ(h, 4);
  EXPECT_EQ(std::count(gray.begin(), gray.end(), 0), 16);

  BinaryMask one(5, 3);
  one.set(2, 1);
  write_mask_png(one, dir / "one.png");
  gray = read_gray_png(dir / "one.png", w, h);
  EXPECT_EQ(std::count(gray.begin(), gray.end(), 255), 1);
  EXPECT_EQ(std::count(gray.begin(), gray.end(), 0), 14);
  EXPECT_EQ(gray[1 * 5 + 2], 255);

  EXPECT_EQ(code_of([&] { write_mask_png(BinaryMask(), dir / "empty.png"); }), ErrorCode::BadShape);
  EXPECT_EQ(code_of([&] { write_mask_png(one, dir / "no" / "such" / "dir.png"); }), ErrorCode::IoFailure);
}

TEST(MaskPng, ReadBackThroughEvaluationLoader) {
  const auto dir = zscd::testing::temp_dir("maskpng_rt");
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = zscd::testing::random_mask(rng, 33, 17, 0.4);
    write_mask_png(m, dir / "m.png");
    EXPECT_EQ(read_mask_png(dir / "m.png"), m);
  }
}

TEST(Manifest, RelativePathsResolveAgainstManifest) {
  const auto dir = zscd::testing::temp_dir("manifest");
  std::filesystem::create_directories(dir / "sub");
  PairManifest m;
  m.pair_id = "p1";
  m.geometry = {16, 64, 48};
  m.t0 = {dir / "a.zstf", dir / "a.json", {}};
  m.t1 = {dir / "b.zstf", dir / "b.json", dir / "b.png"};
  write_pair_manifest(m, dir / "sub" / "p1.json");
  const auto raw = read_json_file(dir / "sub" / "p1.json");
  EXPECT_EQ(raw["t0"]["embedding"], "../a.zstf");
  EXPECT_FALSE(raw.contains("ground_truth"));
  const auto back = read_pair_manifest(dir / "sub" / "p1.json");
  EXPECT_EQ(back.t1.image, (dir / "b.png").lexically_normal());
  EXPECT_EQ(back.geometry.image_width_px, 48);
  EXPECT_TRUE(back.t0.image.empty());
}
