#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "support/synthetic.hpp"

using namespace zscd;
namespace fs = std::filesystem;
using zscd::testing::SceneSpec;

namespace {

std::string slurp(const fs::path& p) {
  const auto bytes = detail::read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = zscd::testing::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    cfg.output = dir / "out";
  }
  void TearDown() override { fs::remove_all(dir); }

  int detect(const std::vector<fs::path>& inputs) { return cmd_detect(cfg, inputs, DatasetTag::Custom, out, err); }

  fs::path dir;
  PipelineConfig cfg;
  std::ostringstream out, err;
};

}  // namespace

TEST(Config, JsonOverridesDefaults) {
  const auto j = nlohmann::json::parse(R"({"tau": 0.7, "beta": 0.3, "ransac": {"iterations": 50, "seed": 9,
    "inlier_tolerance_px": 12.5}, "mutual_nn": true, "sweep": [0.5, 0.6], "jobs": 3, "output": "x"})");
  const auto c = config_from_json(j);
  EXPECT_EQ(c.change.tau, 0.7);
  EXPECT_EQ(c.change.alpha, 0.8);
  EXPECT_EQ(c.change.beta, 0.3);
  EXPECT_EQ(c.ransac_iterations, 50u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.mutual_nn);
  EXPECT_EQ(c.sweep, (std::vector<double>{0.5, 0.6}));
  EXPECT_EQ(c.jobs, 3u);
  EXPECT_EQ(c.output, "x");
  EXPECT_EQ(c.ransac_for(16).inlier_tolerance_px, 12.5);
  EXPECT_EQ(PipelineConfig{}.ransac_for(16).inlier_tolerance_px, 20.0);
  EXPECT_EQ(config_from_json(config_to_json(c)).ransac_for(16).inlier_tolerance_px, 12.5);
}

TEST(Config, Validation) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"tau": "high"})")), Error);
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.jobs = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.sweep = {0.5, 3.0};
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.change.beta = 1.5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, NumberFormatting) {
  EXPECT_EQ(format_number(0.65), "0.65");
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(sweep_dir("o", 0.7), fs::path("o") / "tau_0.7");
}

TEST_F(PipelineTest, PlantedSquareIsRecoveredWithIdentityAlignment) {
  const auto scene = zscd::testing::make_scene(SceneSpec{}, 21);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "ident");
  ASSERT_EQ(detect({manifest}), 0) << err.str();
  const auto mask = read_mask_png(cfg.output / "ident.png");
  EXPECT_GE(zscd::testing::iou(mask, scene.planted), 0.9);
  const auto j = read_json_file(cfg.output / "ident.json");
  EXPECT_EQ(j["pair_id"], "ident");
  EXPECT_EQ(j["changed_pixels"], mask.count());
  EXPECT_NEAR(j["homography"]["matrix"][0][2].get<double>(), 0.0, 0.5);
}

TEST_F(PipelineTest, PlantedSquareIsRecoveredUnderTranslation) {
  SceneSpec spec;
  spec.shift_x = 2;
  spec.shift_y = -1;
  const auto scene = zscd::testing::make_scene(spec, 22);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "shifted");
  ASSERT_EQ(detect({manifest}), 0) << err.str();
  const auto mask = read_mask_png(cfg.output / "shifted.png");
  EXPECT_GE(zscd::testing::iou(mask, scene.planted), 0.9);
  const auto j = read_json_file(cfg.output / "shifted.json");
  EXPECT_NEAR(j["homography"]["matrix"][0][2].get<double>(), 32.0, 0.5);
  EXPECT_NEAR(j["homography"]["matrix"][1][2].get<double>(), -16.0, 0.5);
}

TEST_F(PipelineTest, NoChangeSceneGivesEmptyMask) {
  SceneSpec spec;
  spec.plant = false;
  spec.shift_x = 1;
  const auto scene = zscd::testing::make_scene(spec, 23);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "same");
  ASSERT_EQ(detect({manifest}), 0) << err.str();
  EXPECT_EQ(read_mask_png(cfg.output / "same.png").count(), 0u);
}

TEST_F(PipelineTest, EmptyBatchIsFatal) {
  write_json_file({{"pairs", nlohmann::json::array()}}, dir / "batch.json");
  EXPECT_EQ(detect({dir / "batch.json"}), 1);
  const auto j = nlohmann::json::parse(err.str());
  EXPECT_EQ(j["error"]["code"], "NoPairs");
  EXPECT_EQ(j["error"]["message"], "no pairs");
}

TEST_F(PipelineTest, MissingEmbeddingIsFatal) {
  const auto scene = zscd::testing::make_scene(SceneSpec{}, 24);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "p");
  fs::remove(dir / "data" / "data" / "p_t1.zstf");
  EXPECT_EQ(detect({manifest}), 1);
  EXPECT_EQ(nlohmann::json::parse(err.str())["error"]["code"], "MissingFile");
}

TEST_F(PipelineTest, BatchAndDatasetInputsAgree) {
  const auto scene = zscd::testing::make_scene(SceneSpec{}, 25);
  const auto m1 = zscd::testing::write_scene(scene, dir / "data", "a");
  const auto m2 = zscd::testing::write_scene(scene, dir / "data", "b");
  write_json_file({{"pairs", {"data/pairs/a.json", read_json_file(m2)}}}, dir / "batch.json");
  auto pairs = collect_pairs({dir / "batch.json"}, DatasetTag::Custom);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].t0.embedding, read_pair_manifest(m1).t0.embedding);
  EXPECT_EQ(pairs[1].pair_id, "b");
  pairs = collect_pairs({dir / "data"}, DatasetTag::Custom);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_THROW(collect_pairs({m1, m1}, DatasetTag::Custom), Error);
}

TEST_F(PipelineTest, NoConsensusPairIsSkippedWithPartialExit) {
  const auto good = zscd::testing::make_scene(SceneSpec{}, 26);
  SceneSpec tiny;
  tiny.grid = 3;
  tiny.plant = false;
  const auto bad = zscd::testing::make_scene(tiny, 27);
  const auto m_good = zscd::testing::write_scene(good, dir / "data", "good");
  const auto m_bad = zscd::testing::write_scene(bad, dir / "data", "tiny");
  cfg.min_inliers = 20;  // a 3x3 grid has only 9 correspondences
  EXPECT_EQ(detect({m_good, m_bad}), 2);
  EXPECT_TRUE(fs::exists(cfg.output / "good.png"));
  EXPECT_FALSE(fs::exists(cfg.output / "tiny.png"));
  const auto j = nlohmann::json::parse(err.str());
  EXPECT_EQ(j["skipped"]["pair_id"], "tiny");
  EXPECT_EQ(j["skipped"]["code"], "NoConsensus");
  EXPECT_EQ(nlohmann::json::parse(out.str())["skipped"], 1);
}

TEST_F(PipelineTest, OutputsAreDeterministicAcrossRunsJobsAndCache) {
  std::vector<fs::path> manifests;
  for (int i = 0; i < 4; ++i) {
    SceneSpec spec;
    spec.shift_x = i % 3 - 1;
    manifests.push_back(zscd::testing::write_scene(zscd::testing::make_scene(spec, 30 + i), dir / "data",
                                                   "p" + std::to_string(i)));
  }
  ASSERT_EQ(detect(manifests), 0) << err.str();
  cfg.output = dir / "out2";
  cfg.jobs = 4;
  cfg.cache_dir = dir / "cache";
  ASSERT_EQ(detect(manifests), 0) << err.str();
  cfg.output = dir / "out3";
  ASSERT_EQ(detect(manifests), 0) << err.str();  // served from the disk cache
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "cache"), fs::directory_iterator{}), 4);
  for (int i = 0; i < 4; ++i) {
    for (const char* ext : {".png", ".json"}) {
      const std::string name = "p" + std::to_string(i) + ext;
      EXPECT_EQ(slurp(dir / "out" / name), slurp(dir / "out2" / name)) << name;
      EXPECT_EQ(slurp(dir / "out" / name), slurp(dir / "out3" / name)) << name;
    }
  }
}

TEST(HomographyCacheKey, DependsOnInputsAndSettings) {
  const std::vector<char> a{'a', 'b'}, b{'c'};
  RansacConfig r;
  const auto k = HomographyCache::key(a, b, r, false);
  EXPECT_EQ(k.size(), 64u);
  EXPECT_EQ(k, HomographyCache::key(a, b, r, false));
  EXPECT_NE(k, HomographyCache::key(b, a, r, false));
  EXPECT_NE(k, HomographyCache::key(a, b, r, true));
  r.seed = 1;
  EXPECT_NE(k, HomographyCache::key(a, b, r, false));
}

class EvaluateTest : public PipelineTest {
 protected:
  void SetUp() override {
    PipelineTest::SetUp();
    for (int i = 0; i < 3; ++i) {
      SceneSpec spec;
      spec.plant_x = 32 + 48 * i;
      zscd::testing::write_scene(zscd::testing::make_scene(spec, 40 + i), dir / "ds", "p" + std::to_string(i));
    }
    fs::create_directories(dir / "pred");
  }
  BinaryMask truth(int i) { return read_mask_png(dir / "ds" / "gt" / ("p" + std::to_string(i) + ".png")); }
};

TEST_F(EvaluateTest, PerfectPredictionsScoreOne) {
  for (int i = 0; i < 3; ++i) fs::copy_file(dir / "ds" / "gt" / ("p" + std::to_string(i) + ".png"), dir / "pred" / ("p" + std::to_string(i) + ".png"));
  ASSERT_EQ(cmd_evaluate(cfg, dir / "pred", dir / "ds", DatasetTag::Custom, out, err), 0) << err.str();
  const auto j = read_json_file(cfg.output / "report.json");
  EXPECT_EQ(j["micro"]["f1"], 1.0);
  EXPECT_EQ(j["macro"]["f1"], 1.0);
  EXPECT_TRUE(fs::exists(cfg.output / "report.txt"));
}

TEST_F(EvaluateTest, EmptyPredictionsScoreZero) {
  for (int i = 0; i < 3; ++i) write_mask_png(BinaryMask(256, 256), dir / "pred" / ("p" + std::to_string(i) + ".png"));
  ASSERT_EQ(cmd_evaluate(cfg, dir / "pred", dir / "ds", DatasetTag::Custom, out, err), 0) << err.str();
  const auto j = read_json_file(cfg.output / "report.json");
  EXPECT_EQ(j["micro"]["f1"], 0.0);
  EXPECT_EQ(j["micro"]["fn"], 3 * 48 * 48);
}

TEST_F(EvaluateTest, HandComputedCounts) {
  // each prediction: truth shifted right by 12 px
  for (int i = 0; i < 3; ++i) {
    write_mask_png(zscd::testing::rect_mask(256, 256, 32 + 48 * i + 12, 96, 48, 48),
                   dir / "pred" / ("p" + std::to_string(i) + ".png"));
  }
  ASSERT_EQ(cmd_evaluate(cfg, dir / "pred", dir / "ds", DatasetTag::Custom, out, err), 0) << err.str();
  const auto j = read_json_file(cfg.output / "report.json");
  EXPECT_EQ(j["micro"]["tp"], 3 * 36 * 48);
  EXPECT_EQ(j["micro"]["fp"], 3 * 12 * 48);
  EXPECT_EQ(j["micro"]["fn"], 3 * 12 * 48);
  EXPECT_NEAR(j["micro"]["f1"].get<double>(), 0.75, 1e-12);
  EXPECT_NEAR(j["pairs"][1]["precision"].get<double>(), 0.75, 1e-12);
}

TEST_F(EvaluateTest, MissingPredictionIsReported) {
  write_mask_png(truth(0), dir / "pred" / "p0.png");
  EXPECT_EQ(cmd_evaluate(cfg, dir / "pred", dir / "ds", DatasetTag::Custom, out, err), 1);
  const auto j = nlohmann::json::parse(err.str());
  EXPECT_EQ(j["error"]["code"], "MissingPrediction");
  EXPECT_EQ(j["error"]["message"], "p1,p2");
}

TEST_F(EvaluateTest, SweepRowsNestAndMatchDetect) {
  cfg.sweep = {0.5, 0.65};
  ASSERT_EQ(cmd_sweep(cfg, {dir / "ds"}, DatasetTag::Custom, out, err), 0) << err.str();
  const auto j = read_json_file(cfg.output / "sweep.json");
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_GE(j["rows"][0]["changed_patches"].get<std::size_t>(), j["rows"][1]["changed_patches"].get<std::size_t>());
  for (int i = 0; i < 3; ++i) {
    const auto lo = read_mask_png(sweep_dir(cfg.output, 0.5) / ("p" + std::to_string(i) + ".png"));
    const auto hi = read_mask_png(sweep_dir(cfg.output, 0.65) / ("p" + std::to_string(i) + ".png"));
    EXPECT_TRUE((hi & lo) == hi) << "tau 0.65 mask not inside tau 0.5 mask";
  }

  for (double tau : cfg.sweep) {
    PipelineConfig single = cfg;
    single.change.tau = tau;
    single.output = dir / ("detect_" + format_number(tau));
    ASSERT_EQ(cmd_detect(single, {dir / "ds"}, DatasetTag::Custom, out, err), 0);
    for (int i = 0; i < 3; ++i) {
      const std::string name = "p" + std::to_string(i) + ".png";
      EXPECT_EQ(slurp(single.output / name), slurp(sweep_dir(cfg.output, tau) / name));
    }
  }
}

TEST_F(EvaluateTest, SingleTauSweepEqualsDetectThenEvaluate) {
  cfg.sweep = {0.65};
  ASSERT_EQ(cmd_sweep(cfg, {dir / "ds"}, DatasetTag::Custom, out, err), 0) << err.str();
  const auto row = read_json_file(cfg.output / "sweep.json")["rows"][0];
  PipelineConfig d = cfg;
  d.output = dir / "det";
  ASSERT_EQ(cmd_detect(d, {dir / "ds"}, DatasetTag::Custom, out, err), 0);
  d.output = dir / "eval";
  ASSERT_EQ(cmd_evaluate(d, dir / "det", dir / "ds", DatasetTag::Custom, out, err), 0);
  const auto rep = read_json_file(dir / "eval" / "report.json");
  EXPECT_EQ(row["micro"], rep["micro"]);
  EXPECT_EQ(row["macro"], rep["macro"]);
  EXPECT_GT(rep["micro"]["f1"].get<double>(), 0.9);
}

TEST(Overlay, EmptyMaskLeavesImageUnchanged) {
  zscd::testing::Rng rng(50);
  RgbImage img{9, 7, std::vector<std::uint8_t>(9 * 7 * 3)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  EXPECT_EQ(overlay(img, BinaryMask(9, 7)).pixels, img.pixels);
  EXPECT_THROW(overlay(img, BinaryMask(7, 9)), Error);
}

TEST(Overlay, ChangedPixelsFollowTheBlendFormula) {
  zscd::testing::Rng rng(51);
  RgbImage img{16, 16, std::vector<std::uint8_t>(16 * 16 * 3)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  const auto mask = zscd::testing::random_mask(rng, 16, 16, 0.5);
  const auto out = overlay(img, mask);
  const int tint[3] = {255, 0, 0};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const int c = img.pixels[3 * i + ch];
      const int want = mask.cells()[i] ? static_cast<int>(std::lround((c * 127.0 + tint[ch] * 128.0) / 255.0)) : c;
      ASSERT_EQ(out.pixels[3 * i + ch], want) << i;
    }
  }
  const auto full = overlay(img, zscd::testing::rect_mask(16, 16, 0, 0, 16, 16));
  for (std::size_t i = 0; i < 256; ++i) {
    EXPECT_GE(full.pixels[3 * i], img.pixels[3 * i]);
    EXPECT_LE(full.pixels[3 * i + 1], img.pixels[3 * i + 1]);
  }
}

TEST_F(PipelineTest, OverlayCommandUsesManifestImage) {
  const auto scene = zscd::testing::make_scene(SceneSpec{}, 60);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "ov");
  write_mask_png(scene.planted, dir / "mask.png");
  ASSERT_EQ(cmd_overlay(cfg, manifest, dir / "mask.png", out, err), 0) << err.str();
  const auto img = read_rgb_png(read_pair_manifest(manifest).t1.image);
  EXPECT_EQ(read_rgb_png(cfg.output / "ov_overlay.png").pixels, overlay(img, scene.planted).pixels);
}

#ifdef ZSCD_CLI_PATH
TEST_F(PipelineTest, CliExitCodes) {
  const auto scene = zscd::testing::make_scene(SceneSpec{}, 70);
  const auto manifest = zscd::testing::write_scene(scene, dir / "data", "cli");
  const std::string cli = ZSCD_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >" + (dir / "o.txt").string() + " 2>" + (dir / "e.txt").string()).c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("detect " + manifest.string() + " --output " + (dir / "cli_out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cli_out" / "cli.png"));
  write_json_file({{"pairs", nlohmann::json::array()}}, dir / "empty.json");
  EXPECT_EQ(run("detect " + (dir / "empty.json").string()), 1);
  EXPECT_NE(slurp(dir / "e.txt").find("no pairs"), std::string::npos);
  EXPECT_EQ(run("detect " + manifest.string() + " --tau 9"), 1);
  EXPECT_EQ(run("evaluate " + (dir / "cli_out").string() + " " + (dir / "data").string() + " --output " +
                (dir / "ev").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "ev" / "report.json"));
  EXPECT_EQ(run("sweep " + (dir / "data").string() + " --sweep 0.5,0.65 --output " + (dir / "sw").string()), 0);
  EXPECT_EQ(read_json_file(dir / "sw" / "sweep.json")["rows"].size(), 2u);
  EXPECT_EQ(run("overlay " + manifest.string() + " " + (dir / "cli_out" / "cli.png").string() + " --output " +
                (dir / "ov").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "ov" / "cli_overlay.png"));
}
#endif
