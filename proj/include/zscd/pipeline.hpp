#pragma once

// End-to-end orchestration behind the `zscd` command-line tool: config
// handling, per-pair preparation with homography caching, and the detect /
// evaluate / sweep / overlay commands.
//
// Exit codes: 0 success, 2 partial (some pairs had no homography consensus),
// 1 fatal. Fatal errors print {"error": {"code": ..., "message": ...}} on
// stderr; skipped pairs print {"skipped": {"pair_id": ..., "code": ...,
// "message": ...}}, one JSON object per line.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "zscd/change.hpp"
#include "zscd/correspondence.hpp"
#include "zscd/error.hpp"
#include "zscd/evaluation.hpp"
#include "zscd/geometry.hpp"
#include "zscd/image_io.hpp"
#include "zscd/manifest.hpp"
#include "zscd/segments.hpp"
#include "zscd/tensor_store.hpp"

namespace zscd {

inline constexpr const char* kCacheDirEnv = "ZSCD_CACHE_DIR";

struct PipelineConfig {
  ChangeParams change;
  std::size_t ransac_iterations = 2000;
  double inlier_tolerance_factor = 1.25;             // times the patch size
  std::optional<double> inlier_tolerance_px;         // overrides the factor
  std::uint64_t seed = 0;
  std::size_t min_inliers = 8;
  bool mutual_nn = false;
  std::filesystem::path backend;                     // default input manifest
  std::filesystem::path output = "zscd_out";
  std::vector<double> sweep;
  std::size_t jobs = 1;
  std::filesystem::path cache_dir;                   // empty disables the disk cache

  RansacConfig ransac_for(int patch_size_px) const {
    RansacConfig r;
    r.iterations = ransac_iterations;
    r.inlier_tolerance_px = inlier_tolerance_px.value_or(inlier_tolerance_factor * patch_size_px);
    r.seed = seed;
    r.min_inliers = min_inliers;
    return r;
  }

  void validate() const {
    change.validate();
    if (ransac_iterations < 1) throw Error(ErrorCode::InvalidParameter, "ransac iterations must be >= 1");
    if (!(inlier_tolerance_factor > 0.0)) throw Error(ErrorCode::InvalidParameter, "tolerance factor must be > 0");
    if (inlier_tolerance_px && !(*inlier_tolerance_px > 0.0)) {
      throw Error(ErrorCode::InvalidParameter, "inlier tolerance must be > 0");
    }
    if (jobs < 1) throw Error(ErrorCode::InvalidParameter, "jobs must be >= 1");
    for (double t : sweep) {
      ChangeParams p = change;
      p.tau = t;
      p.validate();
    }
  }
};

/// Reads a config JSON over `base`; absent keys keep their base value.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {}) {
  try {
    auto& c = base.change;
    c.tau = j.value("tau", c.tau);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.min_segment_area = j.value("min_segment_area", c.min_segment_area);
    if (j.contains("ransac")) {
      const auto& r = j.at("ransac");
      base.ransac_iterations = r.value("iterations", base.ransac_iterations);
      base.inlier_tolerance_factor = r.value("tolerance_factor", base.inlier_tolerance_factor);
      if (r.contains("inlier_tolerance_px") && !r.at("inlier_tolerance_px").is_null()) {
        base.inlier_tolerance_px = r.at("inlier_tolerance_px").get<double>();
      }
      base.seed = r.value("seed", base.seed);
      base.min_inliers = r.value("min_inliers", base.min_inliers);
    }
    base.mutual_nn = j.value("mutual_nn", base.mutual_nn);
    if (j.contains("backend")) base.backend = j.at("backend").get<std::string>();
    if (j.contains("output")) base.output = j.at("output").get<std::string>();
    if (j.contains("sweep")) base.sweep = j.at("sweep").get<std::vector<double>>();
    base.jobs = j.value("jobs", base.jobs);
    return base;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + ex.what());
  }
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json ransac{{"iterations", c.ransac_iterations},
                        {"tolerance_factor", c.inlier_tolerance_factor},
                        {"inlier_tolerance_px", c.inlier_tolerance_px ? nlohmann::json(*c.inlier_tolerance_px) : nlohmann::json()},
                        {"seed", c.seed},
                        {"min_inliers", c.min_inliers}};
  return {{"tau", c.change.tau},   {"alpha", c.change.alpha}, {"beta", c.change.beta},
          {"min_segment_area", c.change.min_segment_area}, {"ransac", ransac}, {"mutual_nn", c.mutual_nn}};
}

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Homography cache

namespace detail {

inline std::string sha256_hex(const std::vector<std::vector<char>>& parts) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error(ErrorCode::IoFailure, "EVP_MD_CTX_new failed");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1;
  for (const auto& p : parts) ok = ok && EVP_DigestUpdate(ctx, p.data(), p.size()) == 1;
  ok = ok && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error(ErrorCode::IoFailure, "sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline nlohmann::json homography_to_json(const Homography& h) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({h.m(r, 0), h.m(r, 1), h.m(r, 2)});
  return {{"matrix", rows}, {"inlier_count", h.inlier_count}, {"inlier_ratio", h.inlier_ratio}};
}

inline Homography homography_from_json(const nlohmann::json& j) {
  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.m(r, c) = j.at("matrix").at(r).at(c).get<double>();
  h.inlier_count = j.at("inlier_count").get<std::size_t>();
  h.inlier_ratio = j.at("inlier_ratio").get<double>();
  return h;
}

}  // namespace detail

/// Homographies keyed by the content hash of both embedding files plus every
/// setting that influences the fit. Backed by an optional directory.
class HomographyCache {
 public:
  explicit HomographyCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  static std::string key(const std::vector<char>& emb_t0, const std::vector<char>& emb_t1, const RansacConfig& r,
                         bool mutual) {
    const std::string settings = "zscd-h1|" + std::to_string(r.iterations) + "|" + format_number(r.inlier_tolerance_px) +
                                 "|" + std::to_string(r.seed) + "|" + std::to_string(r.min_inliers) + "|" +
                                 (mutual ? "mutual" : "argmax");
    return detail::sha256_hex({emb_t0, {'|'}, emb_t1, std::vector<char>(settings.begin(), settings.end())});
  }

  std::optional<Homography> find(const std::string& key) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (dir_.empty()) return std::nullopt;
    const auto path = dir_ / (key + ".json");
    if (!std::filesystem::is_regular_file(path)) return std::nullopt;
    try {
      Homography h = detail::homography_from_json(read_json_file(path));
      std::lock_guard lock(mutex_);
      memory_.emplace(key, h);
      return h;
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are recomputed
    }
  }

  void store(const std::string& key, const Homography& h) {
    {
      std::lock_guard lock(mutex_);
      memory_.emplace(key, h);
    }
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    const auto tmp = dir_ / (key + ".json.tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    write_json_file(detail::homography_to_json(h), tmp);
    std::filesystem::rename(tmp, dir_ / (key + ".json"));
  }

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, Homography> memory_;
};

inline std::filesystem::path default_cache_dir() {
  const char* env = std::getenv(kCacheDirEnv);
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

// ---------------------------------------------------------------------------
// Per-pair work

/// Everything about a pair that does not depend on tau, alpha or beta.
struct PreparedPair {
  PairManifest manifest;
  Homography h;               // T0 -> T1
  CoarseChangeMap forward;    // T0 patches looked up in T1
  CoarseChangeMap backward;   // T1 patches looked up in T0
  DecodedSegments segs_t0;
  DecodedSegments segs_t1;
};

inline DecodedSegments load_epoch_segments(const std::filesystem::path& path, Epoch expected, const GridGeometry& g) {
  const SegmentSet set = read_segments(path);
  if (set.image_tag != expected) {
    throw Error(ErrorCode::InvalidSegment, path.string() + ": image_tag is " + std::string(to_string(set.image_tag)) +
                                               ", expected " + std::string(to_string(expected)));
  }
  return decode_segments(set, g.image_width_px, g.image_height_px);
}

inline PreparedPair prepare_pair(const PairManifest& m, const PipelineConfig& cfg, HomographyCache& cache) {
  require_pair_files(m);
  const auto bytes_t0 = detail::read_file_bytes(m.t0.embedding);
  const auto bytes_t1 = detail::read_file_bytes(m.t1.embedding);
  auto as_grid = [&](const std::vector<char>& bytes, const std::filesystem::path& path) {
    RawTensor t = decode_zstf(bytes);
    if (t.dims.size() != 3) throw Error(ErrorCode::BadShape, path.string() + ": embedding grid must have 3 dims");
    return PatchEmbeddingGrid(t.dims[0], t.dims[1], t.dims[2], std::move(t.values), m.geometry);
  };
  const PatchEmbeddingGrid t0 = as_grid(bytes_t0, m.t0.embedding);
  const PatchEmbeddingGrid t1 = as_grid(bytes_t1, m.t1.embedding);

  PreparedPair p;
  p.manifest = m;
  const RansacConfig rc = cfg.ransac_for(m.geometry.patch_size_px);
  const std::string key = HomographyCache::key(bytes_t0, bytes_t1, rc, cfg.mutual_nn);
  if (auto cached = cache.find(key)) {
    p.h = *cached;
  } else {
    p.h = ransac_homography(correspond(t0, t1, MatchOptions{cfg.mutual_nn}), rc);
    cache.store(key, p.h);
  }
  p.forward = coarse_change_map(t0, t1, p.h, cfg.change);
  p.backward = coarse_change_map(t1, t0, inverse(p.h), cfg.change);
  p.segs_t0 = load_epoch_segments(m.t0.segments, Epoch::T0, m.geometry);
  p.segs_t1 = load_epoch_segments(m.t1.segments, Epoch::T1, m.geometry);
  return p;
}

inline ChangeResult detect_prepared(const PreparedPair& p, const ChangeParams& params) {
  const auto& g = p.manifest.geometry;
  const BinaryMask coarse_t0 =
      rasterize_coarse(threshold_coarse(p.forward, params.tau), g.image_width_px, g.image_height_px, g.patch_size_px);
  const BinaryMask coarse_t1 =
      rasterize_coarse(threshold_coarse(p.backward, params.tau), g.image_width_px, g.image_height_px, g.patch_size_px);
  return refine_changes(coarse_t1, coarse_t0, p.segs_t0, p.segs_t1, p.h, params);
}

inline nlohmann::json result_to_json(const PreparedPair& p, const ChangeResult& r, const PipelineConfig& cfg,
                                     const ChangeParams& params) {
  nlohmann::json contributions = nlohmann::json::array();
  for (const auto& c : r.contributions) {
    contributions.push_back({{"segment_id", c.segment_id},
                             {"epoch", std::string(to_string(c.epoch))},
                             {"kind", std::string(to_string(c.kind))},
                             {"gamma", c.gamma},
                             {"cross_overlap", c.cross_overlap}});
  }
  return {{"pair_id", p.manifest.pair_id},
          {"homography", detail::homography_to_json(p.h)},
          {"params", {{"tau", params.tau}, {"alpha", params.alpha}, {"beta", params.beta},
                      {"min_segment_area", params.min_segment_area}, {"seed", cfg.seed}}},
          {"changed_pixels", r.mask.count()},
          {"contributions", std::move(contributions)}};
}

inline void write_result(const std::filesystem::path& dir, const PreparedPair& p, const ChangeResult& r,
                         const PipelineConfig& cfg, const ChangeParams& params) {
  std::filesystem::create_directories(dir);
  write_mask_png(r.mask, dir / (p.manifest.pair_id + ".png"));
  write_json_file(result_to_json(p, r, cfg, params), dir / (p.manifest.pair_id + ".json"));
}

// ---------------------------------------------------------------------------
// Input collection

/// Accepts pair manifests, batch manifests ({"pairs": [path | manifest, ...]})
/// and dataset roots (directories with pairs/ and gt/).
inline std::vector<PairManifest> collect_pairs(const std::vector<std::filesystem::path>& inputs, DatasetTag tag) {
  namespace fs = std::filesystem;
  std::vector<PairManifest> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (auto& rec : load_dataset(in, tag)) out.push_back(std::move(rec.manifest));
      continue;
    }
    const nlohmann::json j = read_json_file(in);
    if (j.is_object() && j.contains("pairs")) {
      for (const auto& e : j.at("pairs")) {
        if (e.is_string()) {
          out.push_back(read_pair_manifest(detail::resolve(in.parent_path(), e.get<std::string>())));
        } else {
          out.push_back(pair_manifest_from_json(e, in.parent_path()));
        }
      }
    } else {
      out.push_back(pair_manifest_from_json(j, in.parent_path()));
    }
  }
  std::map<std::string, int> seen;
  for (const auto& m : out) {
    if (++seen[m.pair_id] > 1) throw Error(ErrorCode::InvalidParameter, "duplicate pair_id " + m.pair_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logging and parallelism

/// Serializes whole lines onto a shared stream.
class LineLog {
 public:
  explicit LineLog(std::ostream& os) : os_(os) {}
  void line(const std::string& s) {
    std::lock_guard lock(mutex_);
    os_ << s << '\n' << std::flush;
  }

 private:
  std::ostream& os_;
  std::mutex mutex_;
};

inline nlohmann::json error_json(const Error& e) {
  return {{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.detail()}}}};
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct PreparedBatch {
  std::vector<std::optional<PreparedPair>> pairs;  // nullopt: skipped
  std::size_t skipped = 0;
};

// Prepares all pairs; NoConsensus pairs are logged and skipped, any other
// error is rethrown after the workers finish.
inline PreparedBatch prepare_all(const std::vector<PairManifest>& manifests, const PipelineConfig& cfg,
                                 HomographyCache& cache, LineLog& log) {
  PreparedBatch batch;
  batch.pairs.resize(manifests.size());
  std::vector<std::optional<Error>> failures(manifests.size());
  parallel_for(manifests.size(), cfg.jobs, [&](std::size_t i) {
    try {
      batch.pairs[i] = prepare_pair(manifests[i], cfg, cache);
    } catch (const Error& e) {
      failures[i] = e;
    } catch (const std::exception& e) {
      failures[i] = Error(ErrorCode::IoFailure, e.what());
    }
  });
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    if (!failures[i]) continue;
    if (failures[i]->code() != ErrorCode::NoConsensus) throw *failures[i];
    ++batch.skipped;
    log.line(nlohmann::json{{"skipped", {{"pair_id", manifests[i].pair_id},
                                         {"code", std::string(to_string(failures[i]->code()))},
                                         {"message", failures[i]->detail()}}}}
                 .dump());
  }
  return batch;
}

template <typename Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << error_json(e).dump() << '\n';
  } catch (const std::exception& e) {
    err << error_json(Error(ErrorCode::IoFailure, e.what())).dump() << '\n';
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_detect(const PipelineConfig& cfg, std::vector<std::filesystem::path> inputs, DatasetTag tag,
                      std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    cfg.validate();
    if (inputs.empty() && !cfg.backend.empty()) inputs.push_back(cfg.backend);
    const auto manifests = collect_pairs(inputs, tag);
    if (manifests.empty()) throw Error(ErrorCode::NoPairs, "no pairs");
    HomographyCache cache(cfg.cache_dir);
    LineLog log(err);
    PreparedBatch batch = prepare_all(manifests, cfg, cache, log);
    std::vector<std::optional<Error>> failures(manifests.size());
    parallel_for(manifests.size(), cfg.jobs, [&](std::size_t i) {
      if (!batch.pairs[i]) return;
      try {
        const auto& p = *batch.pairs[i];
        write_result(cfg.output, p, detect_prepared(p, cfg.change), cfg, cfg.change);
      } catch (const Error& e) {
        failures[i] = e;
      }
    });
    for (const auto& f : failures)
      if (f) throw *f;
    out << nlohmann::json{{"pairs", manifests.size()},
                          {"written", manifests.size() - batch.skipped},
                          {"skipped", batch.skipped},
                          {"output", cfg.output.string()}}
               .dump()
        << '\n';
    return batch.skipped > 0 ? 2 : 0;
  });
}

/// Scores <predictions>/<pair_id>.png against every pair of a dataset root.
inline EvalReport evaluate_predictions(const std::filesystem::path& predictions, const std::filesystem::path& root,
                                       DatasetTag tag) {
  const auto records = load_dataset(root, tag);
  if (records.empty()) throw Error(ErrorCode::NoPairs, "no pairs under " + root.string());
  std::string missing;
  for (const auto& r : records) {
    if (!std::filesystem::is_regular_file(predictions / (r.pair_id() + ".png"))) {
      missing += (missing.empty() ? "" : ",") + r.pair_id();
    }
  }
  if (!missing.empty()) throw Error(ErrorCode::MissingPrediction, missing);
  std::vector<PairScore> scores;
  for (const auto& r : records) {
    const BinaryMask pred = read_mask_png(predictions / (r.pair_id() + ".png"));
    const BinaryMask truth = read_mask_png(r.ground_truth);
    scores.push_back({r.pair_id(), f1(score_mask(pred, truth))});
  }
  return aggregate(std::move(scores));
}

inline int cmd_evaluate(const PipelineConfig& cfg, const std::filesystem::path& predictions,
                        const std::filesystem::path& root, DatasetTag tag, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const EvalReport report = evaluate_predictions(predictions, root, tag);
    std::filesystem::create_directories(cfg.output);
    write_json_file(report_to_json(report), cfg.output / "report.json");
    const std::string table = report_to_table(report);
    std::ofstream(cfg.output / "report.txt") << table;
    out << table;
    return 0;
  });
}

inline std::filesystem::path sweep_dir(const std::filesystem::path& output, double tau) {
  return output / ("tau_" + format_number(tau));
}

struct SweepRow {
  double tau = 0.0;
  Scores micro;
  MacroScores macro;
  std::size_t changed_patches = 0;  // forward + backward, over all pairs
};

inline int cmd_sweep(const PipelineConfig& cfg, std::vector<std::filesystem::path> inputs, DatasetTag tag,
                     std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    cfg.validate();
    if (cfg.sweep.empty()) throw Error(ErrorCode::InvalidParameter, "sweep list is empty");
    if (inputs.empty() && !cfg.backend.empty()) inputs.push_back(cfg.backend);
    const auto manifests = collect_pairs(inputs, tag);
    if (manifests.empty()) throw Error(ErrorCode::NoPairs, "no pairs");
    for (const auto& m : manifests) {
      if (m.ground_truth.empty()) throw Error(ErrorCode::MissingFile, "pair " + m.pair_id + ": no ground truth for sweep");
      detail::require_file(m.ground_truth, m.pair_id, "ground truth");
    }
    HomographyCache cache(cfg.cache_dir);
    LineLog log(err);
    const PreparedBatch batch = prepare_all(manifests, cfg, cache, log);
    std::vector<BinaryMask> truths(manifests.size());
    for (std::size_t i = 0; i < manifests.size(); ++i)
      if (batch.pairs[i]) truths[i] = read_mask_png(manifests[i].ground_truth);
    if (batch.skipped == manifests.size()) throw Error(ErrorCode::NoPairs, "every pair was skipped");

    std::vector<SweepRow> rows;
    for (double tau : cfg.sweep) {
      ChangeParams params = cfg.change;
      params.tau = tau;
      std::vector<std::optional<PairScore>> scores(manifests.size());
      std::vector<std::size_t> changed(manifests.size(), 0);
      parallel_for(manifests.size(), cfg.jobs, [&](std::size_t i) {
        if (!batch.pairs[i]) return;
        const auto& p = *batch.pairs[i];
        const ChangeResult r = detect_prepared(p, params);
        write_result(sweep_dir(cfg.output, tau), p, r, cfg, params);
        scores[i] = PairScore{p.manifest.pair_id, f1(score_mask(r.mask, truths[i]))};
        changed[i] = threshold_coarse(p.forward, tau).changed_count() + threshold_coarse(p.backward, tau).changed_count();
      });
      std::vector<PairScore> kept;
      SweepRow row;
      row.tau = tau;
      for (std::size_t i = 0; i < manifests.size(); ++i) {
        if (scores[i]) kept.push_back(*scores[i]);
        row.changed_patches += changed[i];
      }
      const EvalReport rep = aggregate(std::move(kept));
      row.micro = rep.micro;
      row.macro = rep.macro;
      rows.push_back(row);
    }

    nlohmann::json j = nlohmann::json::array();
    std::ostringstream table;
    table << std::setw(8) << "tau" << std::setw(10) << "P" << std::setw(10) << "R" << std::setw(10) << "F1"
          << std::setw(12) << "macro F1" << std::setw(10) << "patches" << '\n';
    for (const auto& r : rows) {
      j.push_back({{"tau", r.tau},
                   {"micro", to_json(r.micro)},
                   {"macro", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}},
                   {"changed_patches", r.changed_patches}});
      table << std::setw(8) << format_number(r.tau) << std::fixed << std::setprecision(4) << std::setw(10)
            << r.micro.precision << std::setw(10) << r.micro.recall << std::setw(10) << r.micro.f1 << std::setw(12)
            << r.macro.f1 << std::setw(10) << r.changed_patches << '\n';
      table.unsetf(std::ios::fixed);
    }
    std::filesystem::create_directories(cfg.output);
    write_json_file({{"rows", j}, {"skipped", batch.skipped}}, cfg.output / "sweep.json");
    std::ofstream(cfg.output / "sweep.txt") << table.str();
    out << table.str();
    return batch.skipped > 0 ? 2 : 0;
  });
}

inline constexpr int kOverlayAlpha = 128;  // of 255
inline constexpr std::array<std::uint8_t, 3> kOverlayTint{255, 0, 0};

/// Changed pixels become (c * (255 - a) + tint * a + 127) / 255 per channel.
inline RgbImage overlay(const RgbImage& image, const BinaryMask& mask) {
  if (image.width != mask.width() || image.height != mask.height()) {
    throw Error(ErrorCode::DimMismatch, "image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                            " vs mask " + std::to_string(mask.width()) + "x" +
                                            std::to_string(mask.height()));
  }
  RgbImage out = image;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.cells()[i]) continue;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const int c = image.pixels[3 * i + ch];
      out.pixels[3 * i + ch] = static_cast<std::uint8_t>((c * (255 - kOverlayAlpha) + kOverlayTint[ch] * kOverlayAlpha + 127) / 255);
    }
  }
  return out;
}

/// `source` is a T1 image PNG or a pair manifest whose t1.image is used.
inline int cmd_overlay(const PipelineConfig& cfg, const std::filesystem::path& source, const std::filesystem::path& mask_path,
                       std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    std::filesystem::path image_path = source;
    std::string stem = source.stem().string();
    if (source.extension() == ".json") {
      const PairManifest m = read_pair_manifest(source);
      if (m.t1.image.empty()) throw Error(ErrorCode::MissingFile, "pair " + m.pair_id + ": manifest has no t1 image");
      image_path = m.t1.image;
      stem = m.pair_id;
    }
    const RgbImage blended = overlay(read_rgb_png(image_path), read_mask_png(mask_path));
    std::filesystem::create_directories(cfg.output);
    const auto dest = cfg.output / (stem + "_overlay.png");
    write_rgb_png(blended, dest);
    out << nlohmann::json{{"overlay", dest.string()}}.dump() << '\n';
    return 0;
  });
}

}  // namespace zscd
