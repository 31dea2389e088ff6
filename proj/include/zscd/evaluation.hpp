#pragma once

// Pixel-level precision / recall / F1 scoring and the benchmark dataset
// loader.
//
// Dataset layout (identical for every tag):
//   <root>/pairs/<stem>.json   pair manifest
//   <root>/gt/<stem>.png       ground-truth mask (gray > 127 = changed)
// Pairs are matched by file stem and the manifest's pair_id must equal the
// stem. VL-CMU-CD additionally requires 512 x 512 images.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zscd/error.hpp"
#include "zscd/manifest.hpp"
#include "zscd/mask.hpp"

namespace zscd {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Scores {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline ConfusionCounts score_mask(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_dims(pred, truth, "prediction vs ground truth");
  ConfusionCounts c;
  const auto& p = pred.cells();
  const auto& t = truth.cells();
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.tp += p[i] & t[i];
    c.fp += p[i] & (t[i] ^ 1u);
    c.fn += (p[i] ^ 1u) & t[i];
  }
  return c;
}

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R). Zero denominators give 0.
inline Scores f1(const ConfusionCounts& c) {
  Scores s;
  s.counts = c;
  const double tp = static_cast<double>(c.tp);
  s.precision = (c.tp + c.fp) > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  s.recall = (c.tp + c.fn) > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

struct PairScore {
  std::string pair_id;
  Scores scores;
};

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<PairScore> pairs;
  Scores micro;
  MacroScores macro;
};

/// Micro average over summed counts; macro is the mean of per-pair scores.
inline EvalReport aggregate(std::vector<PairScore> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no pair scores to aggregate");
  EvalReport r;
  ConfusionCounts total;
  for (const auto& p : pairs) {
    total.tp += p.scores.counts.tp;
    total.fp += p.scores.counts.fp;
    total.fn += p.scores.counts.fn;
    r.macro.precision += p.scores.precision;
    r.macro.recall += p.scores.recall;
    r.macro.f1 += p.scores.f1;
  }
  const double n = static_cast<double>(pairs.size());
  r.macro.precision /= n;
  r.macro.recall /= n;
  r.macro.f1 /= n;
  r.micro = f1(total);
  r.pairs = std::move(pairs);
  return r;
}

inline nlohmann::json to_json(const Scores& s) {
  return {{"tp", s.counts.tp}, {"fp", s.counts.fp}, {"fn", s.counts.fn},
          {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) {
    auto j = to_json(p.scores);
    j["pair_id"] = p.pair_id;
    pairs.push_back(std::move(j));
  }
  return {{"pairs", std::move(pairs)},
          {"micro", to_json(r.micro)},
          {"macro", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}}};
}

inline std::string report_to_table(const EvalReport& r) {
  std::size_t id_width = 5;
  for (const auto& p : r.pairs) id_width = std::max(id_width, p.pair_id.size());
  std::ostringstream os;
  auto row = [&](const std::string& id, const std::string& tp, const std::string& fp, const std::string& fn, double p,
                 double rc, double f) {
    os << std::left << std::setw(static_cast<int>(id_width)) << id << std::right << std::setw(12) << tp
       << std::setw(12) << fp << std::setw(12) << fn << std::fixed << std::setprecision(4) << std::setw(10) << p
       << std::setw(10) << rc << std::setw(10) << f << '\n';
  };
  os << std::left << std::setw(static_cast<int>(id_width)) << "pair" << std::right << std::setw(12) << "TP"
     << std::setw(12) << "FP" << std::setw(12) << "FN" << std::setw(10) << "P" << std::setw(10) << "R"
     << std::setw(10) << "F1" << '\n';
  for (const auto& p : r.pairs) {
    const auto& s = p.scores;
    row(p.pair_id, std::to_string(s.counts.tp), std::to_string(s.counts.fp), std::to_string(s.counts.fn), s.precision,
        s.recall, s.f1);
  }
  const auto& m = r.micro;
  row("micro", std::to_string(m.counts.tp), std::to_string(m.counts.fp), std::to_string(m.counts.fn), m.precision,
      m.recall, m.f1);
  row("macro", "-", "-", "-", r.macro.precision, r.macro.recall, r.macro.f1);
  return os.str();
}

enum class DatasetTag { VlCmuCd, Tsunami, Gsv, Custom };

inline DatasetTag parse_dataset_tag(std::string_view s) {
  if (s == "VL-CMU-CD") return DatasetTag::VlCmuCd;
  if (s == "Tsunami") return DatasetTag::Tsunami;
  if (s == "GSV") return DatasetTag::Gsv;
  if (s == "custom") return DatasetTag::Custom;
  throw Error(ErrorCode::InvalidParameter, "unknown dataset tag \"" + std::string(s) +
                                               "\" (expected VL-CMU-CD, Tsunami, GSV or custom)");
}

inline std::string_view to_string(DatasetTag t) {
  switch (t) {
    case DatasetTag::VlCmuCd: return "VL-CMU-CD";
    case DatasetTag::Tsunami: return "Tsunami";
    case DatasetTag::Gsv: return "GSV";
    case DatasetTag::Custom: return "custom";
  }
  return "custom";
}

struct PairRecord {
  PairManifest manifest;
  std::filesystem::path ground_truth;
  DatasetTag tag = DatasetTag::Custom;

  const std::string& pair_id() const { return manifest.pair_id; }
};

namespace detail {

inline void require_file(const std::filesystem::path& p, const std::string& pair, const char* role) {
  if (!std::filesystem::is_regular_file(p)) {
    throw Error(ErrorCode::MissingFile, "pair " + pair + ": " + role + " " + p.string());
  }
}

}  // namespace detail

inline void require_pair_files(const PairManifest& m) {
  detail::require_file(m.t0.embedding, m.pair_id, "t0 embedding");
  detail::require_file(m.t0.segments, m.pair_id, "t0 segments");
  detail::require_file(m.t1.embedding, m.pair_id, "t1 embedding");
  detail::require_file(m.t1.segments, m.pair_id, "t1 segments");
  if (!m.t0.image.empty()) detail::require_file(m.t0.image, m.pair_id, "t0 image");
  if (!m.t1.image.empty()) detail::require_file(m.t1.image, m.pair_id, "t1 image");
}

inline std::vector<PairRecord> load_dataset(const std::filesystem::path& root, DatasetTag tag) {
  namespace fs = std::filesystem;
  const fs::path pairs_dir = root / "pairs";
  const fs::path gt_dir = root / "gt";
  if (!fs::is_directory(pairs_dir)) throw Error(ErrorCode::LayoutMismatch, "missing directory " + pairs_dir.string());
  if (!fs::is_directory(gt_dir)) throw Error(ErrorCode::LayoutMismatch, "missing directory " + gt_dir.string());

  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(pairs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") manifests.push_back(entry.path());
  }
  std::sort(manifests.begin(), manifests.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  std::vector<PairRecord> records;
  for (const auto& path : manifests) {
    PairRecord rec;
    rec.manifest = read_pair_manifest(path);
    rec.tag = tag;
    const std::string stem = path.stem().string();
    if (rec.manifest.pair_id != stem) {
      throw Error(ErrorCode::LayoutMismatch, path.string() + ": pair_id \"" + rec.manifest.pair_id +
                                                 "\" does not match file stem");
    }
    if (tag == DatasetTag::VlCmuCd &&
        (rec.manifest.geometry.image_width_px != 512 || rec.manifest.geometry.image_height_px != 512)) {
      throw Error(ErrorCode::LayoutMismatch, "pair " + stem + ": VL-CMU-CD pairs must be 512x512");
    }
    rec.ground_truth = gt_dir / (stem + ".png");
    rec.manifest.ground_truth = rec.ground_truth;
    require_pair_files(rec.manifest);
    detail::require_file(rec.ground_truth, stem, "ground truth");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace zscd
