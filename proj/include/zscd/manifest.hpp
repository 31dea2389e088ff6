#pragma once

// Per-pair JSON manifest. Paths are stored relative to the manifest file.
//
// {
//   "pair_id": "000123",
//   "patch_size_px": 16, "image_width_px": 512, "image_height_px": 512,
//   "t0": {"embedding": "t0.zstf", "segments": "t0.json", "image": "t0.png"},
//   "t1": {"embedding": "t1.zstf", "segments": "t1.json", "image": "t1.png"},
//   "ground_truth": "gt.png"
// }
// "image" and "ground_truth" are optional.

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "zscd/error.hpp"
#include "zscd/tensor_store.hpp"

namespace zscd {

struct EpochFiles {
  std::filesystem::path embedding;
  std::filesystem::path segments;
  std::filesystem::path image;  // empty when absent
};

struct PairManifest {
  std::string pair_id;
  GridGeometry geometry;
  EpochFiles t0;
  EpochFiles t1;
  std::filesystem::path ground_truth;  // empty when absent
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

inline std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  const auto rel = std::filesystem::absolute(p).lexically_relative(std::filesystem::absolute(base));
  return rel.empty() ? p.string() : rel.generic_string();
}

}  // namespace detail

inline PairManifest pair_manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    PairManifest m;
    m.pair_id = j.at("pair_id").get<std::string>();
    m.geometry.patch_size_px = j.at("patch_size_px").get<int>();
    m.geometry.image_width_px = j.at("image_width_px").get<int>();
    m.geometry.image_height_px = j.at("image_height_px").get<int>();
    auto epoch = [&](const char* key) {
      const auto& e = j.at(key);
      EpochFiles f;
      f.embedding = detail::resolve(base_dir, e.at("embedding").get<std::string>());
      f.segments = detail::resolve(base_dir, e.at("segments").get<std::string>());
      if (e.contains("image")) f.image = detail::resolve(base_dir, e.at("image").get<std::string>());
      return f;
    };
    m.t0 = epoch("t0");
    m.t1 = epoch("t1");
    if (j.contains("ground_truth")) m.ground_truth = detail::resolve(base_dir, j.at("ground_truth").get<std::string>());
    if (m.geometry.patch_size_px <= 0 || m.geometry.image_width_px <= 0 || m.geometry.image_height_px <= 0) {
      throw Error(ErrorCode::ParseError, "pair " + m.pair_id + ": patch size and image dims must be positive");
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

inline nlohmann::json pair_manifest_to_json(const PairManifest& m, const std::filesystem::path& base_dir) {
  auto epoch = [&](const EpochFiles& f) {
    nlohmann::json e{{"embedding", detail::relative_to(f.embedding, base_dir)},
                     {"segments", detail::relative_to(f.segments, base_dir)}};
    if (!f.image.empty()) e["image"] = detail::relative_to(f.image, base_dir);
    return e;
  };
  nlohmann::json j{{"pair_id", m.pair_id},
                   {"patch_size_px", m.geometry.patch_size_px},
                   {"image_width_px", m.geometry.image_width_px},
                   {"image_height_px", m.geometry.image_height_px},
                   {"t0", epoch(m.t0)},
                   {"t1", epoch(m.t1)}};
  if (!m.ground_truth.empty()) j["ground_truth"] = detail::relative_to(m.ground_truth, base_dir);
  return j;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, path.string() + ": invalid JSON");
  return j;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

inline PairManifest read_pair_manifest(const std::filesystem::path& path) {
  return pair_manifest_from_json(read_json_file(path), path.parent_path());
}

inline void write_pair_manifest(const PairManifest& m, const std::filesystem::path& path) {
  write_json_file(pair_manifest_to_json(m, path.parent_path()), path);
}

}  // namespace zscd
