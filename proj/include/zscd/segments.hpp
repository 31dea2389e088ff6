#pragma once

// Class-agnostic segment sets and their run-length codec.
//
// A segment mask is stored relative to its bounding box, scanned row-major.
// Runs alternate zero/one starting with a zero-run (which may be 0), and the
// runs sum to bbox.w * bbox.h.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zscd/error.hpp"
#include "zscd/mask.hpp"

namespace zscd {

enum class Epoch { T0, T1 };

inline std::string_view to_string(Epoch e) { return e == Epoch::T0 ? "T0" : "T1"; }

inline Epoch parse_epoch(std::string_view s) {
  if (s == "T0") return Epoch::T0;
  if (s == "T1") return Epoch::T1;
  throw Error(ErrorCode::ParseError, "image_tag must be \"T0\" or \"T1\", got \"" + std::string(s) + "\"");
}

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Segment {
  std::int64_t id = 0;
  BoundingBox bbox;
  std::vector<std::uint32_t> rle;
  std::uint64_t area = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SegmentSet {
  Epoch image_tag = Epoch::T0;
  std::vector<Segment> segments;

  friend bool operator==(const SegmentSet&, const SegmentSet&) = default;
};

/// Decodes the bbox-local mask. Throws RunLengthOverflow when the runs cover
/// more than the box and InvalidSegment when they cover less or disagree with
/// the declared area.
inline BinaryMask decode_rle(const Segment& segment) {
  const auto& box = segment.bbox;
  if (box.w < 0 || box.h < 0) throw Error(ErrorCode::InvalidSegment, "segment " + std::to_string(segment.id) + ": negative bbox");
  BinaryMask mask(box.w, box.h);
  const std::uint64_t total = static_cast<std::uint64_t>(box.w) * static_cast<std::uint64_t>(box.h);
  std::uint64_t pos = 0;
  std::uint64_t ones = 0;
  bool value = false;
  for (std::uint32_t run : segment.rle) {
    if (run > total - pos) {
      throw Error(ErrorCode::RunLengthOverflow, "segment " + std::to_string(segment.id) + ": runs exceed bbox " +
                                                    std::to_string(box.w) + "x" + std::to_string(box.h));
    }
    if (value) {
      std::fill_n(mask.cells().begin() + static_cast<std::ptrdiff_t>(pos), run, std::uint8_t{1});
      ones += run;
    }
    pos += run;
    value = !value;
  }
  if (pos != total) {
    throw Error(ErrorCode::InvalidSegment, "segment " + std::to_string(segment.id) + ": runs cover " +
                                               std::to_string(pos) + " of " + std::to_string(total) + " pixels");
  }
  if (ones != segment.area) {
    throw Error(ErrorCode::InvalidSegment, "segment " + std::to_string(segment.id) + ": decoded area " +
                                               std::to_string(ones) + " != declared " + std::to_string(segment.area));
  }
  return mask;
}

inline std::vector<std::uint32_t> encode_rle(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (auto c : mask.cells()) {
    if (c != current) {
      runs.push_back(length);
      current = c;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

/// Builds a segment from a full-frame mask, deriving bbox, area and runs
/// from the pixels themselves.
inline Segment segment_from_mask(std::int64_t id, const BinaryMask& frame) {
  int x0 = frame.width(), y0 = frame.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw Error(ErrorCode::EmptySegment, "segment " + std::to_string(id) + " has no pixels");
  Segment s;
  s.id = id;
  s.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  BinaryMask local(s.bbox.w, s.bbox.h);
  for (int y = 0; y < s.bbox.h; ++y)
    for (int x = 0; x < s.bbox.w; ++x) local.set(x, y, frame.at(x0 + x, y0 + y));
  s.rle = encode_rle(local);
  s.area = local.count();
  return s;
}

/// Places the decoded segment into a full image frame.
inline BinaryMask segment_frame_mask(const Segment& segment, int image_width, int image_height) {
  const auto& b = segment.bbox;
  if (b.x < 0 || b.y < 0 || b.x + b.w > image_width || b.y + b.h > image_height) {
    throw Error(ErrorCode::InvalidSegment, "segment " + std::to_string(segment.id) + " bbox outside " +
                                               std::to_string(image_width) + "x" + std::to_string(image_height));
  }
  const BinaryMask local = decode_rle(segment);
  BinaryMask frame(image_width, image_height);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      if (local.at(x, y)) frame.set(b.x + x, b.y + y);
  return frame;
}

/// Checks the set-level invariants against the image it belongs to.
inline void validate_segments(const SegmentSet& set, int image_width, int image_height) {
  std::set<std::int64_t> ids;
  for (const auto& s : set.segments) {
    if (!ids.insert(s.id).second) throw Error(ErrorCode::InvalidSegment, "duplicate segment id " + std::to_string(s.id));
    if (s.area < 1) throw Error(ErrorCode::InvalidSegment, "segment " + std::to_string(s.id) + " has zero area");
    (void)segment_frame_mask(s, image_width, image_height);
  }
}

inline nlohmann::json segments_to_json(const SegmentSet& set) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : set.segments) {
    segs.push_back({{"id", s.id},
                    {"bbox", {s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h}},
                    {"area", s.area},
                    {"rle", s.rle}});
  }
  return {{"image_tag", std::string(to_string(set.image_tag))}, {"segments", std::move(segs)}};
}

inline SegmentSet segments_from_json(const nlohmann::json& j) {
  try {
    SegmentSet set;
    set.image_tag = parse_epoch(j.at("image_tag").get<std::string>());
    for (const auto& e : j.at("segments")) {
      Segment s;
      s.id = e.at("id").get<std::int64_t>();
      const auto& b = e.at("bbox");
      if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::ParseError, "bbox must be [x, y, w, h]");
      s.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
      s.area = e.at("area").get<std::uint64_t>();
      for (const auto& r : e.at("rle")) {
        if (!r.is_number_unsigned()) throw Error(ErrorCode::ParseError, "segment " + std::to_string(s.id) + ": negative or non-integer run");
        s.rle.push_back(r.get<std::uint32_t>());
      }
      set.segments.push_back(std::move(s));
    }
    return set;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

inline SegmentSet read_segments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, path.string() + ": invalid JSON");
  return segments_from_json(j);
}

inline void write_segments(const SegmentSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << segments_to_json(set).dump() << '\n';
}

}  // namespace zscd
