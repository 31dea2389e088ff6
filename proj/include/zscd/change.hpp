#pragma once

// Coarse patch-level change detection under a homography, and its
// refinement into a pixel mask by segment overlap with cross-image
// verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "zscd/correspondence.hpp"
#include "zscd/error.hpp"
#include "zscd/geometry.hpp"
#include "zscd/mask.hpp"
#include "zscd/segments.hpp"
#include "zscd/tensor_store.hpp"

namespace zscd {

struct ChangeParams {
  double tau = 0.65;   // descriptor distance above which a patch is changed
  double alpha = 0.8;  // a segment is flagged when its coarse overlap exceeds this
  double beta = 0.5;   // a flagged segment is kept when its cross-image overlap is below this
  std::uint64_t min_segment_area = 0;

  void validate() const {
    if (!(tau > 0.0 && tau <= 2.0)) throw Error(ErrorCode::InvalidParameter, "tau must lie in (0, 2]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidParameter, "alpha must lie in (0, 1]");
    if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidParameter, "beta must lie in [0, 1)");
  }
};

/// Per-patch distances and flags, indexed by the patches of the source grid.
struct CoarseChangeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> diff;
  std::vector<std::uint8_t> changed;
  std::vector<std::uint8_t> valid;

  std::size_t changed_count() const {
    return static_cast<std::size_t>(std::count(changed.begin(), changed.end(), 1));
  }

  friend bool operator==(const CoarseChangeMap&, const CoarseChangeMap&) = default;
};

namespace detail {

inline std::vector<double> unit_descriptors(const PatchEmbeddingGrid& g, const char* side) {
  const std::size_t d = g.dim();
  std::vector<double> out(g.data().size());
  for (std::size_t p = 0; p < g.patch_count(); ++p) {
    const auto desc = g.descriptor(p);
    double sq = 0.0;
    for (float v : desc) sq += static_cast<double>(v) * static_cast<double>(v);
    if (!(sq > 0.0)) throw Error(ErrorCode::ZeroNormDescriptor, std::string(side) + " patch " + std::to_string(p));
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < d; ++k) out[p * d + k] = static_cast<double>(desc[k]) / norm;
  }
  return out;
}

}  // namespace detail

/// Re-thresholds an existing map; only `changed` depends on tau.
inline CoarseChangeMap threshold_coarse(CoarseChangeMap map, double tau) {
  for (std::size_t i = 0; i < map.diff.size(); ++i) map.changed[i] = (map.valid[i] && map.diff[i] > tau) ? 1 : 0;
  return map;
}

/// For every patch of `source`, projects its center through `h` into the
/// plane of `target`, takes the target patch containing the projection and
/// records the Euclidean distance between the two L2-normalized descriptors.
/// Projections that leave the target grid (or go to infinity) are invalid.
inline CoarseChangeMap coarse_change_map(const PatchEmbeddingGrid& source, const PatchEmbeddingGrid& target,
                                         const Homography& h, const ChangeParams& params) {
  if (source.dim() != target.dim()) {
    throw Error(ErrorCode::DimMismatch, "descriptor length " + std::to_string(source.dim()) + " vs " +
                                            std::to_string(target.dim()));
  }
  (void)inverse(h);  // invertibility precondition
  const auto a = detail::unit_descriptors(source, "source");
  const auto b = detail::unit_descriptors(target, "target");
  const std::size_t d = source.dim();
  const double tps = target.patch_size_px();

  CoarseChangeMap map;
  map.height = source.height();
  map.width = source.width();
  map.diff.assign(source.patch_count(), 0.0);
  map.changed.assign(source.patch_count(), 0);
  map.valid.assign(source.patch_count(), 0);
  for (std::size_t i = 0; i < source.patch_count(); ++i) {
    const auto q = try_project(h.m, patch_center(i, source));
    if (!q) continue;
    const double col = std::floor(q->x / tps);
    const double row = std::floor(q->y / tps);
    if (col < 0.0 || row < 0.0 || col >= static_cast<double>(target.width()) ||
        row >= static_cast<double>(target.height())) {
      continue;
    }
    const std::size_t j = static_cast<std::size_t>(row) * target.width() + static_cast<std::size_t>(col);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double delta = a[i * d + k] - b[j * d + k];
      sq += delta * delta;
    }
    map.valid[i] = 1;
    map.diff[i] = std::sqrt(sq);
    map.changed[i] = map.diff[i] > params.tau ? 1 : 0;
  }
  return map;
}

/// Nearest-neighbour upsampling: every changed patch paints its
/// patch_size x patch_size block, clipped to the image.
inline BinaryMask rasterize_coarse(const CoarseChangeMap& map, int image_width, int image_height, int patch_size_px) {
  if (patch_size_px <= 0) throw Error(ErrorCode::InvalidParameter, "patch size must be positive");
  const auto ps = static_cast<std::size_t>(patch_size_px);
  if (map.width * ps > static_cast<std::size_t>(image_width) + ps ||
      map.height * ps > static_cast<std::size_t>(image_height) + ps) {
    throw Error(ErrorCode::DimMismatch, "coarse grid does not fit a " + std::to_string(image_width) + "x" +
                                            std::to_string(image_height) + " image");
  }
  BinaryMask out(image_width, image_height);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      if (!map.changed[r * map.width + c]) continue;
      const int x0 = static_cast<int>(c * ps), y0 = static_cast<int>(r * ps);
      const int x1 = std::min(x0 + patch_size_px, image_width), y1 = std::min(y0 + patch_size_px, image_height);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.set(x, y);
    }
  }
  return out;
}

/// gamma = |seg & region| / |seg|.
inline double overlap_ratio(const BinaryMask& seg, const BinaryMask& region) {
  require_same_dims(seg, region, "overlap_ratio");
  const std::size_t area = seg.count();
  if (area == 0) throw Error(ErrorCode::EmptySegment, "segment mask has no pixels");
  return static_cast<double>(intersection_count(seg, region)) / static_cast<double>(area);
}

enum class ChangeKind { Disappeared, Appeared };

inline std::string_view to_string(ChangeKind k) { return k == ChangeKind::Appeared ? "appeared" : "disappeared"; }

struct Contribution {
  std::int64_t segment_id = 0;
  Epoch epoch = Epoch::T0;
  ChangeKind kind = ChangeKind::Disappeared;
  double gamma = 0.0;
  double cross_overlap = 0.0;

  friend bool operator==(const Contribution&, const Contribution&) = default;
};

struct ChangeResult {
  BinaryMask mask;  // T1 frame
  std::vector<Contribution> contributions;

  friend bool operator==(const ChangeResult&, const ChangeResult&) = default;
};

/// Segments of one epoch decoded into full-frame masks.
struct DecodedSegments {
  Epoch epoch = Epoch::T0;
  std::vector<std::int64_t> ids;
  std::vector<BinaryMask> masks;
  BinaryMask frame_union;
};

inline DecodedSegments decode_segments(const SegmentSet& set, int image_width, int image_height) {
  validate_segments(set, image_width, image_height);
  DecodedSegments out;
  out.epoch = set.image_tag;
  out.frame_union = BinaryMask(image_width, image_height);
  for (const auto& s : set.segments) {
    out.ids.push_back(s.id);
    out.masks.push_back(segment_frame_mask(s, image_width, image_height));
    out.frame_union |= out.masks.back();
  }
  return out;
}

namespace detail {

// Cross-image verification for one flagged segment living in frame A.
// `to_other` maps frame A into frame B; `other_union` is the union of the
// other epoch's segments in frame B. The counterpart region (the segment's
// warped footprint restricted to that union) is warped back to frame A and
// intersected with the segment.
inline double cross_overlap(const BinaryMask& seg, const Homography& to_other, const Homography& back,
                            const BinaryMask& other_union, BinaryMask& warped_out) {
  warped_out = warp_mask(to_other, seg, other_union.width(), other_union.height());
  const BinaryMask counterpart = warped_out & other_union;
  const BinaryMask returned = warp_mask(back, counterpart, seg.width(), seg.height());
  return static_cast<double>(intersection_count(seg, returned)) / static_cast<double>(seg.count());
}

}  // namespace detail

/// Refines coarse maps (already rasterized into each epoch's pixel frame)
/// into the final change mask in the T1 frame. `h` maps T0 onto T1.
///
/// A segment is flagged when its overlap with its own epoch's coarse mask is
/// strictly above alpha and confirmed when its cross-image overlap is below
/// beta. Confirmed T1 segments are "appeared"; confirmed T0 segments are
/// "disappeared" and enter the mask warped into T1.
inline ChangeResult refine_changes(const BinaryMask& coarse_t1, const BinaryMask& coarse_t0, const DecodedSegments& segs_t0,
                                   const DecodedSegments& segs_t1, const Homography& h, const ChangeParams& params) {
  params.validate();
  require_same_dims(coarse_t0, segs_t0.frame_union, "T0 coarse mask vs T0 segments");
  require_same_dims(coarse_t1, segs_t1.frame_union, "T1 coarse mask vs T1 segments");
  const Homography h_inv = inverse(h);

  ChangeResult result;
  result.mask = BinaryMask(coarse_t1.width(), coarse_t1.height());

  auto process = [&](const DecodedSegments& segs, const BinaryMask& coarse, const Homography& to_other,
                     const Homography& back, const BinaryMask& other_union, Epoch epoch) {
    for (std::size_t k = 0; k < segs.masks.size(); ++k) {
      const BinaryMask& seg = segs.masks[k];
      if (seg.count() < std::max<std::uint64_t>(params.min_segment_area, 1)) continue;
      const double gamma = overlap_ratio(seg, coarse);
      if (!(gamma > params.alpha)) continue;
      BinaryMask warped;
      const double cross = detail::cross_overlap(seg, to_other, back, other_union, warped);
      if (!(cross < params.beta)) continue;
      const ChangeKind kind = epoch == Epoch::T1 ? ChangeKind::Appeared : ChangeKind::Disappeared;
      result.contributions.push_back({segs.ids[k], epoch, kind, gamma, cross});
      result.mask |= epoch == Epoch::T1 ? seg : warped;
    }
  };
  process(segs_t0, coarse_t0, h, h_inv, segs_t1.frame_union, Epoch::T0);
  process(segs_t1, coarse_t1, h_inv, h, segs_t0.frame_union, Epoch::T1);

  std::sort(result.contributions.begin(), result.contributions.end(), [](const Contribution& a, const Contribution& b) {
    if (a.epoch != b.epoch) return a.epoch == Epoch::T0;
    return a.segment_id < b.segment_id;
  });
  return result;
}

inline ChangeResult refine_changes(const BinaryMask& coarse_t1, const BinaryMask& coarse_t0, const SegmentSet& segs_t0,
                                   const SegmentSet& segs_t1, const Homography& h, const ChangeParams& params) {
  return refine_changes(coarse_t1, coarse_t0, decode_segments(segs_t0, coarse_t0.width(), coarse_t0.height()),
                        decode_segments(segs_t1, coarse_t1.width(), coarse_t1.height()), h, params);
}

}  // namespace zscd
