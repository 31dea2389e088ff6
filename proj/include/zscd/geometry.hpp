#pragma once

// Planar homography estimation: Hartley-normalized DLT as the solver and a
// seeded, fixed-iteration RANSAC around it. Also point projection and
// inverse-mapped mask warping.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zscd/correspondence.hpp"
#include "zscd/error.hpp"
#include "zscd/mask.hpp"
#include "zscd/random.hpp"

namespace zscd {

struct PointPair {
  Point2 source;
  Point2 target;
};

struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  std::size_t inlier_count = 0;
  double inlier_ratio = 0.0;
};

struct RansacConfig {
  std::size_t iterations = 2000;
  double inlier_tolerance_px = 1.25 * 16.0;
  std::uint64_t seed = 0;
  std::size_t min_inliers = 8;

  static RansacConfig for_patch_size(int patch_size_px) {
    RansacConfig cfg;
    cfg.inlier_tolerance_px = 1.25 * patch_size_px;
    return cfg;
  }

  void validate() const {
    if (iterations < 1) throw Error(ErrorCode::InvalidParameter, "ransac iterations must be >= 1");
    if (!(inlier_tolerance_px > 0.0) || !std::isfinite(inlier_tolerance_px)) {
      throw Error(ErrorCode::InvalidParameter, "ransac inlier tolerance must be > 0");
    }
  }
};

inline constexpr double kCollinearAreaEps = 1e-9;
inline constexpr double kMinAbsDeterminant = 1e-12;
inline constexpr double kMinHomogeneousScale = 1e-12;

/// Scales so m(2,2) == 1, or to unit Frobenius norm when that entry vanishes.
inline Eigen::Matrix3d normalize_homography(const Eigen::Matrix3d& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return m;
  if (std::abs(m(2, 2)) > 1e-12 * scale) return m / m(2, 2);
  return m / m.norm();
}

inline bool collinear(const Point2& a, const Point2& b, const Point2& c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return 0.5 * std::abs(cross) <= kCollinearAreaEps;
}

inline bool any_three_collinear(const std::array<Point2, 4>& p) {
  return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) || collinear(p[0], p[2], p[3]) ||
         collinear(p[1], p[2], p[3]);
}

/// Projects `p` through `m`; nullopt when the homogeneous scale vanishes.
inline std::optional<Point2> try_project(const Eigen::Matrix3d& m, const Point2& p) {
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (!(std::abs(w) > kMinHomogeneousScale)) return std::nullopt;
  const double x = m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2);
  const double y = m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2);
  return Point2{x / w, y / w};
}

inline Point2 project(const Homography& h, const Point2& p) {
  auto q = try_project(h.m, p);
  if (!q) throw Error(ErrorCode::PointAtInfinity, "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
  return *q;
}

inline Homography inverse(const Homography& h) {
  const double det = h.m.determinant();
  if (!(std::abs(det) > kMinAbsDeterminant)) {
    throw Error(ErrorCode::RankDeficient, "homography is not invertible (det " + std::to_string(det) + ")");
  }
  Homography inv = h;
  inv.m = normalize_homography(h.m.inverse());
  return inv;
}

namespace detail {

// Similarity transform moving the centroid to the origin and the mean
// distance from it to sqrt(2).
inline Eigen::Matrix3d hartley_transform(std::span<const PointPair> pairs, bool use_target) {
  double cx = 0.0, cy = 0.0;
  for (const auto& pp : pairs) {
    const auto& p = use_target ? pp.target : pp.source;
    cx += p.x;
    cy += p.y;
  }
  const double n = static_cast<double>(pairs.size());
  cx /= n;
  cy /= n;
  double mean_dist = 0.0;
  for (const auto& pp : pairs) {
    const auto& p = use_target ? pp.target : pp.source;
    mean_dist += std::hypot(p.x - cx, p.y - cy);
  }
  mean_dist /= n;
  if (!(mean_dist > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline Point2 apply_affine(const Eigen::Matrix3d& t, const Point2& p) {
  return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

}  // namespace detail

/// Least-squares homography mapping sources onto targets (algebraic error on
/// Hartley-normalized coordinates). For a minimal 4-point input no three
/// source points may be collinear; larger inputs only need full rank.
inline Homography dlt_homography(std::span<const PointPair> pairs) {
  if (pairs.size() < 4) {
    throw Error(ErrorCode::InsufficientCorrespondences, std::to_string(pairs.size()) + " pairs, need >= 4");
  }
  if (pairs.size() == 4 &&
      any_three_collinear({pairs[0].source, pairs[1].source, pairs[2].source, pairs[3].source})) {
    throw Error(ErrorCode::DegenerateConfiguration, "three source points are collinear");
  }
  const Eigen::Matrix3d ts = detail::hartley_transform(pairs, false);
  const Eigen::Matrix3d tt = detail::hartley_transform(pairs, true);

  Eigen::MatrixXd a(2 * pairs.size(), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Point2 s = detail::apply_affine(ts, pairs[i].source);
    const Point2 t = detail::apply_affine(tt, pairs[i].target);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -s.x, -s.y, -1, 0, 0, 0, t.x * s.x, t.x * s.y, t.x;
    a.row(r + 1) << 0, 0, 0, -s.x, -s.y, -1, t.y * s.x, t.y * s.y, t.y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space needs the 8th singular value clear of zero.
  if (!(sv(7) > 1e-10 * sv(0))) throw Error(ErrorCode::RankDeficient, "DLT system has a degenerate null space");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Homography out;
  out.m = normalize_homography(tt.inverse() * hn * ts);
  if (!(std::abs(out.m.determinant()) > kMinAbsDeterminant)) {
    throw Error(ErrorCode::RankDeficient, "estimated homography is singular");
  }
  out.inlier_count = pairs.size();
  out.inlier_ratio = 1.0;
  return out;
}

/// Squared reprojection error of one pair, or nullopt at infinity.
inline std::optional<double> reprojection_error_sq(const Eigen::Matrix3d& m, const PointPair& pp) {
  const auto q = try_project(m, pp.source);
  if (!q) return std::nullopt;
  const double dx = q->x - pp.target.x;
  const double dy = q->y - pp.target.y;
  return dx * dx + dy * dy;
}

inline std::vector<std::uint8_t> inlier_flags(const Eigen::Matrix3d& m, std::span<const PointPair> pairs,
                                              double tolerance_px) {
  const double tol_sq = tolerance_px * tolerance_px;
  std::vector<std::uint8_t> flags(pairs.size(), 0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto e = reprojection_error_sq(m, pairs[i]);
    flags[i] = (e && *e <= tol_sq) ? 1 : 0;
  }
  return flags;
}

namespace detail {

inline constexpr int kMaxSampleDraws = 64;

// Draws four distinct indices whose sources and targets are each free of
// collinear triples. Returns false when no such sample is found.
inline bool draw_minimal_sample(Xoshiro256StarStar& rng, std::span<const PointPair> pairs,
                                std::array<PointPair, 4>& sample) {
  for (int attempt = 0; attempt < kMaxSampleDraws; ++attempt) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = rng.below(pairs.size());
        fresh = true;
        for (std::size_t q = 0; q < k; ++q) fresh = fresh && idx[q] != idx[k];
      }
    }
    std::array<Point2, 4> src{}, dst{};
    for (std::size_t k = 0; k < 4; ++k) {
      sample[k] = pairs[idx[k]];
      src[k] = sample[k].source;
      dst[k] = sample[k].target;
    }
    if (!any_three_collinear(src) && !any_three_collinear(dst)) return true;
  }
  return false;
}

}  // namespace detail

/// RANSAC over minimal 4-point DLT fits with a fixed iteration budget.
///
/// Iteration k draws its sample from an xoshiro256** stream derived from
/// (seed, k), so the result is a pure function of the inputs and config. The
/// model with most inliers wins (earliest iteration on ties) and is re-fit by
/// DLT on its full inlier set, with gross residual outliers trimmed.
inline Homography ransac_homography(std::span<const PointPair> pairs, const RansacConfig& cfg) {
  cfg.validate();
  if (pairs.size() < 4) {
    throw Error(ErrorCode::InsufficientCorrespondences, std::to_string(pairs.size()) + " correspondences, need >= 4");
  }
  std::optional<Eigen::Matrix3d> best;
  std::size_t best_count = 0;
  std::array<PointPair, 4> sample{};
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    auto rng = Xoshiro256StarStar::for_stream(cfg.seed, it);
    if (!detail::draw_minimal_sample(rng, pairs, sample)) continue;
    Homography candidate;
    try {
      candidate = dlt_homography(sample);
    } catch (const Error&) {
      continue;
    }
    const auto flags = inlier_flags(candidate.m, pairs, cfg.inlier_tolerance_px);
    const std::size_t count = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
    if (count > best_count) {
      best_count = count;
      best = candidate.m;
    }
  }
  if (!best || best_count < std::max<std::size_t>(cfg.min_inliers, 4)) {
    throw Error(ErrorCode::NoConsensus, "best model has " + std::to_string(best_count) + " inliers, need " +
                                            std::to_string(std::max<std::size_t>(cfg.min_inliers, 4)));
  }

  Eigen::Matrix3d model = *best;
  auto flags = inlier_flags(model, pairs, cfg.inlier_tolerance_px);
  const auto min_support = std::max<std::size_t>(cfg.min_inliers, 4);
  std::vector<PointPair> support;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (flags[i]) support.push_back(pairs[i]);

  // Re-fit on the inlier set, then trim residual outliers: inliers further
  // than 3 robust sigmas (MAD about zero) from the re-fit model, floored at
  // 1% of the tolerance, are dropped and the fit repeated.
  for (int round = 0; round < 4; ++round) {
    Eigen::Matrix3d refit;
    try {
      refit = dlt_homography(support).m;
    } catch (const Error&) {
      break;  // keep the previous model when the support is rank deficient
    }
    model = refit;
    std::vector<double> residuals;
    residuals.reserve(support.size());
    for (const auto& pp : support) {
      const auto e = reprojection_error_sq(model, pp);
      residuals.push_back(e ? std::sqrt(*e) : std::numeric_limits<double>::infinity());
    }
    std::vector<double> sorted = residuals;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double sigma = 1.4826 * sorted[sorted.size() / 2];
    const double cutoff = std::max(3.0 * sigma, 0.01 * cfg.inlier_tolerance_px);
    std::vector<PointPair> kept;
    for (std::size_t i = 0; i < support.size(); ++i)
      if (residuals[i] <= cutoff) kept.push_back(support[i]);
    if (kept.size() == support.size() || kept.size() < min_support) break;
    support = std::move(kept);
  }
  flags = inlier_flags(model, pairs, cfg.inlier_tolerance_px);
  if (static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1)) < min_support) {
    model = *best;
    flags = inlier_flags(model, pairs, cfg.inlier_tolerance_px);
  }

  Homography out;
  out.m = model;
  out.inlier_count = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
  out.inlier_ratio = static_cast<double>(out.inlier_count) / static_cast<double>(pairs.size());
  return out;
}

inline std::vector<PointPair> to_point_pairs(const CorrespondenceSet& corrs) {
  std::vector<PointPair> pairs;
  pairs.reserve(corrs.pairs.size());
  for (const auto& c : corrs.pairs) pairs.push_back({c.source_px, c.target_px});
  return pairs;
}

inline Homography ransac_homography(const CorrespondenceSet& corrs, const RansacConfig& cfg) {
  return ransac_homography(to_point_pairs(corrs), cfg);
}

/// Inverse-mapped nearest-neighbour warp. Target pixel (x, y) samples the
/// source pixel containing inverse(h) applied to its center (x + .5, y + .5).
/// Pixels whose preimage is at infinity stay false.
inline BinaryMask warp_mask(const Homography& h, const BinaryMask& mask, int target_width, int target_height) {
  const Eigen::Matrix3d inv = inverse(h).m;
  BinaryMask out(target_width, target_height);
  for (int y = 0; y < target_height; ++y) {
    for (int x = 0; x < target_width; ++x) {
      const auto p = try_project(inv, {x + 0.5, y + 0.5});
      if (!p) continue;
      const double sx = std::floor(p->x);
      const double sy = std::floor(p->y);
      if (sx < 0.0 || sy < 0.0 || sx >= mask.width() || sy >= mask.height()) continue;
      if (mask.at(static_cast<int>(sx), static_cast<int>(sy))) out.set(x, y);
    }
  }
  return out;
}

}  // namespace zscd
