#pragma once

// Patch-level cosine similarity between two embedding grids and the
// row-argmax correspondences extracted from it.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "zscd/error.hpp"
#include "zscd/tensor_store.hpp"

namespace zscd {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct Correspondence {
  std::size_t source = 0;
  std::size_t target = 0;
  float similarity = 0.0f;
  Point2 source_px;
  Point2 target_px;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
};

struct MatchOptions {
  /// Keep only pairs whose target also picks the source as its best match.
  bool mutual = false;
};

namespace detail {

inline std::vector<double> descriptor_norms(std::span<const float> data, std::size_t dim, const char* side) {
  const std::size_t n = data.size() / dim;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = data[i * dim + k];
      sq += v * v;
    }
    if (!(sq > 0.0)) throw Error(ErrorCode::ZeroNormDescriptor, std::string(side) + " patch " + std::to_string(i));
    norms[i] = std::sqrt(sq);
  }
  return norms;
}

}  // namespace detail

/// Cosine similarity between every descriptor of `a` (rows) and `b`
/// (columns). Both spans hold row-major descriptors of length `dim`. Dot
/// products accumulate in double; entries are stored as float.
inline SimilarityMatrix similarity_matrix(std::span<const float> a, std::span<const float> b, std::size_t dim) {
  if (dim == 0 || a.size() % dim != 0 || b.size() % dim != 0) {
    throw Error(ErrorCode::DimMismatch, "descriptor arrays are not multiples of dim " + std::to_string(dim));
  }
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "no descriptors");
  const auto norm_a = detail::descriptor_norms(a, dim, "source");
  const auto norm_b = detail::descriptor_norms(b, dim, "target");
  SimilarityMatrix s{norm_a.size(), norm_b.size(), {}};
  s.values.resize(s.rows * s.cols);
  for (std::size_t i = 0; i < s.rows; ++i) {
    const float* pa = a.data() + i * dim;
    for (std::size_t j = 0; j < s.cols; ++j) {
      const float* pb = b.data() + j * dim;
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += static_cast<double>(pa[k]) * static_cast<double>(pb[k]);
      s.values[i * s.cols + j] = static_cast<float>(dot / (norm_a[i] * norm_b[j]));
    }
  }
  return s;
}

inline SimilarityMatrix similarity_matrix(const PatchEmbeddingGrid& a, const PatchEmbeddingGrid& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch, "descriptor length " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  return similarity_matrix(a.data(), b.data(), a.dim());
}

struct PatchMatch {
  std::size_t source = 0;
  std::size_t target = 0;
  float similarity = 0.0f;

  friend bool operator==(const PatchMatch&, const PatchMatch&) = default;
};

/// Row argmax; ties go to the lowest column.
inline std::vector<PatchMatch> match_patches(const SimilarityMatrix& s, MatchOptions options = {}) {
  if (s.rows == 0 || s.cols == 0) throw Error(ErrorCode::EmptyInput, "similarity matrix is empty");
  std::vector<PatchMatch> matches(s.rows);
  for (std::size_t i = 0; i < s.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < s.cols; ++j)
      if (s.at(i, j) > s.at(i, best)) best = j;
    matches[i] = {i, best, s.at(i, best)};
  }
  if (!options.mutual) return matches;

  std::vector<std::size_t> col_best(s.cols, 0);
  for (std::size_t j = 0; j < s.cols; ++j)
    for (std::size_t i = 1; i < s.rows; ++i)
      if (s.at(i, j) > s.at(col_best[j], j)) col_best[j] = i;
  std::erase_if(matches, [&](const PatchMatch& m) { return col_best[m.target] != m.source; });
  return matches;
}

/// Pixel center of a patch: ((col + 0.5) * patch, (row + 0.5) * patch).
inline Point2 patch_center(std::size_t index, const PatchEmbeddingGrid& grid) {
  if (index >= grid.patch_count()) {
    throw Error(ErrorCode::IndexOutOfRange, "patch " + std::to_string(index) + " >= " + std::to_string(grid.patch_count()));
  }
  const double ps = grid.patch_size_px();
  const auto row = index / grid.width();
  const auto col = index % grid.width();
  return {(static_cast<double>(col) + 0.5) * ps, (static_cast<double>(row) + 0.5) * ps};
}

inline CorrespondenceSet make_correspondences(const PatchEmbeddingGrid& source, const PatchEmbeddingGrid& target,
                                              std::span<const PatchMatch> matches) {
  CorrespondenceSet set;
  set.pairs.reserve(matches.size());
  for (const auto& m : matches) {
    set.pairs.push_back({m.source, m.target, m.similarity, patch_center(m.source, source), patch_center(m.target, target)});
  }
  return set;
}

/// Similarity, argmax matching and patch-center lifting in one call.
inline CorrespondenceSet correspond(const PatchEmbeddingGrid& source, const PatchEmbeddingGrid& target,
                                    MatchOptions options = {}) {
  const auto matches = match_patches(similarity_matrix(source, target), options);
  return make_correspondences(source, target, matches);
}

}  // namespace zscd
