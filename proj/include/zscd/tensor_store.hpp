#pragma once

// ZSTF tensor container and the patch-embedding grid it stores.
//
// Layout (all integers unsigned 32-bit little-endian):
//   "ZSTF" | version = 1 | ndim | dims[ndim] | dtype (1 = float32) | payload
// The payload is row-major little-endian float32 and must be exactly
// product(dims) * 4 bytes long.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "zscd/error.hpp"

namespace zscd {

inline constexpr std::array<char, 4> kZstfMagic{'Z', 'S', 'T', 'F'};
inline constexpr std::uint32_t kZstfVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

/// Pixel geometry of the image an embedding grid was computed from.
struct GridGeometry {
  int patch_size_px = 0;
  int image_height_px = 0;
  int image_width_px = 0;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

class PatchEmbeddingGrid {
 public:
  PatchEmbeddingGrid() = default;

  PatchEmbeddingGrid(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data,
                     GridGeometry geometry)
      : height_(height), width_(width), dim_(dim), data_(std::move(data)), geometry_(geometry) {
    validate();
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t patch_count() const noexcept { return height_ * width_; }
  const GridGeometry& geometry() const noexcept { return geometry_; }
  int patch_size_px() const noexcept { return geometry_.patch_size_px; }
  int image_height_px() const noexcept { return geometry_.image_height_px; }
  int image_width_px() const noexcept { return geometry_.image_width_px; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> descriptor(std::size_t patch) const {
    if (patch >= patch_count()) {
      throw Error(ErrorCode::IndexOutOfRange, "patch " + std::to_string(patch) + " >= " + std::to_string(patch_count()));
    }
    return std::span<const float>(data_).subspan(patch * dim_, dim_);
  }

  friend bool operator==(const PatchEmbeddingGrid&, const PatchEmbeddingGrid&) = default;

 private:
  void validate() const {
    if (height_ < 2 || width_ < 2) {
      throw Error(ErrorCode::BadShape, "grid must be at least 2x2, got " + std::to_string(height_) + "x" +
                                           std::to_string(width_));
    }
    if (dim_ == 0) throw Error(ErrorCode::BadShape, "descriptor length must be positive");
    if (data_.size() != height_ * width_ * dim_) {
      throw Error(ErrorCode::BadShape, "data length " + std::to_string(data_.size()) + " != H*W*d = " +
                                           std::to_string(height_ * width_ * dim_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) throw Error(ErrorCode::NonFiniteValue, "value index " + std::to_string(i));
    }
    const auto& g = geometry_;
    if (g.patch_size_px <= 0 || g.image_height_px <= 0 || g.image_width_px <= 0) {
      throw Error(ErrorCode::BadShape, "patch size and image dims must be positive");
    }
    const auto ps = static_cast<std::size_t>(g.patch_size_px);
    if (height_ * ps > static_cast<std::size_t>(g.image_height_px) + ps ||
        width_ * ps > static_cast<std::size_t>(g.image_width_px) + ps) {
      throw Error(ErrorCode::BadShape, "grid extends more than one patch past the image");
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  GridGeometry geometry_;
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::vector<char>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace detail

inline std::vector<char> encode_zstf(std::span<const std::uint32_t> dims, std::span<const float> values) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != values.size()) throw Error(ErrorCode::BadShape, "dims do not match value count");
  std::vector<char> out(kZstfMagic.begin(), kZstfMagic.end());
  out.reserve(16 + 4 * dims.size() + 4 * values.size());
  detail::put_u32(out, kZstfVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::put_u32(out, d);
  detail::put_u32(out, kDtypeFloat32);
  for (float v : values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline RawTensor decode_zstf(const std::vector<char>& bytes) {
  auto need = [&](std::size_t offset, std::size_t len) {
    if (bytes.size() < offset + len) {
      throw Error(ErrorCode::TruncatedPayload, "file ends at offset " + std::to_string(bytes.size()) +
                                                   ", needed " + std::to_string(offset + len));
    }
  };
  need(0, 4);
  if (!std::equal(kZstfMagic.begin(), kZstfMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "offset 0: expected \"ZSTF\"");
  }
  need(4, 8);
  const auto version = detail::get_u32(bytes, 4);
  if (version != kZstfVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "offset 4: version " + std::to_string(version));
  }
  const auto ndim = detail::get_u32(bytes, 8);
  std::size_t offset = 12;
  need(offset, std::size_t{4} * ndim + 4);
  RawTensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i, offset += 4) {
    const std::uint64_t d = detail::get_u32(bytes, offset);
    t.dims.push_back(static_cast<std::uint32_t>(d));
    // Saturate so absurd headers are reported as truncation, not wrapped.
    count = (d != 0 && count > bytes.size()) ? count : count * d;
  }
  const auto dtype = detail::get_u32(bytes, offset);
  if (dtype != kDtypeFloat32) {
    throw Error(ErrorCode::UnsupportedDtype, "offset " + std::to_string(offset) + ": dtype " + std::to_string(dtype));
  }
  offset += 4;
  if (count > bytes.size()) {
    throw Error(ErrorCode::TruncatedPayload, "payload at offset " + std::to_string(offset) +
                                                 " shorter than declared dims");
  }
  const std::uint64_t payload = count * 4;
  const std::uint64_t available = bytes.size() - offset;
  if (available < payload) {
    throw Error(ErrorCode::TruncatedPayload, "payload at offset " + std::to_string(offset) + " has " +
                                                 std::to_string(available) + " bytes, dims require " +
                                                 std::to_string(payload));
  }
  if (available > payload) {
    throw Error(ErrorCode::TrailingBytes, "offset " + std::to_string(offset + payload) + ": " +
                                              std::to_string(available - payload) + " bytes past payload");
  }
  t.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i, offset += 4) {
    const float v = std::bit_cast<float>(detail::get_u32(bytes, offset));
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "offset " + std::to_string(offset));
    t.values[i] = v;
  }
  return t;
}

inline void write_zstf(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                       std::span<const float> values) {
  detail::write_file_bytes(path, encode_zstf(dims, values));
}

inline RawTensor read_zstf(const std::filesystem::path& path) { return decode_zstf(detail::read_file_bytes(path)); }

/// Writes the grid as a rank-3 [H, W, d] tensor. Geometry lives in the pair
/// manifest, not in the tensor file.
inline void write_tensor(const PatchEmbeddingGrid& grid, const std::filesystem::path& path) {
  const std::array<std::uint32_t, 3> dims{static_cast<std::uint32_t>(grid.height()),
                                          static_cast<std::uint32_t>(grid.width()),
                                          static_cast<std::uint32_t>(grid.dim())};
  write_zstf(path, dims, grid.data());
}

inline PatchEmbeddingGrid read_tensor(const std::filesystem::path& path, const GridGeometry& geometry) {
  RawTensor t = read_zstf(path);
  if (t.dims.size() != 3) {
    throw Error(ErrorCode::BadShape, path.string() + ": embedding grid must have 3 dims, got " +
                                         std::to_string(t.dims.size()));
  }
  return PatchEmbeddingGrid(t.dims[0], t.dims[1], t.dims[2], std::move(t.values), geometry);
}

}  // namespace zscd
