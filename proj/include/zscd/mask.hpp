#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "zscd/error.hpp"

namespace zscd {

/// Row-major 2-D boolean mask. Cells hold 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool value = false)
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorCode::BadShape, "negative mask dimensions");
    cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), value ? 1 : 0);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }

  bool at(int x, int y) const { return cells_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { cells_[index(x, y)] = v ? 1 : 0; }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }
  std::vector<std::uint8_t>& cells() noexcept { return cells_; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto c : cells_) n += c;
    return n;
  }

  bool same_dims(const BinaryMask& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

inline void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_dims(b)) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": " + std::to_string(a.width()) + "x" +
                                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                            "x" + std::to_string(b.height()));
  }
}

inline BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "mask intersection");
  BinaryMask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out.cells()[i] = a.cells()[i] & b.cells()[i];
  return out;
}

inline BinaryMask& operator|=(BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "mask union");
  for (std::size_t i = 0; i < a.size(); ++i) a.cells()[i] |= b.cells()[i];
  return a;
}

inline std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "mask intersection");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a.cells()[i] & b.cells()[i];
  return n;
}

}  // namespace zscd
