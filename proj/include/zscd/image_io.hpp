#pragma once

// PNG input/output through libpng's simplified API. Masks are 8-bit
// grayscale with {0, 255}; overlays are 8-bit RGB.

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zscd/error.hpp"
#include "zscd/mask.hpp"

namespace zscd {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& width,
                                          int& height) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::IoFailure, path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::IoFailure, path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

inline void write_png(const std::filesystem::path& path, png_uint_32 format, int width, int height,
                      const std::uint8_t* data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.format = format;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, path.string() + ": " + image.message);
  }
}

}  // namespace detail

inline void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  if (mask.empty()) throw Error(ErrorCode::BadShape, "cannot write an empty mask to " + path.string());
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) gray[i] = mask.cells()[i] ? 255 : 0;
  detail::write_png(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), gray.data());
}

/// Raw 8-bit grayscale read (color inputs are converted by libpng).
inline std::vector<std::uint8_t> read_gray_png(const std::filesystem::path& path, int& width, int& height) {
  return detail::read_png(path, PNG_FORMAT_GRAY, width, height);
}

/// Loads a mask, treating gray levels above 127 as set.
inline BinaryMask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto gray = read_gray_png(path, w, h);
  BinaryMask mask(w, h);
  for (std::size_t i = 0; i < gray.size(); ++i) mask.cells()[i] = gray[i] > 127 ? 1 : 0;
  return mask;
}

inline RgbImage read_rgb_png(const std::filesystem::path& path) {
  RgbImage img;
  img.pixels = detail::read_png(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

inline void write_rgb_png(const RgbImage& img, const std::filesystem::path& path) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw Error(ErrorCode::BadShape, "RGB buffer size does not match dims");
  }
  detail::write_png(path, PNG_FORMAT_RGB, img.width, img.height, img.pixels.data());
}

}  // namespace zscd
