#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "huvr/autodiff/tensor.hpp"

namespace huvr::data {

using ad::Tensor;

/// RGB image with values in [0,1], pixels [3, H, W] (f32).
struct Image {
  Tensor pixels;
  std::uint64_t id = 0;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

/// FNV-1a 64 over (u32 width LE, u32 height LE, interleaved RGB8 bytes).
std::uint64_t content_hash(std::uint32_t width, std::uint32_t height,
                           const std::vector<std::uint8_t>& rgb);

/// Quantizes [3,H,W] to interleaved RGB8 (round to nearest, clamped).
std::vector<std::uint8_t> to_rgb8(const Tensor& pixels);
/// Builds an Image from interleaved RGB8 bytes; the id is the content hash.
Image from_rgb8(std::uint32_t width, std::uint32_t height, const std::vector<std::uint8_t>& rgb);
/// Wraps [3,H,W] values (clamped to [0,1]); the id hashes the RGB8 quantization.
Image make_image(const Tensor& pixels);

/// Loads an 8-bit PNG (gray/RGB, with or without alpha; alpha dropped) or a binary PPM (P6).
Image load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Tensor& pixels);
void save_ppm(const std::filesystem::path& path, const Tensor& pixels);

}  // namespace huvr::data
