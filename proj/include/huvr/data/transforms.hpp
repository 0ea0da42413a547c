#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "huvr/autodiff/tensor.hpp"
#include "huvr/data/image.hpp"

namespace huvr::data {

using Rng = std::mt19937_64;

/// (x - 0.5) / 0.5 per channel.
Tensor normalize(const Tensor& pixels);
Tensor denormalize(const Tensor& x);

/// Stacks [3, H, W] pixel tensors into [B, 3, H, W] of `dtype`.
Tensor stack_pixels(const std::vector<Tensor>& pixels, ad::DType dtype);

/// [B, 3, H, W] -> [B*P, 3, p, p] (or [3, H, W] -> [P, 3, p, p]), row-major tiles.
Tensor patchify(const Tensor& images, std::size_t patch);

struct CropParams {
  double scale_min = 0.2, scale_max = 1.0;
  double ratio_min = 3.0 / 4.0, ratio_max = 4.0 / 3.0;
};

struct CropBox {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  bool fallback = false;  // true when all attempts failed and the centre crop was used
};

/// Area fraction uniform in [scale_min, scale_max], aspect log-uniform in
/// [ratio_min, ratio_max]; up to 10 attempts, then a centre crop.
CropBox sample_crop(std::size_t H, std::size_t W, Rng& rng, const CropParams& p = {});

/// Bilinear resize with half-pixel centres (no antialiasing) of pixels [3, H, W].
Tensor resize_bilinear(const Tensor& pixels, std::size_t out_h, std::size_t out_w);
Tensor crop(const Tensor& pixels, const CropBox& box);

/// The result keeps the source image id.
Image random_resized_crop(const Image& img, std::size_t out_res, Rng& rng,
                          const CropParams& p = {});

}  // namespace huvr::data
