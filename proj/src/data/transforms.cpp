#include "huvr/data/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "huvr/autodiff/ops.hpp"
#include "huvr/error.hpp"

namespace huvr::data {

using namespace huvr::ad;

Tensor normalize(const Tensor& pixels) { return add_scalar(mul_scalar(pixels, 2.0), -1.0); }

Tensor denormalize(const Tensor& x) { return add_scalar(mul_scalar(x, 0.5), 0.5); }

Tensor stack_pixels(const std::vector<Tensor>& pixels, ad::DType dtype) {
  if (pixels.empty()) throw ShapeError("stack_pixels: no images");
  std::vector<Tensor> rows;
  rows.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p.rank() != 3 || p.shape() != pixels[0].shape())
      throw ShapeError("stack_pixels: images differ in shape");
    Tensor r = reshape(p.detached(), {1, p.dim(0), p.dim(1), p.dim(2)});
    rows.push_back(r.dtype() == dtype ? r : r.cast(dtype));
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

Tensor patchify(const Tensor& images, std::size_t patch) {
  const bool single = images.rank() == 3;
  Tensor x = single ? reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("patchify: expected [B, 3, H, W]");
  const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
  if (patch == 0 || H % patch != 0 || W % patch != 0)
    throw ShapeError("patchify: " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by patch " + std::to_string(patch));
  const std::size_t R = H / patch, C = W / patch;
  Tensor t = permute(reshape(x, {B, 3, R, patch, C, patch}), {0, 2, 4, 1, 3, 5});
  return reshape(t, {B * R * C, 3, patch, patch});
}

CropBox sample_crop(std::size_t H, std::size_t W, Rng& rng, const CropParams& p) {
  const double area = static_cast<double>(H * W);
  std::uniform_real_distribution<double> scale(p.scale_min, p.scale_max);
  std::uniform_real_distribution<double> log_ratio(std::log(p.ratio_min), std::log(p.ratio_max));
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * scale(rng);
    const double ar = std::exp(log_ratio(rng));
    const auto w = static_cast<long>(std::lround(std::sqrt(target * ar)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target / ar)));
    if (w > 0 && h > 0 && w <= static_cast<long>(W) && h <= static_cast<long>(H)) {
      std::uniform_int_distribution<std::size_t> top(0, H - static_cast<std::size_t>(h));
      std::uniform_int_distribution<std::size_t> left(0, W - static_cast<std::size_t>(w));
      CropBox b;
      b.top = top(rng);
      b.left = left(rng);
      b.height = static_cast<std::size_t>(h);
      b.width = static_cast<std::size_t>(w);
      return b;
    }
  }
  // Centre crop at the closest admissible aspect ratio.
  const double in_ratio = static_cast<double>(W) / static_cast<double>(H);
  CropBox b;
  b.fallback = true;
  if (in_ratio < p.ratio_min) {
    b.width = W;
    b.height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(W / p.ratio_min)));
  } else if (in_ratio > p.ratio_max) {
    b.height = H;
    b.width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(H * p.ratio_max)));
  } else {
    b.height = H;
    b.width = W;
  }
  b.height = std::min(b.height, H);
  b.width = std::min(b.width, W);
  b.top = (H - b.height) / 2;
  b.left = (W - b.width) / 2;
  return b;
}

Tensor crop(const Tensor& pixels, const CropBox& box) {
  if (box.top + box.height > pixels.dim(1) || box.left + box.width > pixels.dim(2))
    throw ShapeError("crop: box outside image");
  return slice(slice(pixels, 1, box.top, box.height), 2, box.left, box.width);
}

Tensor resize_bilinear(const Tensor& pixels, std::size_t out_h, std::size_t out_w) {
  if (pixels.rank() != 3) throw ShapeError("resize: expected [C, H, W]");
  const std::size_t C = pixels.dim(0), H = pixels.dim(1), W = pixels.dim(2);
  const auto src = pixels.to_vector();
  std::vector<double> out(C * out_h * out_w);
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = std::clamp((static_cast<double>(i) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x = std::clamp((static_cast<double>(j) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double* s = src.data() + c * H * W;
        const double top = s[y0 * W + x0] * (1 - fx) + s[y0 * W + x1] * fx;
        const double bot = s[y1 * W + x0] * (1 - fx) + s[y1 * W + x1] * fx;
        out[(c * out_h + i) * out_w + j] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return Tensor::from_doubles({C, out_h, out_w}, out, pixels.dtype());
}

Image random_resized_crop(const Image& img, std::size_t out_res, Rng& rng, const CropParams& p) {
  const CropBox box = sample_crop(img.height(), img.width(), rng, p);
  Image out = make_image(resize_bilinear(crop(img.pixels, box), out_res, out_res));
  out.id = img.id;  // views of one source image share its teacher features
  return out;
}

}  // namespace huvr::data
