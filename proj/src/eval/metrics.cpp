#include "huvr/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "huvr/data/transforms.hpp"
#include "huvr/error.hpp"
#include "huvr/losses/losses.hpp"

namespace huvr::eval {

using namespace huvr::ad;

double psnr(const Tensor& a, const Tensor& b) {
  const double mse = losses::pixel_mse(a, b).item();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_value(const Tensor& a, const Tensor& b) { return losses::ssim(a, b).item(); }

Tensor reconstruct(const hypernet::HuvrModel& model, const std::vector<data::Image>& images) {
  std::vector<Tensor> px;
  px.reserve(images.size());
  for (const auto& im : images) {
    if (im.height() != model.cfg.image_size || im.width() != model.cfg.image_size)
      throw ShapeError("reconstruct: image is " + std::to_string(im.height()) + "x" +
                       std::to_string(im.width()) + ", model expects " +
                       std::to_string(model.cfg.image_size));
    px.push_back(im.pixels);
  }
  Tensor x = data::normalize(data::stack_pixels(px, model.cfg.dtype));
  return hypernet::forward({}, model, x).recon;
}

ReconEval evaluate_reconstruction(const hypernet::HuvrModel& model, const data::Dataset& ds,
                                  std::size_t limit, std::size_t batch) {
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  if (n == 0) throw DataError("evaluate_reconstruction: empty dataset");
  ReconEval r;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    std::vector<data::Image> imgs(ds.images.begin() + static_cast<std::ptrdiff_t>(start),
                                  ds.images.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor rec = reconstruct(model, imgs);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      Tensor a = slice(rec, 0, i, 1);
      Tensor b = reshape(imgs[i].pixels, a.shape());
      if (b.dtype() != a.dtype()) b = b.cast(a.dtype());
      r.psnr_each.push_back(psnr(a, b));
      r.ssim_each.push_back(ssim_value(a, b));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    r.psnr += r.psnr_each[i] / static_cast<double>(n);
    r.ssim += r.ssim_each[i] / static_cast<double>(n);
  }
  return r;
}

}  // namespace huvr::eval
