#pragma once

#include <cstddef>
#include <vector>

#include "huvr/data/dataset.hpp"
#include "huvr/hypernet/model.hpp"

namespace huvr::eval {

using ad::Tensor;

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all elements of images in [0,1]; capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);
double ssim_value(const Tensor& a, const Tensor& b);

/// Eval-mode reconstructions [B, 3, H, W] in [0,1] for images of the model's size.
Tensor reconstruct(const hypernet::HuvrModel& model, const std::vector<data::Image>& images);

struct ReconEval {
  double psnr = 0;  // mean over images
  double ssim = 0;
  std::vector<double> psnr_each, ssim_each;
};

/// First `limit` images (0 = all), in batches.
ReconEval evaluate_reconstruction(const hypernet::HuvrModel& model, const data::Dataset& ds,
                                  std::size_t limit = 0, std::size_t batch = 32);

}  // namespace huvr::eval
