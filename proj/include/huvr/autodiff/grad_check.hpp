#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "huvr/autodiff/tensor.hpp"

namespace huvr::ad {

/// Max over checked coordinates of |analytic - numeric| / (|numeric| + floor), with
/// central differences of step `eps`. `point` must be f64. When `max_coords` is
/// nonzero, only that many evenly spaced coordinates are checked.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                  double eps = 1e-5, std::size_t max_coords = 0, double floor = 1e-12);

/// Same measure for a loss that reads `params` through the Binder. Parameters are
/// perturbed in place and restored afterwards.
double grad_check_params(const std::function<Tensor(const Binder&)>& loss_fn,
                         const std::vector<Tensor>& params, double eps = 1e-5,
                         std::size_t max_coords_per_param = 0, double floor = 1e-12);

}  // namespace huvr::ad
