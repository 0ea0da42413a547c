#pragma once

#include <cstddef>
#include <vector>

#include "huvr/autodiff/tensor.hpp"

namespace huvr::trainer {

using ad::Tensor;

/// Decoupled weight decay Adam. Moments live in the parameter dtype.
class AdamW {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.05;
  std::size_t t = 0;
  std::vector<Tensor> m, v;

  AdamW() = default;
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1(beta1), beta2(beta2), eps(eps), weight_decay(weight_decay) {}

  /// Updates `params` in place. Throws NumericError (leaving everything untouched)
  /// when a gradient is not finite.
  void step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr);
};

/// Scales `grads` in place so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);
double global_norm(const std::vector<Tensor>& grads);

/// Linear 0 -> lr_eff over `warmup` steps, then cosine from lr_eff to 0 at `total`.
double lr_schedule(std::size_t step, std::size_t total, std::size_t warmup, double lr_eff);

}  // namespace huvr::trainer
