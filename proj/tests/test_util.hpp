#pragma once

#include <random>
#include <vector>

#include "huvr/autodiff/ops.hpp"
#include "huvr/autodiff/tensor.hpp"

namespace huvr::testing {

inline ad::Tensor uniform(const ad::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0, ad::DType dtype = ad::DType::f64) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor::from_doubles(shape, v, dtype);
}

// Values in +-[0.2, 1]; keeps kinks (relu, max) away from the finite-difference stencil.
inline ad::Tensor away_from_zero(const ad::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return ad::Tensor::from_doubles(shape, v, ad::DType::f64);
}

// sum(w * y) with fixed random w, so every output coordinate feeds the scalar.
inline ad::Tensor weighted_sum(const ad::Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, uniform(y.shape(), rng, -1.0, 1.0, y.dtype())));
}

}  // namespace huvr::testing
