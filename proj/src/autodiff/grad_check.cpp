#include "huvr/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "huvr/error.hpp"

namespace huvr::ad {

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (max_coords == 0 || max_coords >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t j = 0; j < max_coords; ++j) idx.push_back(j * n / max_coords);
  return idx;
}

double finite_scalar(const Tensor& t) {
  if (t.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  const double v = t.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

double rel_err(double analytic, double numeric, double floor) {
  if (!std::isfinite(analytic)) throw NumericError("grad_check: non-finite analytic gradient");
  return std::abs(analytic - numeric) / (std::abs(numeric) + floor);
}

// Central-difference error over the chosen coordinates of `buf`; `eval` reads buf.
template <class Eval>
double compare(std::span<double> buf, std::span<const double> analytic, double eps,
               std::size_t max_coords, double floor, Eval eval) {
  double worst = 0.0;
  for (std::size_t i : pick_coords(buf.size(), max_coords)) {
    const double saved = buf[i];
    buf[i] = saved + eps;
    const double up = eval();
    buf[i] = saved - eps;
    const double down = eval();
    buf[i] = saved;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * eps), floor));
  }
  return worst;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double eps,
                  std::size_t max_coords, double floor) {
  if (point.dtype() != DType::f64) throw DTypeError("grad_check: point must be f64");
  Tensor x = point.detached().clone();
  Tape tape;
  Tensor loss = fn(tape.watch(x));
  finite_scalar(loss);
  if (!loss.recorded()) throw TapeError("grad_check: function output is not recorded");
  const Tensor g = tape.backward(loss).param_grad(x);
  auto buf = x.mutable_data<double>();
  return compare(buf, g.data<double>(), eps, max_coords, floor, [&] { return finite_scalar(fn(x)); });
}

double grad_check_params(const std::function<Tensor(const Binder&)>& loss_fn,
                         const std::vector<Tensor>& params, double eps,
                         std::size_t max_coords_per_param, double floor) {
  for (const auto& p : params)
    if (p.dtype() != DType::f64) throw DTypeError("grad_check_params: parameters must be f64");
  Tape tape;
  Tensor loss = loss_fn(Binder(&tape));
  finite_scalar(loss);
  GradMap grads = tape.backward(loss);
  double worst = 0.0;
  for (Tensor p : params) {
    const Tensor g = grads.param_grad(p);
    worst = std::max(worst, compare(p.mutable_data<double>(), g.data<double>(), eps,
                                    max_coords_per_param, floor,
                                    [&] { return finite_scalar(loss_fn(Binder{})); }));
  }
  return worst;
}

}  // namespace huvr::ad
