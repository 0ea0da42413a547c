#include "huvr/trainer/optim.hpp"

#include <cmath>
#include <numbers>

#include "huvr/error.hpp"

namespace huvr::trainer {

using ad::DType;

namespace {

template <class F>
void visit(const Tensor& t, F&& f) {
  if (t.dtype() == DType::f32) {
    for (float x : t.data<float>()) f(static_cast<double>(x));
  } else {
    for (double x : t.data<double>()) f(x);
  }
}

template <class T>
void adam_update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, double lr,
                 double b1, double b2, double eps, double wd, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1, vhat = vi / c2;
    const double pi = p[i];
    p[i] = static_cast<T>(pi - lr * wd * pi - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

void AdamW::step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("AdamW: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].dtype() != grads[i].dtype())
      throw ShapeError("AdamW: gradient " + std::to_string(i) + " does not match its parameter");
    bool finite = true;
    visit(grads[i], [&](double x) { finite &= std::isfinite(x); });
    if (!finite) throw NumericError("AdamW: non-finite gradient for parameter " + std::to_string(i));
  }
  if (m.empty()) {
    for (const auto& p : params) {
      m.push_back(Tensor::zeros(p.shape(), p.dtype()));
      v.push_back(Tensor::zeros(p.shape(), p.dtype()));
    }
  }
  if (m.size() != params.size()) throw ShapeError("AdamW: parameter count changed");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (p.dtype() == DType::f32)
      adam_update<float>(p.mutable_data<float>(), grads[i].data<float>(), m[i].mutable_data<float>(),
                         v[i].mutable_data<float>(), lr, beta1, beta2, eps, weight_decay, c1, c2);
    else
      adam_update<double>(p.mutable_data<double>(), grads[i].data<double>(), m[i].mutable_data<double>(),
                          v[i].mutable_data<double>(), lr, beta1, beta2, eps, weight_decay, c1, c2);
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads) visit(g, [&](double x) { s += x * x; });
  return std::sqrt(s);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (!(norm > max_norm)) return norm;
  const std::vector<Tensor> src = grads;
  double scale = max_norm / norm;
  // f32 rounding can leave the result a few ulps above max_norm; shrink until it is not.
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      // Fresh buffers: gradients may share storage with tape internals.
      Tensor c = src[i].clone();
      if (c.dtype() == DType::f32)
        for (float& x : c.mutable_data<float>()) x = static_cast<float>(x * scale);
      else
        for (double& x : c.mutable_data<double>()) x *= scale;
      grads[i] = c;
    }
    if (global_norm(grads) <= max_norm) break;
    scale *= 1.0 - 1e-6;
  }
  return norm;
}

double lr_schedule(std::size_t step, std::size_t total, std::size_t warmup, double lr_eff) {
  if (step > total) throw ConfigError("lr_schedule: step beyond total");
  if (step < warmup) return lr_eff * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return lr_eff;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr_eff * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace huvr::trainer
