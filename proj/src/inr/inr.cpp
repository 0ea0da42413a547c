#include "huvr/inr/inr.hpp"

#include <string>

#include "huvr/error.hpp"

namespace huvr::inr {

using namespace huvr::ad;

void InrConfig::validate() const {
  if (pos_dim == 0 || pos_dim % 2 != 0) throw ConfigError("inr: pos_dim must be even and positive");
  if (n_mlp_layers == 0 || mlp_dim == 0) throw ConfigError("inr: empty MLP");
  if (coord_stride == 0 || patch_size % coord_stride != 0)
    throw ConfigError("inr: patch_size must be divisible by coord_stride");
  if (upscale_factor != coord_stride) throw ConfigError("inr: upscale_factor must equal coord_stride");
  if (modulated_layer < 1 || modulated_layer > n_mlp_layers)
    throw ConfigError("inr: modulated_layer must be in [1, n_mlp_layers]");
}

BaseInr BaseInr::init(const InrConfig& cfg, nn::Rng& rng, DType dtype) {
  cfg.validate();
  BaseInr b;
  b.cfg = cfg;
  for (std::size_t i = 1; i <= cfg.n_mlp_layers; ++i)
    b.mlp.push_back(nn::Linear::init_fan_in(cfg.layer_in(i), cfg.layer_out(i), rng, dtype));
  b.head = nn::Conv3x3::init_fan_in(cfg.mlp_dim, 3 * cfg.coord_stride * cfg.coord_stride, rng, dtype);
  return b;
}

void BaseInr::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < mlp.size(); ++i) mlp[i].collect(out, prefix + ".mlp" + std::to_string(i + 1));
  head.collect(out, prefix + ".head");
}

std::size_t ModulatedInr::instances() const {
  std::size_t p = 1;
  for (const auto& m : mods)
    if (m.defined()) {
      if (p != 1 && m.dim(0) != p) throw ShapeError("modulations disagree on instance count");
      p = m.dim(0);
    }
  return p;
}

ModulatedInr unmodulated(const BaseInr& base) {
  return {&base, std::vector<Tensor>(base.mlp.size())};
}

ModulatedInr modulate(const BaseInr& base, std::size_t layer, const Tensor& m) {
  if (layer < 1 || layer > base.mlp.size()) throw ShapeError("modulate: layer index out of range");
  const auto& w = base.mlp[layer - 1].weight;
  const Shape want{w.dim(1), w.dim(0)};
  Tensor mm = m.rank() == 2 ? reshape(m, {1, m.dim(0), m.dim(1)}) : m;
  if (mm.rank() != 3 || mm.dim(1) != want[0] || mm.dim(2) != want[1])
    throw ShapeError("modulate: M " + to_string(m.shape()) + " does not match layer " +
                     std::to_string(layer) + " shape " + to_string(want));
  ModulatedInr theta = unmodulated(base);
  theta.mods[layer - 1] = mm;
  return theta;
}

Tensor coord_grid(std::size_t rows, std::size_t cols, DType dtype) {
  std::vector<double> c;
  c.reserve(rows * cols * 2);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      c.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(rows));
      c.push_back((static_cast<double>(j) + 0.5) / static_cast<double>(cols));
    }
  return Tensor::from_doubles({rows * cols, 2}, c, dtype);
}

namespace {

// Runs MLP layers 1..last, returning [P or 1, m, d]. The activation after `last`
// is applied only when `relu_last`.
Tensor run_mlp(const Binder& bind, const ModulatedInr& theta, const Tensor& encoding,
               std::size_t last, bool relu_last) {
  const BaseInr& base = *theta.base;
  if (encoding.rank() != 2 || encoding.dim(1) != base.cfg.pos_dim)
    throw ShapeError("inr: encoding " + to_string(encoding.shape()) + " does not match pos_dim");
  const std::size_t P = theta.instances();
  Tensor h = reshape(encoding, {1, encoding.dim(0), encoding.dim(1)});
  for (std::size_t i = 0; i < last; ++i) {
    const nn::Linear& layer = base.mlp[i];
    if (theta.mods[i].defined()) {
      if (h.dim(0) != P) h = broadcast(h, {P, h.dim(1), h.dim(2)});
      Tensor w = mul(transpose(bind(layer.weight)), theta.mods[i]);  // [P, d_in, d_out]
      h = add(matmul(h, w), bind(layer.bias));
    } else {
      h = nn::linear(bind, h, layer);
    }
    if (i + 1 < last || relu_last) h = relu(h);
  }
  return h;
}

}  // namespace

Tensor decode_encoded(const Binder& bind, const ModulatedInr& theta, const Tensor& encoding,
                      std::size_t rows, std::size_t cols) {
  if (!theta.base) throw Error("decode: no base INR");
  if (theta.mods.size() != theta.base->mlp.size()) throw ShapeError("decode: modulation list size");
  if (encoding.dim(0) != rows * cols) throw ShapeError("decode: grid size does not match encoding");
  const std::size_t s = theta.base->cfg.coord_stride;
  Tensor h = run_mlp(bind, theta, encoding, theta.base->mlp.size(), true);  // [P', m, C]
  const std::size_t P = h.dim(0), C = h.dim(2);
  Tensor y = nn::conv2d_3x3_nhwc(bind, reshape(h, {P, rows, cols, C}), theta.base->head);
  y = permute(reshape(y, {P, rows, cols, 3, s, s}), {0, 3, 1, 4, 2, 5});
  return sigmoid(reshape(y, {P, 3, rows * s, cols * s}));
}

Tensor decode(const Binder& bind, const ModulatedInr& theta, std::size_t rows, std::size_t cols) {
  const DType dt = theta.base->mlp[0].weight.dtype();
  return decode_encoded(bind, theta,
                        nn::sinusoidal_encode(coord_grid(rows, cols, dt), theta.base->cfg.pos_dim),
                        rows, cols);
}

Tensor decode_patch(const Binder& bind, const ModulatedInr& theta) {
  const std::size_t g = theta.base->cfg.patch_size / theta.base->cfg.coord_stride;
  return decode(bind, theta, g, g);
}

Tensor preactivation(const Binder& bind, const ModulatedInr& theta, std::size_t layer,
                     std::size_t rows, std::size_t cols) {
  if (layer < 1 || layer > theta.base->mlp.size()) throw ShapeError("preactivation: bad layer");
  const DType dt = theta.base->mlp[0].weight.dtype();
  Tensor enc = nn::sinusoidal_encode(coord_grid(rows, cols, dt), theta.base->cfg.pos_dim);
  return run_mlp(bind, theta, enc, layer, false);
}

Tensor assemble_images(const Tensor& patches, std::size_t rows, std::size_t cols) {
  if (patches.rank() != 4 || patches.dim(1) != 3 || patches.dim(2) != patches.dim(3))
    throw ShapeError("assemble: expected [N, 3, p, p], got " + to_string(patches.shape()));
  if (rows == 0 || cols == 0 || patches.dim(0) % (rows * cols) != 0)
    throw ShapeError("assemble: patch count " + std::to_string(patches.dim(0)) +
                     " does not match grid " + std::to_string(rows) + "x" + std::to_string(cols));
  const std::size_t B = patches.dim(0) / (rows * cols), p = patches.dim(2);
  Tensor t = permute(reshape(patches, {B, rows, cols, 3, p, p}), {0, 3, 1, 4, 2, 5});
  return reshape(t, {B, 3, rows * p, cols * p});
}

Tensor assemble_image(const Tensor& patches, std::size_t rows, std::size_t cols) {
  if (patches.rank() == 4 && patches.dim(0) != rows * cols)
    throw ShapeError("assemble_image: expected " + std::to_string(rows * cols) + " patches, got " +
                     std::to_string(patches.dim(0)));
  Tensor img = assemble_images(patches, rows, cols);
  return reshape(img, {3, img.dim(2), img.dim(3)});
}

}  // namespace huvr::inr
