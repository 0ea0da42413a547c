#include "huvr/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "huvr/error.hpp"

namespace huvr::nn {

using namespace huvr::ad;

std::size_t count_params(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

Tensor trunc_normal(const Shape& shape, double std, Rng& rng, DType dtype) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) {
    double z;
    do z = normal(rng);
    while (std::abs(z) > 2.0);
    x = z * std;
  }
  return Tensor::from_doubles(shape, v, dtype);
}

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, DType dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_doubles(shape, v, dtype);
}

// ---------------------------------------------------------------------------

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, DType dtype, bool bias) {
  Linear l;
  l.weight = trunc_normal({out, in}, 0.02, rng, dtype);
  if (bias) l.bias = Tensor::zeros({out}, dtype);
  return l;
}

Linear Linear::init_fan_in(std::size_t in, std::size_t out, Rng& rng, DType dtype) {
  Linear l;
  l.weight = fan_in_uniform({out, in}, in, rng, dtype);
  l.bias = fan_in_uniform({out}, in, rng, dtype);
  return l;
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Tensor linear(const Binder& bind, const Tensor& x, const Linear& layer) {
  if (x.rank() < 1 || x.dim(-1) != layer.in_dim())
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(layer.weight.shape()));
  const bool flat = x.rank() == 1;
  Tensor x2 = flat ? reshape(x, {1, x.numel()}) : x;
  Tensor y = matmul(x2, bind(layer.weight), /*transpose_b=*/true);
  if (layer.bias.defined()) y = add(y, bind(layer.bias));
  return flat ? reshape(y, {layer.out_dim()}) : y;
}

LayerNorm LayerNorm::init(std::size_t d, DType dtype) {
  if (d == 0) throw ShapeError("layer_norm: d must be positive");
  return {Tensor::ones({d}, dtype), Tensor::zeros({d}, dtype), 1e-6};
}

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".shift", shift});
}

Tensor layer_norm(const Binder& bind, const Tensor& x, const LayerNorm& p) {
  if (x.rank() < 1 || x.dim(-1) != p.gain.numel())
    throw ShapeError("layer_norm: input " + to_string(x.shape()) + " does not match d=" +
                     std::to_string(p.gain.numel()));
  const Shape& s = x.shape();
  Tensor xc = sub(x, broadcast(mean(x, -1, true), s));
  Tensor var = mean(square(xc), -1, true);
  Tensor inv = power(add_scalar(var, p.eps), -0.5);
  Tensor y = mul(xc, broadcast(inv, s));
  return add(mul(y, bind(p.gain)), bind(p.shift));
}

NormLinear NormLinear::init(std::size_t in, std::size_t out, Rng& rng, DType dtype) {
  return {LayerNorm::init(in, dtype), Linear::init(in, out, rng, dtype)};
}

void NormLinear::collect(ParamList& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  proj.collect(out, prefix + ".proj");
}

Tensor norm_linear(const Binder& bind, const Tensor& x, const NormLinear& p) {
  return linear(bind, layer_norm(bind, x, p.norm), p.proj);
}

// ---------------------------------------------------------------------------
// Rotary embeddings

RopeTable make_rope_2d(std::size_t rows, std::size_t cols, std::size_t head_dim,
                       std::size_t n_prefix, DType dtype, double base) {
  if (head_dim % 2 != 0) throw ShapeError("rope: head_dim must be even");
  const std::size_t pairs = head_dim / 2;
  const std::size_t row_pairs = (pairs + 1) / 2;
  const std::size_t n = n_prefix + rows * cols;
  std::vector<double> c(n * pairs, 1.0), s(n * pairs, 0.0);
  for (std::size_t t = n_prefix; t < n; ++t) {
    const std::size_t idx = t - n_prefix;
    const double r = static_cast<double>(idx / cols), col = static_cast<double>(idx % cols);
    for (std::size_t j = 0; j < pairs; ++j) {
      const bool row_axis = j < row_pairs;
      const std::size_t k = row_axis ? j : j - row_pairs;
      const std::size_t per_axis = row_axis ? row_pairs : pairs - row_pairs;
      const double freq = std::pow(base, -static_cast<double>(k) / static_cast<double>(per_axis));
      const double angle = (row_axis ? r : col) * freq;
      c[t * pairs + j] = std::cos(angle);
      s[t * pairs + j] = std::sin(angle);
    }
  }
  return {Tensor::from_doubles({n, pairs}, c, dtype), Tensor::from_doubles({n, pairs}, s, dtype)};
}

Tensor apply_rope(const Tensor& x, const RopeTable& table) {
  const std::size_t hd = x.dim(-1);
  if (hd % 2 != 0) throw ShapeError("rope: head_dim must be even");
  const std::size_t n = x.dim(-2);
  if (table.cos.dim(0) != n || table.cos.dim(1) != hd / 2)
    throw ShapeError("rope: table " + to_string(table.cos.shape()) + " does not match input " +
                     to_string(x.shape()));
  Shape paired = x.shape();
  paired.back() = hd / 2;
  paired.push_back(2);
  Shape half = x.shape();
  half.back() = hd / 2;
  Tensor xp = reshape(x, paired);
  Tensor x0 = reshape(slice(xp, -1, 0, 1), half);
  Tensor x1 = reshape(slice(xp, -1, 1, 1), half);
  Tensor r0 = sub(mul(x0, table.cos), mul(x1, table.sin));
  Tensor r1 = add(mul(x0, table.sin), mul(x1, table.cos));
  Shape col = half;
  col.push_back(1);
  return reshape(concat({reshape(r0, col), reshape(r1, col)}, -1), x.shape());
}

// ---------------------------------------------------------------------------
// Attention

std::size_t swiglu_hidden(std::size_t d) {
  const std::size_t h = (8 * d + 2) / 3;
  return (h + 7) / 8 * 8;
}

AttentionBlock AttentionBlock::init(std::size_t d, std::size_t heads, FeedForward ff, Rng& rng,
                                    DType dtype) {
  if (heads == 0 || d % heads != 0)
    throw ShapeError("attention: d=" + std::to_string(d) + " not divisible by heads=" +
                     std::to_string(heads));
  AttentionBlock b;
  b.heads = heads;
  b.ff = ff;
  b.norm1 = LayerNorm::init(d, dtype);
  b.norm2 = LayerNorm::init(d, dtype);
  b.qkv = Linear::init(d, 3 * d, rng, dtype);
  b.out = Linear::init(d, d, rng, dtype);
  if (ff == FeedForward::swiglu) {
    const std::size_t h = swiglu_hidden(d);
    b.ff_in = Linear::init(d, h, rng, dtype);
    b.ff_gate = Linear::init(d, h, rng, dtype);
    b.ff_out = Linear::init(h, d, rng, dtype);
  } else {
    b.ff_in = Linear::init(d, 4 * d, rng, dtype);
    b.ff_out = Linear::init(4 * d, d, rng, dtype);
  }
  return b;
}

void AttentionBlock::collect(ParamList& out, const std::string& prefix) const {
  norm1.collect(out, prefix + ".norm1");
  qkv.collect(out, prefix + ".qkv");
  this->out.collect(out, prefix + ".out");
  norm2.collect(out, prefix + ".norm2");
  ff_in.collect(out, prefix + ".ff_in");
  if (ff == FeedForward::swiglu) ff_gate.collect(out, prefix + ".ff_gate");
  ff_out.collect(out, prefix + ".ff_out");
}

Tensor multi_head_attention(const Binder& bind, const Tensor& x, const AttentionBlock& p,
                            const RopeTable* rope, Tensor* weights_out) {
  if (x.rank() != 3 || x.dim(-1) != p.dim())
    throw ShapeError("attention: expected [B, n, " + std::to_string(p.dim()) + "], got " +
                     to_string(x.shape()));
  const std::size_t B = x.dim(0), n = x.dim(1), d = x.dim(2), h = p.heads, hd = d / h;
  Tensor qkv = linear(bind, x, p.qkv);                                        // [B, n, 3d]
  qkv = permute(reshape(qkv, {B, n, 3, h, hd}), {2, 0, 3, 1, 4});             // [3, B, h, n, hd]
  Tensor q = reshape(slice(qkv, 0, 0, 1), {B, h, n, hd});
  Tensor k = reshape(slice(qkv, 0, 1, 1), {B, h, n, hd});
  Tensor v = reshape(slice(qkv, 0, 2, 1), {B, h, n, hd});
  if (rope) {
    q = apply_rope(q, *rope);
    k = apply_rope(k, *rope);
  }
  Tensor scores = mul_scalar(matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor attn = softmax(scores, -1);
  if (weights_out) *weights_out = attn.detached();
  Tensor o = matmul(attn, v);                                                 // [B, h, n, hd]
  o = reshape(permute(o, {0, 2, 1, 3}), {B, n, d});
  return linear(bind, o, p.out);
}

Tensor feed_forward(const Binder& bind, const Tensor& x, const AttentionBlock& p) {
  if (p.ff == FeedForward::swiglu)
    return linear(bind, mul(silu(linear(bind, x, p.ff_gate)), linear(bind, x, p.ff_in)), p.ff_out);
  return linear(bind, gelu(linear(bind, x, p.ff_in)), p.ff_out);
}

Tensor attention_block(const Binder& bind, const Tensor& x, const AttentionBlock& p,
                       const RopeTable* rope) {
  Tensor h = add(x, multi_head_attention(bind, layer_norm(bind, x, p.norm1), p, rope));
  return add(h, feed_forward(bind, layer_norm(bind, h, p.norm2), p));
}

ResidualMlpBlock ResidualMlpBlock::init(std::size_t d, Rng& rng, DType dtype) {
  return {LayerNorm::init(d, dtype), Linear::init(d, 4 * d, rng, dtype),
          Linear::init(4 * d, d, rng, dtype)};
}

void ResidualMlpBlock::collect(ParamList& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

Tensor residual_mlp_block(const Binder& bind, const Tensor& x, const ResidualMlpBlock& p) {
  return add(x, linear(bind, gelu(linear(bind, layer_norm(bind, x, p.norm), p.fc1)), p.fc2));
}

// ---------------------------------------------------------------------------
// Position encoding and image-shaped ops

Tensor sinusoidal_encode(const Tensor& coords, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ShapeError("sinusoidal_encode: dim must be even and positive");
  if (coords.rank() != 2 || coords.dim(1) != 2)
    throw ShapeError("sinusoidal_encode: coords must be [m, 2], got " + to_string(coords.shape()));
  const std::size_t m = coords.dim(0), pairs = dim / 2, first = (pairs + 1) / 2;
  const auto c = coords.to_vector();
  std::vector<double> out(m * dim);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < pairs; ++j) {
      const bool axis0 = j < first;
      const std::size_t k = axis0 ? j : j - first;
      const std::size_t per_axis = axis0 ? first : pairs - first;
      const double freq =
          std::numbers::pi * std::exp2(8.0 * static_cast<double>(k) / static_cast<double>(per_axis));
      const double a = freq * c[i * 2 + (axis0 ? 0 : 1)];
      out[i * dim + 2 * j] = std::sin(a);
      out[i * dim + 2 * j + 1] = std::cos(a);
    }
  return Tensor::from_doubles({m, dim}, out, coords.dtype());
}

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle: expected [B, C, h, w]");
  const std::size_t B = x.dim(0), Cr = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (r == 0 || Cr % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(Cr) + " not divisible by r^2");
  const std::size_t C = Cr / (r * r);
  Tensor t = permute(reshape(x, {B, C, r, r, h, w}), {0, 1, 4, 2, 5, 3});
  return reshape(t, {B, C, h * r, w * r});
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
  if (x.rank() != 4) throw ShapeError("pixel_unshuffle: expected [B, C, H, W]");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (r == 0 || H % r != 0 || W % r != 0) throw ShapeError("pixel_unshuffle: indivisible extent");
  Tensor t = permute(reshape(x, {B, C, H / r, r, W / r, r}), {0, 1, 3, 5, 2, 4});
  return reshape(t, {B, C * r * r, H / r, W / r});
}

Conv3x3 Conv3x3::init_fan_in(std::size_t c_in, std::size_t c_out, Rng& rng, DType dtype) {
  return {fan_in_uniform({c_out, c_in, 3, 3}, 9 * c_in, rng, dtype),
          fan_in_uniform({c_out}, 9 * c_in, rng, dtype)};
}

void Conv3x3::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".bias", bias});
}

Tensor conv2d_3x3_nhwc(const Binder& bind, const Tensor& x, const Conv3x3& conv) {
  const Shape& ks = conv.kernel.shape();
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3)
    throw ShapeError("conv2d_3x3: kernel must be [C_out, C_in, 3, 3], got " + to_string(ks));
  if (x.rank() != 4 || x.dim(3) != ks[1])
    throw ShapeError("conv2d_3x3: input " + to_string(x.shape()) + " does not match kernel " +
                     to_string(ks));
  const std::size_t B = x.dim(0), h = x.dim(1), w = x.dim(2), cin = ks[1], cout = ks[0];
  Tensor zrow = Tensor::zeros({B, 1, w, cin}, x.dtype());
  Tensor padded = concat({zrow, x, zrow}, 1);
  Tensor zcol = Tensor::zeros({B, h + 2, 1, cin}, x.dtype());
  padded = concat({zcol, padded, zcol}, 2);  // [B, h+2, w+2, cin]
  std::vector<Tensor> taps;
  taps.reserve(9);
  for (std::size_t dy = 0; dy < 3; ++dy) {
    Tensor rows = slice(padded, 1, dy, h);
    for (std::size_t dx = 0; dx < 3; ++dx) taps.push_back(slice(rows, 2, dx, w));
  }
  Tensor cols = concat(taps, -1);  // [B, h, w, 9*cin], tap-major
  Tensor k = reshape(permute(bind(conv.kernel), {2, 3, 1, 0}), {9 * cin, cout});
  return add(matmul(cols, k), bind(conv.bias));
}

Tensor conv2d_3x3(const Binder& bind, const Tensor& x, const Conv3x3& conv) {
  Tensor y = conv2d_3x3_nhwc(bind, permute(x, {0, 2, 3, 1}), conv);
  return permute(y, {0, 3, 1, 2});
}

}  // namespace huvr::nn
