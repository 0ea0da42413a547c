#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "huvr/autodiff/ops.hpp"
#include "huvr/autodiff/tensor.hpp"

namespace huvr::nn {

using ad::Binder;
using ad::DType;
using ad::Shape;
using ad::Tensor;
using Rng = std::mt19937_64;

/// A parameter handle together with its archive name. The handle shares storage
/// with the owning module, so in-place updates through it are visible there.
struct NamedTensor {
  std::string name;
  Tensor value;
};
using ParamList = std::vector<NamedTensor>;

std::size_t count_params(const ParamList& params);

/// Normal(0, std) resampled outside +-2 std.
Tensor trunc_normal(const Shape& shape, double std, Rng& rng, DType dtype);
/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, DType dtype);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out], may be undefined

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }

  static Linear init(std::size_t in, std::size_t out, Rng& rng, DType dtype, bool bias = true);
  /// Fan-in uniform weights and biases, as torch.nn.Linear does by default.
  static Linear init_fan_in(std::size_t in, std::size_t out, Rng& rng, DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// y = x W^T + b over the last axis.
Tensor linear(const Binder& bind, const Tensor& x, const Linear& layer);

struct LayerNorm {
  Tensor gain;
  Tensor shift;
  double eps = 1e-6;

  static LayerNorm init(std::size_t d, DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor layer_norm(const Binder& bind, const Tensor& x, const LayerNorm& p);

/// LayerNorm followed by a linear map; the projection shape used throughout the model.
struct NormLinear {
  LayerNorm norm;
  Linear proj;

  static NormLinear init(std::size_t in, std::size_t out, Rng& rng, DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor norm_linear(const Binder& bind, const Tensor& x, const NormLinear& p);

/// Per-token cos/sin tables for rotary embeddings, shape [n, head_dim/2] each.
struct RopeTable {
  Tensor cos;
  Tensor sin;
};

/// Axial 2-D layout: the first half of the rotation pairs follow the patch row,
/// the second half the column. The first `n_prefix` tokens (global token) get
/// angle zero.
RopeTable make_rope_2d(std::size_t rows, std::size_t cols, std::size_t head_dim,
                       std::size_t n_prefix, DType dtype, double base = 100.0);

/// Rotates consecutive pairs of the last axis of x [..., n, head_dim].
Tensor apply_rope(const Tensor& x, const RopeTable& table);

enum class FeedForward { swiglu, mlp };

struct AttentionBlock {
  std::size_t heads = 1;
  FeedForward ff = FeedForward::mlp;
  LayerNorm norm1, norm2;
  Linear qkv, out;
  Linear ff_in, ff_gate, ff_out;  // ff_gate unused for plain MLP

  std::size_t dim() const { return out.out_dim(); }
  std::size_t head_dim() const { return dim() / heads; }

  static AttentionBlock init(std::size_t d, std::size_t heads, FeedForward ff, Rng& rng,
                             DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

std::size_t swiglu_hidden(std::size_t d);

/// Scaled dot-product attention over x [B, n, d] with qkv/out projections only.
/// `weights_out`, when given, receives the attention weights [B, heads, n, n].
Tensor multi_head_attention(const Binder& bind, const Tensor& x, const AttentionBlock& p,
                            const RopeTable* rope, Tensor* weights_out = nullptr);
Tensor feed_forward(const Binder& bind, const Tensor& x, const AttentionBlock& p);
/// Pre-norm residual block: x + attn(norm1(x)), then + ff(norm2(.)).
Tensor attention_block(const Binder& bind, const Tensor& x, const AttentionBlock& p,
                       const RopeTable* rope);

/// Attention-free decoder block: x + fc2(gelu(fc1(norm(x)))).
struct ResidualMlpBlock {
  LayerNorm norm;
  Linear fc1, fc2;

  static ResidualMlpBlock init(std::size_t d, Rng& rng, DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor residual_mlp_block(const Binder& bind, const Tensor& x, const ResidualMlpBlock& p);

/// coords [m, 2] in [0,1] -> [m, dim]. Pairs (sin, cos) are interleaved; the first
/// half of the pairs encode coordinate 0, the rest coordinate 1. Pair k within an
/// axis uses angular frequency pi * 2^(8k/F), F pairs per axis.
Tensor sinusoidal_encode(const Tensor& coords, std::size_t dim);

/// x [B, C*r*r, h, w] -> [B, C, h*r, w*r] in the standard sub-pixel layout.
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
/// Inverse rearrangement of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);

struct Conv3x3 {
  Tensor kernel;  // [C_out, C_in, 3, 3]
  Tensor bias;    // [C_out]

  static Conv3x3 init_fan_in(std::size_t c_in, std::size_t c_out, Rng& rng, DType dtype);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Zero-padded 3x3 cross-correlation, stride 1, on channel-last x [B, h, w, C_in].
Tensor conv2d_3x3_nhwc(const Binder& bind, const Tensor& x, const Conv3x3& conv);
/// Same on channel-first x [B, C_in, h, w].
Tensor conv2d_3x3(const Binder& bind, const Tensor& x, const Conv3x3& conv);

}  // namespace huvr::nn
