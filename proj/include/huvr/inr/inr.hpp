#pragma once

#include <cstddef>
#include <vector>

#include "huvr/nn/layers.hpp"

namespace huvr::inr {

using nn::Binder;
using nn::DType;
using nn::Tensor;

struct InrConfig {
  std::size_t pos_dim = 128;
  std::size_t n_mlp_layers = 3;
  std::size_t mlp_dim = 256;
  std::size_t coord_stride = 4;
  std::size_t upscale_factor = 4;
  std::size_t patch_size = 16;
  std::size_t modulated_layer = 2;  // 1-based

  /// Throws ConfigError when the invariants between the fields do not hold.
  void validate() const;
  std::size_t layer_in(std::size_t layer) const { return layer == 1 ? pos_dim : mlp_dim; }
  std::size_t layer_out(std::size_t) const { return mlp_dim; }
};

/// Shared base weights: ReLU MLP layers then a 3x3 conv head to 3*stride^2 channels.
struct BaseInr {
  InrConfig cfg;
  std::vector<nn::Linear> mlp;
  nn::Conv3x3 head;

  static BaseInr init(const InrConfig& cfg, nn::Rng& rng, DType dtype);
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

/// theta' = {W_i (.) M_i}: per-instance modulation matrices for some layers.
/// mods[i] is either undefined (layer i+1 aliased from the base) or [P, d_in, d_out].
struct ModulatedInr {
  const BaseInr* base = nullptr;
  std::vector<Tensor> mods;

  std::size_t instances() const;
};

/// Modulates one layer (1-based) with M of shape [P, d_in, d_out] or [d_in, d_out].
ModulatedInr modulate(const BaseInr& base, std::size_t layer, const Tensor& m);
ModulatedInr unmodulated(const BaseInr& base);

/// Pixel-centre coordinates of a rows x cols grid, [rows*cols, 2] in (0,1), row-major.
Tensor coord_grid(std::size_t rows, std::size_t cols, DType dtype);

/// Decodes every instance on a rows x cols coordinate grid. Returns
/// [P, 3, rows*stride, cols*stride] in (0,1); P = 1 for an unmodulated INR.
Tensor decode(const Binder& bind, const ModulatedInr& theta, std::size_t rows, std::size_t cols);
/// Same with a precomputed positional encoding of the grid ([rows*cols, pos_dim]).
Tensor decode_encoded(const Binder& bind, const ModulatedInr& theta, const Tensor& encoding,
                      std::size_t rows, std::size_t cols);
/// Decode of one patch-sized grid per instance.
Tensor decode_patch(const Binder& bind, const ModulatedInr& theta);

/// Pre-activation of MLP layer `layer` (1-based), [P, rows*cols, d_out].
Tensor preactivation(const Binder& bind, const ModulatedInr& theta, std::size_t layer,
                     std::size_t rows, std::size_t cols);

/// patches [B*rows*cols, 3, p, p] tiled row-major -> images [B, 3, rows*p, cols*p].
Tensor assemble_images(const Tensor& patches, std::size_t rows, std::size_t cols);
/// Single image: [rows*cols, 3, p, p] -> [3, rows*p, cols*p].
Tensor assemble_image(const Tensor& patches, std::size_t rows, std::size_t cols);

}  // namespace huvr::inr
