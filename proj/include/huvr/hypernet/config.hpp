#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "huvr/autodiff/tensor.hpp"
#include "huvr/inr/inr.hpp"

namespace huvr::hypernet {

/// Ablation ladder, in order; each stage keeps the changes of the previous ones.
enum class Variant {
  transinr_weight_tokens = 0,
  second_layer_only,
  patchwise_copy,
  patchwise_global,
  plus_compression,
  plus_decoder,
};

inline constexpr std::array<Variant, 6> kLadder = {
    Variant::transinr_weight_tokens, Variant::second_layer_only, Variant::patchwise_copy,
    Variant::patchwise_global,       Variant::plus_compression,  Variant::plus_decoder};

const char* variant_name(Variant v);
/// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name);

inline bool uses_weight_tokens(Variant v) { return v <= Variant::second_layer_only; }
inline bool is_patchwise(Variant v) { return v >= Variant::patchwise_copy; }
inline bool has_global_token(Variant v) { return v >= Variant::patchwise_global; }
inline bool has_compression(Variant v) { return v >= Variant::plus_compression; }
inline bool has_decoder_blocks(Variant v) { return v >= Variant::plus_decoder; }

struct DistillationConfig {
  bool enabled = false;
  /// alpha for (global, enc), (patch, enc), (global, dec), (patch, dec).
  std::array<double, 4> alpha = {2.0, 2.0, 0.5, 0.5};
  std::size_t teacher_dim = 32;
};

struct HuvrConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t d_vit = 64;
  std::size_t n_enc_blocks = 4;
  std::size_t enc_heads = 4;
  std::size_t d_t = 16;
  std::size_t d_dec = 64;
  std::size_t n_dec_blocks = 2;
  std::size_t dec_heads = 4;
  bool decoder_attention = true;
  bool rope = true;
  std::size_t weight_tokens = 8;  // per modulated layer, weight-token variants only
  Variant variant = Variant::plus_decoder;
  inr::InrConfig inr;
  DistillationConfig distill;
  ad::DType dtype = ad::DType::f32;

  /// Desk-scale defaults: 32x32 images, patch 8, INR pos_dim 32, mlp_dim 64, stride 4.
  static HuvrConfig desk();

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  /// Token width entering the decoder upsample (d_t with compression, else d_vit).
  std::size_t source_dim() const { return has_compression(variant) ? d_t : d_vit; }
  std::size_t d_in() const { return inr.layer_in(inr.modulated_layer); }
  std::size_t d_out() const { return inr.layer_out(inr.modulated_layer); }
  /// INR layers (1-based) carrying modulations.
  std::vector<std::size_t> modulated_layers() const;

  void validate() const;
};

}  // namespace huvr::hypernet
