#pragma once

#include <cstdint>
#include <vector>

#include "huvr/hypernet/config.hpp"
#include "huvr/inr/inr.hpp"
#include "huvr/nn/layers.hpp"

namespace huvr::hypernet {

using ad::Binder;
using ad::Tensor;

/// Token state per pipeline stage for a batch of B images. Stages a variant does
/// not have stay undefined.
struct TokenSet {
  Tensor patch_enc;   // [B, P, d_vit]
  Tensor global_enc;  // [B, d_vit]
  Tensor weight_enc;  // [B, n_weight_tokens_total, d_vit]
  Tensor patch_tin;   // [B, P, d_t]
  Tensor global_tin;  // [B, d_t]
  Tensor patch_dec;   // [B, P, d_dec]
  Tensor global_dec;  // [B, d_dec]
};

struct HuvrModel {
  HuvrConfig cfg;
  inr::BaseInr inr;
  nn::Linear patch_embed;
  Tensor global_token;   // [d_vit]
  Tensor weight_tokens;  // [weight_tokens * layers, d_vit]
  std::vector<nn::AttentionBlock> enc_blocks;
  nn::LayerNorm enc_norm;
  nn::NormLinear down;  // d_vit -> d_t
  nn::NormLinear up;    // source_dim -> d_dec
  std::vector<nn::AttentionBlock> dec_attn;
  std::vector<nn::ResidualMlpBlock> dec_mlp;
  nn::NormLinear patch_proj;   // d_dec -> d_in
  nn::NormLinear global_proj;  // d_dec -> d_out
  std::vector<nn::NormLinear> weight_proj;  // d_vit -> d_in of each modulated layer

  // Constants derived from the config.
  nn::RopeTable rope;
  Tensor dec_pos;         // [tokens, d_dec]
  Tensor coord_encoding;  // [grid points, pos_dim]

  static HuvrModel init(const HuvrConfig& cfg, std::uint64_t seed);
  /// Every trainable tensor with its archive name, in a fixed order.
  nn::ParamList params() const;
  std::size_t encoder_prefix_tokens() const;
};

/// Images are normalized [B, 3, H, W].
TokenSet encode(const Binder& bind, const HuvrModel& m, const Tensor& images);
/// Encoder from precomputed patch embeddings [B, P, d_vit].
TokenSet encode_embeddings(const Binder& bind, const HuvrModel& m, const Tensor& embeddings);
/// Fills the TinTok stage; throws ConfigError for variants without compression.
void compress(const Binder& bind, const HuvrModel& m, TokenSet& t);
/// Fills the decoder stage (patchwise variants).
void decode_tokens(const Binder& bind, const HuvrModel& m, TokenSet& t);
/// One entry per INR layer, undefined where the layer is not modulated. Patchwise
/// variants give [B*P, d_in, d_out]; weight-token variants [B, d_in, d_out].
std::vector<Tensor> build_modulations(const Binder& bind, const HuvrModel& m, const TokenSet& t);
/// Renders [B, 3, H, W] in (0,1) from modulations.
Tensor render(const Binder& bind, const HuvrModel& m, const std::vector<Tensor>& mods);

struct ForwardOutput {
  Tensor recon;  // [B, 3, H, W]; undefined when not requested
  TokenSet tokens;
};

ForwardOutput forward(const Binder& bind, const HuvrModel& m, const Tensor& images,
                      bool reconstruct = true);

}  // namespace huvr::hypernet
