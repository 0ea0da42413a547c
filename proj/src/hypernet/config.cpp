#include "huvr/hypernet/config.hpp"

#include "huvr/error.hpp"

namespace huvr::hypernet {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::transinr_weight_tokens: return "transinr_weight_tokens";
    case Variant::second_layer_only: return "second_layer_only";
    case Variant::patchwise_copy: return "patchwise_copy";
    case Variant::patchwise_global: return "patchwise_global";
    case Variant::plus_compression: return "plus_compression";
    case Variant::plus_decoder: return "plus_decoder";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : kLadder)
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + name + "'");
}

HuvrConfig HuvrConfig::desk() {
  HuvrConfig c;
  c.inr.pos_dim = 32;
  c.inr.mlp_dim = 64;
  c.inr.coord_stride = 4;
  c.inr.upscale_factor = 4;
  c.inr.patch_size = c.patch_size;
  return c;
}

std::vector<std::size_t> HuvrConfig::modulated_layers() const {
  if (variant == Variant::transinr_weight_tokens) {
    std::vector<std::size_t> all;
    for (std::size_t i = 1; i <= inr.n_mlp_layers; ++i) all.push_back(i);
    return all;
  }
  return {inr.modulated_layer};
}

void HuvrConfig::validate() const {
  inr.validate();
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size must be divisible by patch_size");
  if (inr.patch_size != patch_size) throw ConfigError("inr.patch_size must equal patch_size");
  if (d_vit == 0 || enc_heads == 0 || d_vit % enc_heads != 0)
    throw ConfigError("d_vit must be divisible by enc_heads");
  if (rope && (d_vit / enc_heads) % 2 != 0) throw ConfigError("rope needs an even head dim");
  if (d_dec == 0 || d_dec % 2 != 0) throw ConfigError("d_dec must be even (sinusoidal embedding)");
  if (decoder_attention && (dec_heads == 0 || d_dec % dec_heads != 0))
    throw ConfigError("d_dec must be divisible by dec_heads");
  if (has_compression(variant) && d_t == 0) throw ConfigError("d_t must be positive");
  if (uses_weight_tokens(variant)) {
    if (weight_tokens == 0) throw ConfigError("weight_tokens must be positive");
    for (std::size_t l : modulated_layers())
      if (inr.layer_out(l) % weight_tokens != 0)
        throw ConfigError("weight_tokens must divide d_out of every modulated layer");
  }
  for (double a : distill.alpha)
    if (a < 0) throw ConfigError("distillation weights must be non-negative");
  if (distill.teacher_dim == 0) throw ConfigError("teacher_dim must be positive");
}

}  // namespace huvr::hypernet
