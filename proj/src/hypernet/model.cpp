#include "huvr/hypernet/model.hpp"

#include "huvr/data/transforms.hpp"
#include "huvr/error.hpp"

namespace huvr::hypernet {

using namespace huvr::ad;

std::size_t HuvrModel::encoder_prefix_tokens() const {
  if (uses_weight_tokens(cfg.variant)) return weight_tokens.dim(0);
  return has_global_token(cfg.variant) ? 1 : 0;
}

HuvrModel HuvrModel::init(const HuvrConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  HuvrModel m;
  m.cfg = cfg;
  const DType dt = cfg.dtype;
  nn::Rng rng(seed);
  const std::size_t p = cfg.patch_size, g = cfg.grid();

  m.inr = inr::BaseInr::init(cfg.inr, rng, dt);
  m.patch_embed = nn::Linear::init(3 * p * p, cfg.d_vit, rng, dt);
  if (has_global_token(cfg.variant)) m.global_token = nn::trunc_normal({cfg.d_vit}, 0.02, rng, dt);
  if (uses_weight_tokens(cfg.variant)) {
    const auto layers = cfg.modulated_layers();
    m.weight_tokens = nn::trunc_normal({cfg.weight_tokens * layers.size(), cfg.d_vit}, 0.02, rng, dt);
    for (std::size_t l : layers)
      m.weight_proj.push_back(nn::NormLinear::init(cfg.d_vit, cfg.inr.layer_in(l), rng, dt));
  }
  for (std::size_t i = 0; i < cfg.n_enc_blocks; ++i)
    m.enc_blocks.push_back(nn::AttentionBlock::init(cfg.d_vit, cfg.enc_heads, nn::FeedForward::swiglu, rng, dt));
  m.enc_norm = nn::LayerNorm::init(cfg.d_vit, dt);

  if (is_patchwise(cfg.variant)) {
    if (has_compression(cfg.variant)) m.down = nn::NormLinear::init(cfg.d_vit, cfg.d_t, rng, dt);
    m.up = nn::NormLinear::init(cfg.source_dim(), cfg.d_dec, rng, dt);
    if (has_decoder_blocks(cfg.variant)) {
      for (std::size_t i = 0; i < cfg.n_dec_blocks; ++i) {
        if (cfg.decoder_attention)
          m.dec_attn.push_back(nn::AttentionBlock::init(cfg.d_dec, cfg.dec_heads, nn::FeedForward::mlp, rng, dt));
        else
          m.dec_mlp.push_back(nn::ResidualMlpBlock::init(cfg.d_dec, rng, dt));
      }
    }
    m.patch_proj = nn::NormLinear::init(cfg.d_dec, cfg.d_in(), rng, dt);
    if (has_global_token(cfg.variant)) m.global_proj = nn::NormLinear::init(cfg.d_dec, cfg.d_out(), rng, dt);

    // Patch-centre sinusoidal embedding; the global token gets none.
    Tensor pos = nn::sinusoidal_encode(inr::coord_grid(g, g, dt), cfg.d_dec);
    if (has_global_token(cfg.variant)) pos = concat({Tensor::zeros({1, cfg.d_dec}, dt), pos}, 0);
    m.dec_pos = pos;
  }
  if (cfg.rope)
    m.rope = nn::make_rope_2d(g, g, cfg.d_vit / cfg.enc_heads, m.encoder_prefix_tokens(), dt);

  const std::size_t s = cfg.inr.coord_stride;
  const std::size_t rows = is_patchwise(cfg.variant) ? p / s : cfg.image_size / s;
  m.coord_encoding = nn::sinusoidal_encode(inr::coord_grid(rows, rows, dt), cfg.inr.pos_dim);
  return m;
}

nn::ParamList HuvrModel::params() const {
  nn::ParamList out;
  inr.collect(out, "inr");
  patch_embed.collect(out, "enc.patch_embed");
  if (global_token.defined()) out.push_back({"enc.global_token", global_token});
  if (weight_tokens.defined()) out.push_back({"enc.weight_tokens", weight_tokens});
  for (std::size_t i = 0; i < enc_blocks.size(); ++i) enc_blocks[i].collect(out, "enc.block" + std::to_string(i));
  enc_norm.collect(out, "enc.norm");
  if (down.proj.weight.defined()) down.collect(out, "tintok.down");
  if (up.proj.weight.defined()) up.collect(out, "dec.up");
  for (std::size_t i = 0; i < dec_attn.size(); ++i) dec_attn[i].collect(out, "dec.block" + std::to_string(i));
  for (std::size_t i = 0; i < dec_mlp.size(); ++i) dec_mlp[i].collect(out, "dec.mlp_block" + std::to_string(i));
  if (patch_proj.proj.weight.defined()) patch_proj.collect(out, "mod.patch_proj");
  if (global_proj.proj.weight.defined()) global_proj.collect(out, "mod.global_proj");
  for (std::size_t i = 0; i < weight_proj.size(); ++i) weight_proj[i].collect(out, "mod.weight_proj" + std::to_string(i));
  return out;
}

// ---------------------------------------------------------------------------

TokenSet encode_embeddings(const Binder& bind, const HuvrModel& m, const Tensor& emb) {
  const auto& cfg = m.cfg;
  if (emb.rank() != 3 || emb.dim(1) != cfg.num_patches() || emb.dim(2) != cfg.d_vit)
    throw ShapeError("encode: embeddings " + to_string(emb.shape()) + " do not match config");
  const std::size_t B = emb.dim(0), P = cfg.num_patches(), d = cfg.d_vit;
  const std::size_t n_prefix = m.encoder_prefix_tokens();
  Tensor x = emb;
  if (n_prefix > 0) {
    const Tensor& prefix = uses_weight_tokens(cfg.variant) ? m.weight_tokens : m.global_token;
    Tensor pre = broadcast(reshape(bind(prefix), {1, n_prefix, d}), {B, n_prefix, d});
    x = concat({pre, x}, 1);
  }
  const nn::RopeTable* rope = cfg.rope ? &m.rope : nullptr;
  for (const auto& blk : m.enc_blocks) x = nn::attention_block(bind, x, blk, rope);
  x = nn::layer_norm(bind, x, m.enc_norm);

  TokenSet t;
  t.patch_enc = slice(x, 1, n_prefix, P);
  if (uses_weight_tokens(cfg.variant)) t.weight_enc = slice(x, 1, 0, n_prefix);
  else if (n_prefix == 1) t.global_enc = reshape(slice(x, 1, 0, 1), {B, d});
  return t;
}

TokenSet encode(const Binder& bind, const HuvrModel& m, const Tensor& images) {
  const auto& cfg = m.cfg;
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg.image_size ||
      images.dim(3) != cfg.image_size)
    throw ShapeError("encode: expected [B, 3, " + std::to_string(cfg.image_size) + ", " +
                     std::to_string(cfg.image_size) + "], got " + to_string(images.shape()));
  const std::size_t B = images.dim(0), P = cfg.num_patches(), p = cfg.patch_size;
  Tensor patches = reshape(data::patchify(images, p), {B, P, 3 * p * p});
  return encode_embeddings(bind, m, nn::linear(bind, patches, m.patch_embed));
}

void compress(const Binder& bind, const HuvrModel& m, TokenSet& t) {
  if (!has_compression(m.cfg.variant))
    throw ConfigError(std::string("compress: variant ") + variant_name(m.cfg.variant) +
                      " has no compression stage");
  t.patch_tin = nn::norm_linear(bind, t.patch_enc, m.down);
  if (t.global_enc.defined()) t.global_tin = nn::norm_linear(bind, t.global_enc, m.down);
}

void decode_tokens(const Binder& bind, const HuvrModel& m, TokenSet& t) {
  const auto& cfg = m.cfg;
  if (!is_patchwise(cfg.variant)) throw ConfigError("decode_tokens: weight-token variants have no decoder");
  const bool tin = has_compression(cfg.variant);
  const Tensor& patches = tin ? t.patch_tin : t.patch_enc;
  const Tensor& global = tin ? t.global_tin : t.global_enc;
  const std::size_t B = patches.dim(0), P = patches.dim(1), dsrc = patches.dim(2);
  Tensor x = global.defined() ? concat({reshape(global, {B, 1, dsrc}), patches}, 1) : patches;
  x = add(nn::norm_linear(bind, x, m.up), m.dec_pos);
  for (const auto& blk : m.dec_attn) x = nn::attention_block(bind, x, blk, nullptr);
  for (const auto& blk : m.dec_mlp) x = nn::residual_mlp_block(bind, x, blk);
  const std::size_t off = global.defined() ? 1 : 0;
  t.patch_dec = slice(x, 1, off, P);
  if (global.defined()) t.global_dec = reshape(slice(x, 1, 0, 1), {B, cfg.d_dec});
}

std::vector<Tensor> build_modulations(const Binder& bind, const HuvrModel& m, const TokenSet& t) {
  const auto& cfg = m.cfg;
  std::vector<Tensor> mods(cfg.inr.n_mlp_layers);
  if (uses_weight_tokens(cfg.variant)) {
    const auto layers = cfg.modulated_layers();
    const std::size_t B = t.weight_enc.dim(0), n = cfg.weight_tokens;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::size_t d_in = cfg.inr.layer_in(layers[i]), d_out = cfg.inr.layer_out(layers[i]);
      const std::size_t k = d_out / n;
      Tensor w = nn::norm_linear(bind, slice(t.weight_enc, 1, i * n, n), m.weight_proj[i]);  // [B, n, d_in]
      w = reshape(transpose(w), {B, d_in, n, 1});
      mods[layers[i] - 1] = reshape(broadcast(w, {B, d_in, n, k}), {B, d_in, d_out});  // column j <- token j/k
    }
    return mods;
  }
  if (!t.patch_dec.defined()) throw ConfigError("build_modulations: decoder-stage tokens missing");
  const std::size_t B = t.patch_dec.dim(0), P = t.patch_dec.dim(1);
  const std::size_t d_in = cfg.d_in(), d_out = cfg.d_out();
  Tensor pp = reshape(nn::norm_linear(bind, t.patch_dec, m.patch_proj), {B * P, d_in, 1});
  Tensor M;
  if (has_global_token(cfg.variant)) {
    Tensor gg = reshape(nn::norm_linear(bind, t.global_dec, m.global_proj), {B, 1, 1, d_out});
    gg = reshape(broadcast(gg, {B, P, 1, d_out}), {B * P, 1, d_out});
    M = matmul(pp, gg);  // rank-1 outer product per patch
  } else {
    M = broadcast(pp, {B * P, d_in, d_out});
  }
  mods[cfg.inr.modulated_layer - 1] = M;
  return mods;
}

Tensor render(const Binder& bind, const HuvrModel& m, const std::vector<Tensor>& mods) {
  const auto& cfg = m.cfg;
  inr::ModulatedInr theta{&m.inr, mods};
  const std::size_t s = cfg.inr.coord_stride;
  if (!is_patchwise(cfg.variant)) {
    const std::size_t r = cfg.image_size / s;
    return inr::decode_encoded(bind, theta, m.coord_encoding, r, r);
  }
  const std::size_t r = cfg.patch_size / s;
  Tensor patches = inr::decode_encoded(bind, theta, m.coord_encoding, r, r);
  return inr::assemble_images(patches, cfg.grid(), cfg.grid());
}

ForwardOutput forward(const Binder& bind, const HuvrModel& m, const Tensor& images, bool reconstruct) {
  ForwardOutput out;
  out.tokens = encode(bind, m, images);
  if (has_compression(m.cfg.variant)) compress(bind, m, out.tokens);
  if (is_patchwise(m.cfg.variant)) decode_tokens(bind, m, out.tokens);
  if (reconstruct) out.recon = render(bind, m, build_modulations(bind, m, out.tokens));
  return out;
}

}  // namespace huvr::hypernet
