#include "huvr/losses/losses.hpp"

#include <cmath>
#include <limits>

#include "huvr/error.hpp"

namespace huvr::losses {

using namespace huvr::ad;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
}

// [out, n] with 1/window on each row's band: row i averages inputs i..i+window-1.
Tensor band(std::size_t n, std::size_t window, DType dt) {
  const std::size_t out = n - window + 1;
  std::vector<double> v(out * n, 0.0);
  for (std::size_t i = 0; i < out; ++i)
    for (std::size_t j = i; j < i + window; ++j) v[i * n + j] = 1.0 / static_cast<double>(window);
  return Tensor::from_doubles({out, n}, v, dt);
}

// Window means of x [N, H, W] -> [N, W', H'] (spatially transposed, which is fine
// since only the mean over positions is used).
Tensor window_mean(const Tensor& x, const Tensor& bw_t, const Tensor& bh_t) {
  return matmul(transpose(matmul(x, bw_t)), bh_t);
}

}  // namespace

Tensor pixel_mse(const Tensor& recon, const Tensor& target) {
  check_same_shape(recon, target, "pixel_mse");
  return mean(square(sub(recon, target)));
}

Tensor ssim(const Tensor& a, const Tensor& b, std::size_t window) {
  check_same_shape(a, b, "ssim");
  if (a.rank() != 3 && a.rank() != 4) throw ShapeError("ssim: expected [3,H,W] or [B,3,H,W]");
  const std::size_t H = a.dim(-2), W = a.dim(-1);
  if (window == 0 || H < window || W < window)
    throw ShapeError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " smaller than window " + std::to_string(window));
  const std::size_t N = a.numel() / (H * W);
  Tensor x = reshape(a, {N, H, W}), y = reshape(b, {N, H, W});
  const Tensor bw_t = transpose(band(W, window, a.dtype()));
  const Tensor bh_t = transpose(band(H, window, a.dtype()));
  Tensor mx = window_mean(x, bw_t, bh_t), my = window_mean(y, bw_t, bh_t);
  Tensor sxx = sub(window_mean(square(x), bw_t, bh_t), square(mx));
  Tensor syy = sub(window_mean(square(y), bw_t, bh_t), square(my));
  Tensor sxy = sub(window_mean(mul(x, y), bw_t, bh_t), mul(mx, my));
  Tensor num = mul(add_scalar(mul_scalar(mul(mx, my), 2.0), kSsimC1), add_scalar(mul_scalar(sxy, 2.0), kSsimC2));
  Tensor den = mul(add_scalar(add(square(mx), square(my)), kSsimC1), add_scalar(add(sxx, syy), kSsimC2));
  return mean(div(num, den));
}

DistillationHeads DistillationHeads::init(const hypernet::HuvrConfig& cfg, nn::Rng& rng) {
  DistillationHeads h;
  const std::size_t T = cfg.distill.teacher_dim;
  h.heads[g_enc] = nn::NormLinear::init(cfg.d_vit, T, rng, cfg.dtype);
  h.heads[p_enc] = nn::NormLinear::init(cfg.d_vit, T, rng, cfg.dtype);
  h.heads[g_dec] = nn::NormLinear::init(cfg.d_dec, T, rng, cfg.dtype);
  h.heads[p_dec] = nn::NormLinear::init(cfg.d_dec, T, rng, cfg.dtype);
  return h;
}

void DistillationHeads::collect(nn::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < 4; ++i) heads[i].collect(out, prefix + "." + kTermNames[i]);
}

std::array<Tensor, 4> distillation_terms(const Binder& bind, const hypernet::TokenSet& tokens,
                                         const DistillationHeads& heads, const TeacherBatch& teacher,
                                         const hypernet::DistillationConfig& cfg) {
  const std::array<const Tensor*, 4> feats = {&tokens.global_enc, &tokens.patch_enc,
                                              &tokens.global_dec, &tokens.patch_dec};
  std::array<Tensor, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    if (cfg.alpha[i] == 0.0) continue;
    if (!feats[i]->defined())
      throw ConfigError(std::string("distillation: ") + kTermNames[i] +
                        " is enabled but the model has no such token stage");
    const bool patch = i == p_enc || i == p_dec;
    const Tensor& target = patch ? teacher.patches : teacher.global;
    if (patch && (target.rank() != 3 || target.dim(1) != feats[i]->dim(1)))
      throw ShapeError("distillation: teacher patch count " +
                       (target.rank() == 3 ? std::to_string(target.dim(1)) : to_string(target.shape())) +
                       " does not match model patch count " + std::to_string(feats[i]->dim(1)));
    Tensor proj = nn::norm_linear(bind, *feats[i], heads.heads[i]);
    check_same_shape(proj, target, "distillation");
    out[i] = mean(square(sub(proj, target)));
  }
  return out;
}

Tensor distillation_loss(const Binder& bind, const hypernet::TokenSet& tokens,
                         const DistillationHeads& heads, const TeacherBatch& teacher,
                         const hypernet::DistillationConfig& cfg) {
  auto terms = distillation_terms(bind, tokens, heads, teacher, cfg);
  Tensor total;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!terms[i].defined()) continue;
    Tensor w = mul_scalar(terms[i], cfg.alpha[i]);
    total = total.defined() ? add(total, w) : w;
  }
  if (!total.defined()) return Tensor::scalar(0.0, tokens.patch_enc.dtype());
  return total;
}

LossResult total_loss(const Binder& bind, const Tensor& recon, const Tensor& target,
                      const hypernet::TokenSet& tokens, const DistillationHeads* heads,
                      const TeacherBatch* teacher, const LossConfig& cfg,
                      const hypernet::DistillationConfig& dcfg) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  LossResult r;
  r.report.mse = r.report.ssim = nan;
  r.report.distill.fill(nan);
  auto accumulate = [&](const Tensor& t) { r.loss = r.loss.defined() ? add(r.loss, t) : t; };

  if (cfg.recon || cfg.ssim) {
    if (!recon.defined()) throw ConfigError("total_loss: reconstruction loss enabled without a reconstruction");
  }
  if (recon.defined()) {
    Tensor mse = pixel_mse(recon, target);
    r.report.mse = mse.item();
    if (cfg.recon) accumulate(mse);
    if (cfg.ssim) {
      Tensor s = add_scalar(-ssim(recon, target), 1.0);
      r.report.ssim = s.item();
      accumulate(mul_scalar(s, cfg.lambda_ssim));
    }
  }
  if (cfg.distill) {
    if (!heads || !teacher) throw ConfigError("total_loss: distillation enabled without heads or teacher");
    auto terms = distillation_terms(bind, tokens, *heads, *teacher, dcfg);
    for (std::size_t i = 0; i < 4; ++i) {
      if (!terms[i].defined()) continue;
      r.report.distill[i] = terms[i].item();
      accumulate(mul_scalar(terms[i], dcfg.alpha[i]));
    }
  }
  if (!r.loss.defined()) throw ConfigError("total_loss: every loss component is disabled");
  r.report.total = r.loss.item();
  return r;
}

}  // namespace huvr::losses
