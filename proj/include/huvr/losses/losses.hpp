#pragma once

#include <array>
#include <cstddef>

#include "huvr/hypernet/model.hpp"

namespace huvr::losses {

using ad::Binder;
using ad::Tensor;

/// Mean of squared differences over all elements.
Tensor pixel_mse(const Tensor& recon, const Tensor& target);

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean local SSIM over [3, H, W] or [B, 3, H, W] inputs in [0,1], uniform
/// `window` x `window` windows at every valid position, averaged over channels
/// (and images). Differentiable.
Tensor ssim(const Tensor& a, const Tensor& b, std::size_t window = 11);

enum Term : std::size_t { g_enc = 0, p_enc = 1, g_dec = 2, p_dec = 3 };
inline constexpr std::array<const char*, 4> kTermNames = {"g_enc", "p_enc", "g_dec", "p_dec"};

/// Separate LayerNorm + linear projection into teacher space per (token, block) pair.
struct DistillationHeads {
  std::array<nn::NormLinear, 4> heads;

  static DistillationHeads init(const hypernet::HuvrConfig& cfg, nn::Rng& rng);
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

/// Teacher targets for a batch: global [B, dim], patches [B, P, dim].
struct TeacherBatch {
  Tensor global;
  Tensor patches;
};

/// Unweighted mean-squared error per pair; undefined where alpha is 0. Patch terms
/// average over patches and feature dims. Compressed tokens are never read.
std::array<Tensor, 4> distillation_terms(const Binder& bind, const hypernet::TokenSet& tokens,
                                         const DistillationHeads& heads, const TeacherBatch& teacher,
                                         const hypernet::DistillationConfig& cfg);
Tensor distillation_loss(const Binder& bind, const hypernet::TokenSet& tokens,
                         const DistillationHeads& heads, const TeacherBatch& teacher,
                         const hypernet::DistillationConfig& cfg);

struct LossConfig {
  bool recon = true;
  bool ssim = false;
  double lambda_ssim = 0.1;
  bool distill = false;
};

/// Component values for logging; NaN for components that were not computed.
struct LossReport {
  double total = 0;
  double mse = 0;
  double ssim = 0;  // 1 - ssim
  std::array<double, 4> distill{};
};

struct LossResult {
  Tensor loss;
  LossReport report;
};

/// pixel_mse + lambda_ssim * (1 - ssim) + distillation, each toggleable. `recon` may be
/// undefined when reconstruction is off; `heads`/`teacher` may be null when
/// distillation is off.
LossResult total_loss(const Binder& bind, const Tensor& recon, const Tensor& target,
                      const hypernet::TokenSet& tokens, const DistillationHeads* heads,
                      const TeacherBatch* teacher, const LossConfig& cfg,
                      const hypernet::DistillationConfig& dcfg);

}  // namespace huvr::losses
