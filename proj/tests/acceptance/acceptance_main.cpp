// Acceptance gate: one PASS/FAIL line per criterion A1..A9. Exit status is nonzero
// when any criterion fails. `acceptance A3 A8` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "huvr/autodiff/grad_check.hpp"
#include "huvr/autodiff/ops.hpp"
#include "huvr/data/dataset.hpp"
#include "huvr/data/image.hpp"
#include "huvr/data/teacher.hpp"
#include "huvr/data/transforms.hpp"
#include "huvr/error.hpp"
#include "huvr/eval/ablation.hpp"
#include "huvr/eval/metrics.hpp"
#include "huvr/eval/probe.hpp"
#include "huvr/hypernet/model.hpp"
#include "huvr/inr/inr.hpp"
#include "huvr/losses/losses.hpp"
#include "huvr/nn/layers.hpp"
#include "huvr/trainer/checkpoint.hpp"
#include "huvr/trainer/optim.hpp"
#include "huvr/trainer/trainer.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace huvr;
using ad::Binder;
using ad::DType;
using ad::Shape;
using ad::Tensor;
using hypernet::Variant;
using huvr::testing::away_from_zero;
using huvr::testing::uniform;
using huvr::testing::weighted_sum;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "huvr_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  if (a.dtype() == DType::f32) {
    auto x = a.data<float>(), y = b.data<float>();
    return std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
  }
  auto x = a.data<double>(), y = b.data<double>();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------- A1

hypernet::HuvrConfig tiny_model(Variant v) {
  hypernet::HuvrConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.d_vit = 16;
  c.n_enc_blocks = 2;
  c.enc_heads = 2;
  c.d_t = 4;
  c.d_dec = 16;
  c.n_dec_blocks = 2;
  c.dec_heads = 2;
  c.weight_tokens = 4;
  c.variant = v;
  c.inr.pos_dim = 8;
  c.inr.mlp_dim = 8;
  c.inr.coord_stride = 2;
  c.inr.upscale_factor = 2;
  c.inr.patch_size = 4;
  c.distill.teacher_dim = 6;
  c.dtype = DType::f64;
  return c;
}

// Redraws every parameter at O(1) scale so gradients sit well above the
// finite-difference noise floor.
std::vector<Tensor> redraw(const nn::ParamList& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Tensor> out;
  for (auto p : params) {
    const double centre = p.name.find("gain") != std::string::npos ? 1.0 : 0.0;
    for (auto& w : p.value.mutable_data<double>()) w = centre + u(rng);
    out.push_back(p.value);
  }
  return out;
}

Verdict a1_gradients() {
  const auto t0 = Clock::now();
  using F = std::function<Tensor(const Tensor&)>;
  std::mt19937_64 rng(1);
  double worst_prim = 0, worst_comp = 0;
  std::string worst_prim_name, worst_comp_name;
  auto prim = [&](const std::string& name, const F& f, const Tensor& p) {
    const double e = ad::grad_check([&](const Tensor& x) { return weighted_sum(f(x)); }, p);
    if (e > worst_prim) worst_prim = e, worst_prim_name = name;
  };
  auto comp = [&](const std::string& name, double e) {
    if (e > worst_comp) worst_comp = e, worst_comp_name = name;
  };

  // Primitives over a few random shapes.
  for (int trial = 0; trial < 4; ++trial) {
    std::uniform_int_distribution<std::size_t> e(1, 4);
    const Shape s = {e(rng) + 1, e(rng), e(rng) + 1};
    const Shape suffix(s.begin() + 1, s.end());
    const Tensor other = uniform(s, rng, 0.5, 1.5), other_suffix = uniform(suffix, rng, 0.5, 1.5);
    const std::vector<std::pair<const char*, F>> any = {
        {"exp", [](const Tensor& x) { return ad::exp(x); }},
        {"sin", [](const Tensor& x) { return ad::sin(x); }},
        {"cos", [](const Tensor& x) { return ad::cos(x); }},
        {"tanh", [](const Tensor& x) { return ad::tanh(x); }},
        {"sigmoid", [](const Tensor& x) { return ad::sigmoid(x); }},
        {"relu", [](const Tensor& x) { return ad::relu(x); }},
        {"square", [](const Tensor& x) { return ad::square(x); }},
        {"silu", [](const Tensor& x) { return ad::silu(x); }},
        {"gelu", [](const Tensor& x) { return ad::gelu(x); }},
        {"add_scalar", [](const Tensor& x) { return ad::add_scalar(x, 0.7); }},
        {"mul_scalar", [](const Tensor& x) { return ad::mul_scalar(x, -1.3); }},
        {"add", [&](const Tensor& x) { return ad::add(x, other); }},
        {"add_broadcast", [&](const Tensor& x) { return ad::add(other_suffix, x); }},
        {"sub", [&](const Tensor& x) { return ad::sub(other, x); }},
        {"mul", [&](const Tensor& x) { return ad::mul(x, other); }},
        {"div_numerator", [&](const Tensor& x) { return ad::div(x, other); }},
        {"softmax", [](const Tensor& x) { return ad::softmax(x, 0); }},
        {"softmax_last", [](const Tensor& x) { return ad::softmax(x, -1); }},
        {"max", [](const Tensor& x) { return ad::max(x, 1, true); }},
        {"sum", [](const Tensor& x) { return ad::sum(x); }},
        {"sum_axis", [](const Tensor& x) { return ad::sum(x, -1); }},
        {"mean", [](const Tensor& x) { return ad::mul(ad::mean(x), ad::mean(x)); }},
        {"mean_axis", [](const Tensor& x) { return ad::mean(x, 0, true); }},
        {"transpose", [](const Tensor& x) { return ad::transpose(x); }},
        {"permute", [](const Tensor& x) { return ad::permute(x, {2, 0, 1}); }},
        {"reshape", [](const Tensor& x) { return ad::reshape(x, {x.numel()}); }},
        {"concat", [&](const Tensor& x) { return ad::concat({x, ad::mul(x, x), other}, 0); }},
        {"slice", [](const Tensor& x) { return ad::slice(x, -1, x.dim(-1) - 1, 1); }},
        {"broadcast", [&](const Tensor& x) { return ad::broadcast(ad::slice(x, 0, 0, 1), s); }},
    };
    for (const auto& [name, f] : any) prim(name, f, away_from_zero(s, rng));
    const std::vector<std::pair<const char*, F>> positive = {
        {"log", [](const Tensor& x) { return ad::log(x); }},
        {"sqrt", [](const Tensor& x) { return ad::sqrt(x); }},
        {"power", [](const Tensor& x) { return ad::power(x, 2.5); }},
        {"div_denominator", [&](const Tensor& x) { return ad::div(other, x); }},
    };
    for (const auto& [name, f] : positive) prim(name, f, uniform(s, rng, 0.5, 2.0));
    const std::size_t m = e(rng), k = e(rng), n = e(rng), b = e(rng);
    const Tensor B = uniform({k, n}, rng), Bt = uniform({n, k}, rng), A = uniform({b, m, k}, rng);
    prim("matmul_a", [&](const Tensor& x) { return ad::matmul(x, B); }, uniform({b, m, k}, rng));
    prim("matmul_b", [&](const Tensor& x) { return ad::matmul(A, x); }, B);
    prim("matmul_bt", [&](const Tensor& x) { return ad::matmul(A, x, true); }, Bt);
    prim("matmul_batched", [&](const Tensor& x) { return ad::matmul(A, x); }, uniform({b, k, n}, rng));
  }

  // Layers and losses, checked through their parameters or inputs.
  nn::Rng lr(2);
  {
    auto lin = nn::Linear::init(5, 3, lr, DType::f64);
    auto ln = nn::LayerNorm::init(5, DType::f64);
    auto nl = nn::NormLinear::init(5, 4, lr, DType::f64);
    nn::ParamList pl;
    lin.collect(pl, "lin");
    ln.collect(pl, "ln");
    nl.collect(pl, "nl");
    auto ps = redraw(pl, 3);
    const Tensor x = uniform({2, 3, 5}, rng);
    comp("linear+layer_norm+norm_linear", ad::grad_check_params(
                                               [&](const Binder& bind) {
                                                 auto y = nn::linear(bind, nn::layer_norm(bind, x, ln), lin);
                                                 return ad::add(weighted_sum(y), weighted_sum(nn::norm_linear(bind, x, nl)));
                                               },
                                               ps, 1e-5, 0, 1e-6));
  }
  for (auto ff : {nn::FeedForward::swiglu, nn::FeedForward::mlp}) {
    auto blk = nn::AttentionBlock::init(8, 2, ff, lr, DType::f64);
    nn::ParamList pl;
    blk.collect(pl, "blk");
    auto ps = redraw(pl, 4);
    const auto rope = nn::make_rope_2d(2, 2, 4, 1, DType::f64);
    const Tensor x = uniform({2, 5, 8}, rng);
    comp("attention_block", ad::grad_check_params(
                                [&](const Binder& bind) { return weighted_sum(nn::attention_block(bind, x, blk, &rope)); },
                                ps, 1e-5, 0, 1e-6));
    comp("attention_block_input", ad::grad_check(
                                      [&](const Tensor& xx) { return weighted_sum(nn::attention_block({}, xx, blk, &rope)); },
                                      x, 1e-5, 0, 1e-6));
  }
  {
    auto blk = nn::ResidualMlpBlock::init(6, lr, DType::f64);
    nn::ParamList pl;
    blk.collect(pl, "mlp");
    auto ps = redraw(pl, 5);
    const Tensor x = uniform({2, 3, 6}, rng);
    comp("residual_mlp_block", ad::grad_check_params(
                                   [&](const Binder& bind) { return weighted_sum(nn::residual_mlp_block(bind, x, blk)); }, ps,
                                   1e-5, 0, 1e-6));
  }
  {
    auto conv = nn::Conv3x3::init_fan_in(3, 4, lr, DType::f64);
    nn::ParamList pl;
    conv.collect(pl, "conv");
    auto ps = redraw(pl, 6);
    const Tensor x = uniform({2, 3, 4, 5}, rng);
    comp("conv2d_3x3", ad::grad_check_params(
                           [&](const Binder& bind) { return weighted_sum(nn::conv2d_3x3(bind, x, conv)); }, ps, 1e-5, 0,
                           1e-6));
    comp("conv2d_3x3_input",
         ad::grad_check([&](const Tensor& xx) { return weighted_sum(nn::conv2d_3x3({}, xx, conv)); }, x));
  }
  comp("pixel_shuffle", ad::grad_check([](const Tensor& x) { return weighted_sum(nn::pixel_shuffle(x, 2)); },
                                       uniform({2, 8, 3, 2}, rng)));
  comp("pixel_unshuffle", ad::grad_check([](const Tensor& x) { return weighted_sum(nn::pixel_unshuffle(x, 2)); },
                                         uniform({1, 2, 4, 6}, rng)));
  {
    const auto rope = nn::make_rope_2d(2, 3, 6, 1, DType::f64);
    comp("apply_rope", ad::grad_check([&](const Tensor& x) { return weighted_sum(nn::apply_rope(x, rope)); },
                                      uniform({2, 7, 6}, rng)));
  }
  {
    inr::InrConfig ic;
    ic.pos_dim = 8;
    ic.mlp_dim = 6;
    ic.coord_stride = 2;
    ic.upscale_factor = 2;
    ic.patch_size = 4;
    auto base = inr::BaseInr::init(ic, lr, DType::f64);
    comp("modulated_inr_decode",
         ad::grad_check([&](const Tensor& m) { return weighted_sum(inr::decode_patch({}, inr::modulate(base, 2, m))); },
                        uniform({3, 6, 6}, rng, 0.5, 1.5)));
  }
  {
    const Tensor target = uniform({2, 3, 11, 12}, rng, 0.0, 1.0);
    comp("pixel_mse", ad::grad_check([&](const Tensor& x) { return losses::pixel_mse(x, target); },
                                     uniform({2, 3, 11, 12}, rng, 0.0, 1.0)));
    comp("ssim", ad::grad_check([&](const Tensor& x) { return losses::ssim(x, target); },
                                uniform({2, 3, 11, 12}, rng, 0.0, 1.0), 1e-5, 60));
  }

  // Full tiny model (2 blocks, d=16) for every ladder stage, plus distillation heads.
  const Tensor imgs = uniform({1, 3, 16, 16}, rng, -1.5, 1.5);
  for (Variant v : hypernet::kLadder) {
    auto cfg = tiny_model(v);
    auto m = hypernet::HuvrModel::init(cfg, 22);
    auto ps = redraw(m.params(), 23);
    comp(std::string("model/") + hypernet::variant_name(v),
         ad::grad_check_params([&](const Binder& bind) { return weighted_sum(hypernet::forward(bind, m, imgs).recon); },
                               ps, 1e-5, 3, 1e-6));
  }
  {
    auto cfg = tiny_model(Variant::plus_decoder);
    cfg.distill.enabled = true;
    auto learner = trainer::Learner::init(cfg, 24);
    auto ps = redraw(learner.params(), 25);
    losses::TeacherBatch tb{uniform({1, 6}, rng), uniform({1, 16, 6}, rng)};
    comp("distillation_loss", ad::grad_check_params(
                                  [&](const Binder& bind) {
                                    auto out = hypernet::forward(bind, learner.model, imgs, false);
                                    return losses::distillation_loss(bind, out.tokens, learner.heads, tb, cfg.distill);
                                  },
                                  ps, 1e-5, 3, 1e-6));
  }

  const double secs = since(t0);
  Verdict v;
  v.pass = worst_prim < 1e-5 && worst_comp < 1e-3 && secs < 120;
  v.detail = fmt("primitives max rel err %.2e (%s) < 1e-5; composites %.2e (%s) < 1e-3; %.1f s < 120 s", worst_prim,
                 worst_prim_name.c_str(), worst_comp, worst_comp_name.c_str(), secs);
  return v;
}

// ---------------------------------------------------------------- A2

Verdict a2_identity_modulation() {
  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::size_t ok = 0, total = 100;
  std::string first_bad;
  for (std::size_t i = 0; i < total; ++i) {
    inr::InrConfig c;
    c.pos_dim = 2 * pick(1, 16);
    c.n_mlp_layers = pick(1, 4);
    c.mlp_dim = pick(1, 24);
    c.coord_stride = std::size_t{1} << pick(0, 2);
    c.upscale_factor = c.coord_stride;
    c.patch_size = c.coord_stride * pick(1, 3);
    c.modulated_layer = pick(1, c.n_mlp_layers);
    const DType dt = pick(0, 1) ? DType::f64 : DType::f32;
    nn::Rng r(1000 + i);
    auto base = inr::BaseInr::init(c, r, dt);
    const std::size_t P = pick(1, 5);
    const Tensor ref = inr::decode_patch({}, inr::unmodulated(base));
    const Tensor ones = Tensor::ones({P, c.layer_in(c.modulated_layer), c.layer_out(c.modulated_layer)}, dt);
    const Tensor got = inr::decode_patch({}, inr::modulate(base, c.modulated_layer, ones));
    bool same = got.dim(0) == P;
    for (std::size_t p = 0; same && p < P; ++p) same = bitwise_equal(ad::slice(got, 0, p, 1), ref);
    if (same)
      ++ok;
    else if (first_bad.empty())
      first_bad = fmt(" first mismatch: config %zu", i);
  }
  return {ok == total, fmt("%zu/%zu random INR configs bitwise equal%s", ok, total, first_bad.c_str())};
}

// ---------------------------------------------------------------- A3

Verdict a3_overfit() {
  const auto t0 = Clock::now();
  data::ShapesSpec sp;
  sp.count = 1;
  sp.resolution = 64;
  sp.seed = 3;
  auto ds = data::synth_shapes(sp);
  auto cfg = hypernet::HuvrConfig::desk();
  cfg.image_size = 64;
  cfg.variant = Variant::patchwise_global;
  auto learner = trainer::Learner::init(cfg, 0);
  trainer::TrainConfig tc;
  tc.batch_size = 1;
  tc.max_steps = 500;
  tc.lr_base = 0.256;
  tc.augment = false;
  tc.eval_every = 0;
  trainer::train(learner, ds, nullptr, nullptr, tc);
  const double p = eval::evaluate_reconstruction(learner.model, ds).psnr;
  const double secs = since(t0);
  return {p >= 35.0 && secs < 300,
          fmt("patchwise_global, 64x64, %zu steps: PSNR %.2f dB >= 35; %.1f s < 300 s", tc.max_steps, p, secs)};
}

// ---------------------------------------------------------------- A4 / A5

struct LadderData {
  data::Dataset train, val;
  hypernet::HuvrConfig base;
  trainer::TrainConfig recipe;
  std::map<std::pair<Variant, std::size_t>, eval::LadderRow> rows;  // (variant, d_t)
  double seconds = 0;
};

LadderData& ladder_data() {
  static LadderData d = [] {
    LadderData x;
    data::ShapesSpec sp;
    sp.count = 300;
    sp.seed = 11;
    data::split(data::synth_shapes(sp), 200, 1, x.train, x.val);
    x.base = hypernet::HuvrConfig::desk();
    x.base.d_t = 16;
    x.recipe.batch_size = 16;
    x.recipe.lr_base = 0.016;
    x.recipe.max_steps = 2000;
    x.recipe.augment = false;
    x.recipe.eval_every = 0;
    return x;
  }();
  return d;
}

// Trains the requested (variant, d_t) pairs not already cached, under one budget.
void ladder_rows(const std::vector<std::pair<Variant, std::size_t>>& want) {
  auto& d = ladder_data();
  std::vector<eval::LadderEntry> entries;
  for (auto [v, dt] : want) {
    if (d.rows.count({v, dt})) continue;
    eval::LadderEntry e{d.base, d.recipe, 0};
    e.model.variant = v;
    e.model.d_t = dt;
    entries.push_back(e);
  }
  if (entries.empty()) return;
  const auto t0 = Clock::now();
  auto report = eval::run_ablation_ladder(entries, d.train, d.val);
  d.seconds += since(t0);
  for (std::size_t i = 0; i < entries.size(); ++i) d.rows[{entries[i].model.variant, entries[i].model.d_t}] = report.rows[i];
}

Verdict a4_ladder_signs() {
  ladder_rows({{Variant::second_layer_only, 16},
               {Variant::patchwise_copy, 16},
               {Variant::patchwise_global, 16},
               {Variant::plus_compression, 16}});
  auto& d = ladder_data();
  const double slo = d.rows[{Variant::second_layer_only, 16}].psnr;
  const double copy = d.rows[{Variant::patchwise_copy, 16}].psnr;
  const double glob = d.rows[{Variant::patchwise_global, 16}].psnr;
  const double comp = d.rows[{Variant::plus_compression, 16}].psnr;
  const bool pass = copy >= slo + 3.0 && glob >= copy && comp <= glob && d.seconds < 1800;
  return {pass, fmt("held-out PSNR second_layer_only %.2f, patchwise_copy %.2f (+%.2f >= 3), patchwise_global %.2f "
                    "(>= copy), plus_compression d_t=16 %.2f (<= global); %zu steps each, %.0f s < 1800 s",
                    slo, copy, copy - slo, glob, comp, d.recipe.max_steps, d.seconds)};
}

Verdict a5_compression_trend() {
  ladder_rows({{Variant::plus_compression, 4}, {Variant::plus_compression, 8}, {Variant::plus_compression, 16}});
  auto& d = ladder_data();
  const double p4 = d.rows[{Variant::plus_compression, 4}].psnr;
  const double p8 = d.rows[{Variant::plus_compression, 8}].psnr;
  const double p16 = d.rows[{Variant::plus_compression, 16}].psnr;
  const bool pass = p8 >= p4 - 0.2 && p16 >= p8 - 0.2;
  return {pass, fmt("plus_compression PSNR d_t=4 %.2f, d_t=8 %.2f, d_t=16 %.2f (non-decreasing, 0.2 dB slack)", p4,
                    p8, p16)};
}

// ---------------------------------------------------------------- A6 / A7

struct ProbeData {
  data::Dataset train, val;
};

const ProbeData& probe_data() {
  static ProbeData d = [] {
    ProbeData x;
    data::ShapesSpec sp;
    sp.count = 1000;
    sp.classes = 8;
    sp.seed = 21;
    data::split(data::synth_shapes(sp), 800, 2, x.train, x.val);
    return x;
  }();
  return d;
}

hypernet::HuvrConfig distill_model(std::size_t d_t) {
  auto cfg = hypernet::HuvrConfig::desk();
  cfg.d_t = d_t;
  cfg.distill.enabled = true;
  return cfg;
}

trainer::TrainConfig distill_recipe(std::size_t steps) {
  trainer::TrainConfig tc;
  tc.batch_size = 16;
  tc.lr_base = 0.016;
  tc.max_steps = steps;
  tc.augment = false;
  tc.eval_every = 0;
  tc.loss.distill = true;
  return tc;
}

Verdict a6_tintok_probe() {
  const auto t0 = Clock::now();
  const auto& d = probe_data();
  const std::size_t d_t = 8;
  const auto cfg = distill_model(d_t);
  data::FrozenRandomTeacher teacher(7, cfg.image_size, cfg.patch_size, cfg.distill.teacher_dim);
  auto learner = trainer::Learner::init(cfg, 0);
  const auto untrained = trainer::Learner::init(cfg, 0);
  trainer::train(learner, d.train, nullptr, &teacher, distill_recipe(1500));

  using eval::FeatureSource;
  using eval::Pooling;
  const auto pool = Pooling::tokens;
  auto probe = [&](const Tensor& tx, const Tensor& vx) {
    return eval::linear_probe(tx, d.train.labels, vx, d.val.labels).accuracy;
  };
  const double tintok = probe(eval::extract_features(learner.model, d.train, FeatureSource::tintok, pool),
                              eval::extract_features(learner.model, d.val, FeatureSource::tintok, pool));
  auto pf = eval::pca_features(eval::extract_features(learner.model, d.train, FeatureSource::encoder, pool),
                               eval::extract_features(learner.model, d.val, FeatureSource::encoder, pool), d_t,
                               cfg.d_vit);
  const double pca = probe(pf.train, pf.val);
  const double random = probe(eval::extract_features(untrained.model, d.train, FeatureSource::tintok, pool),
                              eval::extract_features(untrained.model, d.val, FeatureSource::tintok, pool));
  const bool vs_pca = tintok >= pca + 0.10, vs_random = tintok >= random + 0.20;
  return {vs_pca && vs_random,
          fmt("d_t=%zu, 800/200 shapes: TinTok %.1f%% vs PCA-of-encoder %.1f%% (margin %+.1f, need +10.0: %s), vs "
              "random-init TinTok %.1f%% (margin %+.1f, need +20.0: %s); %.0f s",
              d_t, 100 * tintok, 100 * pca, 100 * (tintok - pca), vs_pca ? "ok" : "MISSED", 100 * random,
              100 * (tintok - random), vs_random ? "ok" : "MISSED", since(t0))};
}

// Weighted distillation loss averaged over the first `n` images of `ds`.
double distill_loss_on(const trainer::Learner& l, const data::Dataset& ds, const data::TeacherSource& teacher,
                       std::size_t n) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t lo = 0; lo < n; lo += 32) {
    const std::size_t hi = std::min(n, lo + 32);
    std::vector<Tensor> px, gs, ps;
    for (std::size_t i = lo; i < hi; ++i) {
      px.push_back(ds.images[i].pixels);
      auto f = teacher.features(ds.images[i]);
      gs.push_back(ad::reshape(f.global, {1, f.global.numel()}));
      ps.push_back(ad::reshape(f.patches, {1, f.patches.dim(0), f.patches.dim(1)}));
    }
    losses::TeacherBatch tb{ad::concat(gs, 0).cast(l.model.cfg.dtype), ad::concat(ps, 0).cast(l.model.cfg.dtype)};
    auto x = data::normalize(data::stack_pixels(px, l.model.cfg.dtype));
    auto out = hypernet::forward({}, l.model, x, false);
    total += losses::distillation_loss({}, out.tokens, l.heads, tb, l.model.cfg.distill).item() * double(hi - lo);
    count += hi - lo;
  }
  return total / double(count);
}

Verdict a7_no_inr() {
  const auto t0 = Clock::now();
  const auto& d = probe_data();
  const auto cfg = distill_model(16);
  data::FrozenRandomTeacher teacher(7, cfg.image_size, cfg.patch_size, cfg.distill.teacher_dim);

  double lo = 1e9, hi = -1e9;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double p = eval::evaluate_reconstruction(trainer::Learner::init(cfg, seed).model, d.val).psnr;
    lo = std::min(lo, p), hi = std::max(hi, p);
  }
  auto learner = trainer::Learner::init(cfg, 0);
  const double before = distill_loss_on(learner, d.val, teacher, 128);
  auto tc = distill_recipe(1000);
  tc.loss.recon = false;
  trainer::train(learner, d.train, nullptr, &teacher, tc);
  const double after = distill_loss_on(learner, d.val, teacher, 128);
  const double p = eval::evaluate_reconstruction(learner.model, d.val).psnr;
  const bool in_band = p >= lo - 2.0 && p <= hi + 2.0;
  const double drop = 1.0 - after / before;
  return {in_band && drop >= 0.5,
          fmt("recon loss off: PSNR %.2f dB vs untrained band [%.2f, %.2f] +-2 dB; held-out distillation loss %.4f -> "
              "%.4f (-%.0f%%, need >= 50%%); %.0f s",
              p, lo, hi, before, after, 100 * drop, since(t0))};
}

// ---------------------------------------------------------------- A8

Verdict a8_recipe() {
  bool ok = true;
  std::string detail;

  // Learning rate at the end of warmup.
  const double expected = 0.0005 * 16 / 256;
  data::ShapesSpec sp;
  sp.count = 64;
  sp.resolution = 16;
  sp.seed = 5;
  const auto ds = data::synth_shapes(sp);
  auto small = hypernet::HuvrConfig::desk();
  small.image_size = 16;
  small.patch_size = 4;
  small.inr.patch_size = 4;
  small.d_vit = 16;
  small.n_enc_blocks = 1;
  small.d_dec = 16;
  small.n_dec_blocks = 1;
  small.d_t = 4;
  trainer::TrainConfig tc;  // lr_base 0.0005
  tc.batch_size = 16;
  tc.epochs = 10;
  tc.augment = false;
  tc.eval_every = 0;
  double logged = -1;
  {
    auto learner = trainer::Learner::init(small, 1);
    trainer::Trainer tr(learner, ds, nullptr, tc);
    while (!tr.done()) {
      const std::size_t s = tr.step();
      auto log = tr.train_step();
      if (s == tr.warmup_steps()) logged = log.lr;
    }
    const double sched = trainer::lr_schedule(tr.warmup_steps(), tr.total_steps(), tr.warmup_steps(),
                                              trainer::effective_lr(tc));
    const bool lr_ok = sched == expected && logged == expected;
    ok &= lr_ok;
    detail += fmt("lr at warmup end %.17g == 0.0005*16/256 (step log %.17g): %s", sched, logged, lr_ok ? "ok" : "NO");
  }

  // Clip bound over random gradient sets.
  std::mt19937_64 rng(8);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const DType dt = trial % 2 ? DType::f32 : DType::f64;
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-4, 3)(rng));
    std::vector<Tensor> g;
    const std::size_t n = 1 + trial % 5;
    for (std::size_t i = 0; i < n; ++i)
      g.push_back(uniform({1 + (trial * 7 + i) % 13, 1 + i % 4}, rng, -scale, scale, dt));
    trainer::clip_global_norm(g, 0.01);
    worst = std::max(worst, trainer::global_norm(g));
  }
  const bool clip_ok = worst <= 0.01;
  ok &= clip_ok;
  detail += fmt("; max post-clip norm over 1000 sets %.17g <= 0.01: %s", worst, clip_ok ? "ok" : "NO");

  // Two seeded single-threaded runs.
  auto run = [&](const std::string& name) {
    auto dir = scratch("a8_" + name);
    data::Dataset tr, va;
    data::split(ds, 48, 3, tr, va);
    auto t = tc;
    t.epochs = 3;
    t.eval_every = 1;
    t.augment = true;
    t.threads = 1;
    t.seed = 42;
    auto learner = trainer::Learner::init(small, 42);
    trainer::TrainOutputs out;
    out.dir = dir;
    trainer::train(learner, tr, &va, nullptr, t, out);
    return slurp(dir / "metrics.csv");
  };
  const std::string a = run("a"), b = run("b");
  const bool csv_ok = !a.empty() && a == b;
  ok &= csv_ok;
  detail += fmt("; seeded metrics.csv byte-identical (%zu bytes): %s", a.size(), csv_ok ? "ok" : "NO");
  return {ok, detail};
}

// ---------------------------------------------------------------- A9

Verdict a9_formats() {
  bool ok = true;
  std::string detail;
  auto dir = scratch("a9");

  // Checkpoint with optimizer state.
  {
    data::ShapesSpec sp;
    sp.count = 16;
    sp.resolution = 16;
    const auto ds = data::synth_shapes(sp);
    auto cfg = hypernet::HuvrConfig::desk();
    cfg.image_size = 16;
    cfg.patch_size = 4;
    cfg.inr.patch_size = 4;
    cfg.d_vit = 16;
    cfg.n_enc_blocks = 1;
    cfg.d_dec = 16;
    cfg.d_t = 4;
    auto learner = trainer::Learner::init(cfg, 3);
    trainer::TrainConfig tc;
    tc.batch_size = 4;
    tc.max_steps = 3;
    tc.eval_every = 0;
    trainer::Trainer tr(learner, ds, nullptr, tc);
    while (!tr.done()) tr.train_step();
    const auto ck = tr.checkpoint("seed=3\n");
    trainer::write_checkpoint(dir / "a.ckpt", ck);
    const auto back = trainer::read_checkpoint(dir / "a.ckpt");
    bool same = back.config_text == ck.config_text && back.step == ck.step && back.adam_t == ck.adam_t &&
                back.tensors.size() == ck.tensors.size();
    for (std::size_t i = 0; same && i < ck.tensors.size(); ++i)
      same = back.tensors[i].name == ck.tensors[i].name && bitwise_equal(back.tensors[i].value, ck.tensors[i].value);
    trainer::write_checkpoint(dir / "b.ckpt", back);
    same = same && slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");
    ok &= same;
    detail += fmt("checkpoint (%zu tensors incl. optimizer moments) bitwise: %s", ck.tensors.size(), same ? "ok" : "NO");
  }

  // Teacher file.
  {
    data::ShapesSpec sp;
    sp.count = 20;
    const auto ds = data::synth_shapes(sp);
    data::FrozenRandomTeacher t(5, 32, 8, 32);
    const auto file = data::synthesize_teacher_file(t, ds.images);
    data::write_teacher_file(dir / "t.bin", file);
    const auto back = data::read_teacher_file(dir / "t.bin");
    bool same = back.patch_count == file.patch_count && back.dim == file.dim && back.records.size() == file.records.size();
    for (std::size_t i = 0; same && i < file.records.size(); ++i)
      same = back.records[i].id == file.records[i].id && bitwise_equal(back.records[i].global, file.records[i].global) &&
             bitwise_equal(back.records[i].patches, file.records[i].patches);
    data::write_teacher_file(dir / "t2.bin", back);
    same = same && slurp(dir / "t.bin") == slurp(dir / "t2.bin");
    ok &= same;
    detail += fmt("; teacher file (%zu records) bitwise: %s", file.records.size(), same ? "ok" : "NO");
  }

  // Images.
  {
    std::mt19937_64 rng(9);
    const Tensor px = uniform({3, 17, 23}, rng, 0.0, 1.0, DType::f32);
    double worst = 0;
    for (const char* ext : {"png", "ppm"}) {
      const fs::path p = dir / (std::string("img.") + ext);
      if (std::string(ext) == "png")
        data::save_png(p, px);
      else
        data::save_ppm(p, px);
      const auto back = data::load_image(p).pixels.to_vector();
      const auto ref = px.to_vector();
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(back[i] - ref[i]));
    }
    const bool close = worst <= 1.0 / 255.0;
    ok &= close;
    detail += fmt("; PNG/PPM max error %.5f <= 1/255: %s", worst, close ? "ok" : "NO");
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"A1", a1_gradients},   {"A2", a2_identity_modulation}, {"A3", a3_overfit},
      {"A4", a4_ladder_signs}, {"A5", a5_compression_trend},  {"A6", a6_tintok_probe},
      {"A7", a7_no_inr},       {"A8", a8_recipe},             {"A9", a9_formats},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s  %s\n", id.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
