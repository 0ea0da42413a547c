#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "huvr/data/teacher.hpp"
#include "huvr/error.hpp"
#include "huvr/eval/ablation.hpp"
#include "huvr/eval/metrics.hpp"
#include "huvr/eval/probe.hpp"
#include "huvr/losses/losses.hpp"
#include "test_util.hpp"

using namespace huvr;
using namespace huvr::eval;
using ad::DType;
using ad::Tensor;
using huvr::testing::uniform;

namespace {

hypernet::HuvrConfig small_cfg(hypernet::Variant v = hypernet::Variant::plus_decoder) {
  hypernet::HuvrConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.d_vit = 16;
  c.n_enc_blocks = 1;
  c.enc_heads = 2;
  c.d_t = 4;
  c.d_dec = 16;
  c.n_dec_blocks = 1;
  c.dec_heads = 2;
  c.weight_tokens = 4;
  c.variant = v;
  c.inr.pos_dim = 8;
  c.inr.mlp_dim = 8;
  c.inr.coord_stride = 2;
  c.inr.upscale_factor = 2;
  c.inr.patch_size = 4;
  return c;
}

data::Dataset shapes(std::size_t n, std::size_t res, std::uint64_t seed) {
  data::ShapesSpec s;
  s.count = n;
  s.resolution = res;
  s.seed = seed;
  return data::synth_shapes(s);
}

Tensor gaussian(std::size_t n, const std::vector<double>& sd, std::mt19937_64& r) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i)
    for (double s : sd) v.push_back(s * g(r));
  return Tensor::from_doubles({n, sd.size()}, v, DType::f64);
}

double sq_err(const Tensor& a, const Tensor& b) {
  auto x = a.to_vector(), y = b.to_vector();
  double e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) e += (x[i] - y[i]) * (x[i] - y[i]);
  return e;
}

Eigen::MatrixXd rows_of(const PcaTransform& p) { return p.components; }

}  // namespace

// ---------------------------------------------------------------------------

TEST(Psnr, IdenticalImagesHitTheCap) {
  std::mt19937_64 r(1);
  Tensor a = uniform({3, 8, 8}, r, 0, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, UniformErrorOfOneTenth) {
  Tensor a = Tensor::full({3, 4, 4}, 0.5, DType::f64), b = Tensor::full({3, 4, 4}, 0.6, DType::f64);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(Tensor::zeros({3, 4, 4}), Tensor::zeros({3, 4, 5})), ShapeError);
}

TEST(Psnr, MonotoneInMseAndConsistentWithPixelMse) {
  std::mt19937_64 r(5);
  std::uniform_real_distribution<double> amp(0.001, 0.4);
  std::vector<std::pair<double, double>> seen;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a = uniform({3, 6, 6}, r, 0, 1);
    Tensor b = ad::add(a, uniform({3, 6, 6}, r, -amp(r), amp(r)));
    const double mse = losses::pixel_mse(a, b).item();
    const double p = psnr(a, b);
    EXPECT_NEAR(p, 10.0 * std::log10(1.0 / mse), 1e-9);
    seen.emplace_back(mse, p);
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_LE(seen[i].second, seen[i - 1].second);
}

TEST(SsimValue, IdenticalIsOneAndSymmetric) {
  std::mt19937_64 r(3);
  Tensor a = uniform({2, 3, 12, 12}, r, 0, 1), b = uniform({2, 3, 12, 12}, r, 0, 1);
  EXPECT_NEAR(ssim_value(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim_value(a, b), ssim_value(b, a), 1e-12);
  EXPECT_LT(ssim_value(a, b), 0.5);
}

TEST(Reconstruct, ShapesRangeAndSizeCheck) {
  auto m = hypernet::HuvrModel::init(small_cfg(), 0);
  auto ds = shapes(5, 16, 1);
  Tensor out = reconstruct(m, ds.images);
  EXPECT_EQ(out.shape(), (ad::Shape{5, 3, 16, 16}));
  for (double v : out.to_vector()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(reconstruct(m, shapes(1, 24, 1).images), ShapeError);
  auto ev = evaluate_reconstruction(m, ds, 3, 2);
  ASSERT_EQ(ev.psnr_each.size(), 3u);
  double mean = 0;
  for (double p : ev.psnr_each) mean += p / 3;
  EXPECT_NEAR(ev.psnr, mean, 1e-12);
  EXPECT_NEAR(ev.psnr_each[0], psnr(ds.images[0].pixels, ad::reshape(ad::slice(out, 0, 0, 1), {3, 16, 16})), 1e-4);
}

TEST(Reconstruct, BatchingDoesNotChangeResults) {
  auto m = hypernet::HuvrModel::init(small_cfg(), 2);
  auto ds = shapes(7, 16, 2);
  auto a = evaluate_reconstruction(m, ds, 0, 7), b = evaluate_reconstruction(m, ds, 0, 3);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(a.psnr_each[i], b.psnr_each[i], 1e-4);
}

// ---------------------------------------------------------------------------

TEST(Pca, PointsOnALineReconstructExactly) {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.37 * i - 2.0;
    v.push_back(1.0 + 3.0 * t);
    v.push_back(-2.0 + 4.0 * t);
  }
  Tensor x = Tensor::from({20, 2}, v);
  auto p = fit_pca(x, 1);
  EXPECT_EQ(p.rank, 1u);
  EXPECT_LT(sq_err(p.invert(p.apply(x)), x), 1e-20);
  EXPECT_NEAR(std::abs(p.components(0, 0)), 0.6, 1e-12);
  EXPECT_NEAR(p.explained[0], 1.0, 1e-12);
}

TEST(Pca, FullBasisInverts) {
  std::mt19937_64 r(8);
  Tensor x = gaussian(50, {3, 1, 0.5, 2, 0.1}, r);
  auto p = fit_pca(x, 5);
  auto back = p.invert(p.apply(x)).to_vector(), orig = x.to_vector();
  for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(back[i], orig[i], 1e-5);
}

TEST(Pca, TopEigenvalueMatchesCovariance) {
  std::mt19937_64 r(13);
  // Rotated anisotropic Gaussian: variances 9, 1, 0.25 along a random orthonormal frame.
  Tensor z = gaussian(10000, {3.0, 1.0, 0.5}, r);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(3, 3)).householderQ();
  auto zv = z.to_vector();
  std::vector<double> xv(zv.size());
  for (std::size_t i = 0; i < 10000; ++i)
    for (int a = 0; a < 3; ++a) {
      double s = 0;
      for (int b = 0; b < 3; ++b) s += q(a, b) * zv[i * 3 + b];
      xv[i * 3 + a] = s + 5.0;
    }
  auto p = fit_pca(Tensor::from({10000, 3}, xv), 2);
  EXPECT_NEAR(p.eigenvalues[0], 9.0, 0.02 * 9.0);
  EXPECT_NEAR(p.eigenvalues[1], 1.0, 0.02 * 1.0);
  EXPECT_NEAR(p.explained[0], 9.0 / 10.25, 0.02);
  // Direction: first component aligns with the first frame axis.
  EXPECT_GT(std::abs(p.components.row(0).dot(q.col(0))), 0.999);
}

TEST(Pca, RowsOrthonormalRatiosNonIncreasingSignConvention) {
  std::mt19937_64 r(21);
  Tensor x = gaussian(200, {1, 4, 2, 0.3, 3, 1.5, 0.7}, r);
  auto p = fit_pca(x, 5);
  Eigen::MatrixXd g = rows_of(p) * rows_of(p).transpose();
  EXPECT_LT((g - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-5);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LE(p.explained[i], p.explained[i - 1]);
  for (Eigen::Index i = 0; i < 5; ++i) {
    Eigen::Index arg;
    p.components.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.components(i, arg), 0.0);
  }
  auto q = fit_pca(x, 5);
  EXPECT_EQ(p.apply(x).to_vector(), q.apply(x).to_vector());
}

TEST(Pca, ErrorNonIncreasingInComponents) {
  std::mt19937_64 r(4);
  Tensor x = gaussian(120, {2, 1, 1, 0.5, 0.2, 0.1}, r);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= 6; ++k) {
    auto p = fit_pca(x, k);
    const double e = sq_err(p.invert(p.apply(x)), x);
    EXPECT_LE(e, prev + 1e-9) << "k=" << k;
    prev = e;
  }
  EXPECT_LT(prev, 1e-18);
}

TEST(Pca, RankDeficientPadsWithZeros) {
  std::mt19937_64 r(6);
  Tensor z = gaussian(40, {1.0, 2.0}, r);
  auto zv = z.to_vector();
  std::vector<double> v;
  for (std::size_t i = 0; i < 40; ++i) v.insert(v.end(), {zv[2 * i], zv[2 * i + 1], zv[2 * i] + zv[2 * i + 1], 0.0});
  auto p = fit_pca(Tensor::from({40, 4}, v), 4);
  EXPECT_EQ(p.rank, 2u);
  EXPECT_EQ(p.components.row(2).norm(), 0.0);
  EXPECT_EQ(p.components.row(3).norm(), 0.0);
  EXPECT_EQ(p.explained[3], 0.0);
}

TEST(Pca, InvalidRequestsThrow) {
  Tensor x = Tensor::zeros({10, 3}, DType::f64);
  EXPECT_THROW(fit_pca(x, 4), ConfigError);
  EXPECT_THROW(fit_pca(x, 0), ConfigError);
  EXPECT_THROW(fit_pca(Tensor::zeros({3, 5}, DType::f64), 3), ConfigError);
  auto p = fit_pca(Tensor::from({3, 2}, std::vector<double>{0, 0, 1, 1, 2, 3}), 1);
  EXPECT_THROW(p.apply(Tensor::zeros({2, 3}, DType::f64)), ShapeError);
}

// ---------------------------------------------------------------------------

TEST(PcaFeatures, PerTokenSharesOneBasis) {
  std::mt19937_64 rng(21);
  Tensor tr = uniform({40, 3 * 5}, rng), va = uniform({10, 3 * 5}, rng);
  auto pf = pca_features(tr, va, 2, 5);
  EXPECT_EQ(pf.train.shape(), (ad::Shape{40, 6}));
  EXPECT_EQ(pf.val.shape(), (ad::Shape{10, 6}));
  // token t of row n equals the basis applied to that token alone
  auto tok = ad::reshape(tr, {120, 5});
  auto direct = pf.pca.apply(tok).to_vector();
  auto got = pf.train.to_vector();
  ASSERT_EQ(direct.size(), got.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], direct[i]);
  // whole-row mode is plain fit_pca
  auto whole = pca_features(tr, va, 4);
  auto ref = fit_pca(tr, 4).apply(va).to_vector();
  auto v = whole.val.to_vector();
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], ref[i]);
  EXPECT_THROW(pca_features(tr, va, 6, 5), ConfigError);
  EXPECT_THROW(pca_features(tr, va, 2, 4), ShapeError);
}

TEST(Probe, OneHotFeaturesAreSeparable) {
  const std::size_t C = 5;
  std::vector<int> yt, yv;
  std::vector<double> xt, xv;
  std::mt19937_64 r(1);
  for (std::size_t i = 0; i < 100; ++i) {
    int y = static_cast<int>(r() % C);
    (i < 70 ? yt : yv).push_back(y);
    auto& x = i < 70 ? xt : xv;
    for (std::size_t c = 0; c < C; ++c) x.push_back(c == static_cast<std::size_t>(y) ? 1.0 : 0.0);
  }
  auto res = linear_probe(Tensor::from({70, C}, xt), yt, Tensor::from({30, C}, xv), yv, {}, "onehot");
  EXPECT_EQ(res.accuracy, 1.0);
  EXPECT_EQ(res.classes, C);
  EXPECT_EQ(res.n_train, 70u);
  EXPECT_EQ(res.n_val, 30u);
  EXPECT_EQ(res.dim, C);
  EXPECT_EQ(res.source, "onehot");
}

TEST(Probe, NoiseFeaturesNearChance) {
  const std::size_t C = 4, n_val = 2000;
  std::mt19937_64 r(77);
  std::vector<int> yt(400), yv(n_val);
  for (auto& y : yt) y = static_cast<int>(r() % C);
  for (auto& y : yv) y = static_cast<int>(r() % C);
  Tensor xt = uniform({400, 8}, r), xv = uniform({n_val, 8}, r);
  auto res = linear_probe(xt, yt, xv, yv);
  const double p = 1.0 / C, sigma = std::sqrt(p * (1 - p) / n_val);
  EXPECT_NEAR(res.accuracy, p, 3 * sigma);
}

TEST(Probe, InvariantToAffineRescalingOnShapes) {
  auto all = shapes(300, 32, 4);
  data::Dataset tr, val;
  data::split(all, 200, 0, tr, val);
  data::FrozenRandomTeacher teacher(3, 32, 8, 12);
  auto feats = [&](const data::Dataset& d) {
    std::vector<double> v;
    for (const auto& im : d.images) {
      auto g = teacher.features(im).global.to_vector();
      v.insert(v.end(), g.begin(), g.end());
    }
    return Tensor::from_doubles({d.size(), 12}, v, DType::f64);
  };
  Tensor ft = feats(tr), fv = feats(val);
  std::mt19937_64 r(2);
  std::uniform_real_distribution<double> sc(0.01, 100), sh(-50, 50);
  std::vector<double> a(12), b(12);
  for (std::size_t j = 0; j < 12; ++j) {
    a[j] = sc(r) * (j % 2 ? -1 : 1);
    b[j] = sh(r);
  }
  auto warp = [&](const Tensor& x) {
    auto v = x.to_vector();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i % 12] * v[i] + b[i % 12];
    return Tensor::from_doubles(x.shape(), v, DType::f64);
  };
  const double raw = linear_probe(ft, tr.labels, fv, val.labels).accuracy;
  const double warped = linear_probe(warp(ft), tr.labels, warp(fv), val.labels).accuracy;
  EXPECT_LT(std::abs(raw - warped), 0.02);
  EXPECT_GT(raw, 0.3);  // the stand-in teacher carries class structure
}

TEST(Probe, DegenerateInputsThrow) {
  Tensor x = Tensor::zeros({4, 2}, DType::f64);
  EXPECT_THROW(linear_probe(x, {1, 1, 1, 1}, x, {1, 1, 1, 1}), DataError);
  EXPECT_THROW(linear_probe(x, {0, 1, 0}, x, {0, 1, 0, 1}), ShapeError);
  EXPECT_THROW(linear_probe(x, {0, 1, 0, 1}, Tensor::zeros({4, 3}, DType::f64), {0, 1, 0, 1}), ShapeError);
  EXPECT_THROW(linear_probe(x, {0, -1, 0, 1}, x, {0, 1, 0, 1}), DataError);
}

TEST(Features, ShapesPerSourceAndPooling) {
  auto m = hypernet::HuvrModel::init(small_cfg(), 0);
  auto ds = shapes(5, 16, 0);
  using FS = FeatureSource;
  using PL = Pooling;
  EXPECT_EQ(extract_features(m, ds, FS::encoder, PL::global).shape(), (ad::Shape{5, 16}));
  EXPECT_EQ(extract_features(m, ds, FS::tintok, PL::global).shape(), (ad::Shape{5, 4}));
  EXPECT_EQ(extract_features(m, ds, FS::tintok, PL::concat).shape(), (ad::Shape{5, 8}));
  EXPECT_EQ(extract_features(m, ds, FS::tintok, PL::tokens).shape(), (ad::Shape{5, 17 * 4}));
  EXPECT_EQ(extract_features(m, ds, FS::decoder, PL::patch_mean, 2).shape(), (ad::Shape{5, 16}));
  // tokens layout: global first, then patches in order.
  auto tok = extract_features(m, ds, FS::tintok, PL::tokens).to_vector();
  auto glob = extract_features(m, ds, FS::tintok, PL::global).to_vector();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(tok[i * 68 + k], glob[i * 4 + k]);

  auto copy = hypernet::HuvrModel::init(small_cfg(hypernet::Variant::patchwise_copy), 0);
  EXPECT_THROW(extract_features(copy, ds, FS::tintok, PL::patch_mean), ConfigError);
  EXPECT_THROW(extract_features(copy, ds, FS::encoder, PL::global), ConfigError);
  EXPECT_NO_THROW(extract_features(copy, ds, FS::encoder, PL::patch_mean));
  for (auto s : {FS::encoder, FS::tintok, FS::decoder}) EXPECT_EQ(parse_source(source_name(s)), s);
  for (auto p : {PL::global, PL::patch_mean, PL::concat, PL::tokens}) EXPECT_EQ(parse_pooling(pooling_name(p)), p);
  EXPECT_THROW(parse_pooling("max"), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Ladder, BudgetMismatchRejected) {
  trainer::TrainConfig t;
  t.max_steps = 2;
  t.augment = false;
  auto entries = ladder_entries(small_cfg(), t, 0, {hypernet::Variant::patchwise_copy, hypernet::Variant::patchwise_global});
  entries[1].train.max_steps = 3;
  auto ds = shapes(4, 16, 0);
  EXPECT_THROW(run_ablation_ladder(entries, ds, ds), ConfigError);
  entries[1].train.max_steps = 2;
  entries[1].init_seed = 9;
  EXPECT_THROW(run_ablation_ladder(entries, ds, ds), ConfigError);
  entries[1].init_seed = 0;
  entries[1].train.lr_base *= 2;
  EXPECT_THROW(run_ablation_ladder(entries, ds, ds), ConfigError);
  EXPECT_THROW(run_ablation_ladder({}, ds, ds), ConfigError);
}

TEST(Ladder, TinyRunReportsRowsAndChecks) {
  trainer::TrainConfig t;
  t.max_steps = 3;
  t.batch_size = 4;
  t.augment = false;
  auto entries = ladder_entries(small_cfg(), t, 1);
  ASSERT_EQ(entries.size(), 6u);
  auto ds = shapes(8, 16, 5);
  auto report = run_ablation_ladder(entries, ds, ds);
  ASSERT_EQ(report.rows.size(), 6u);
  ASSERT_EQ(report.checks.size(), 3u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(report.rows[i].variant, hypernet::kLadder[i]);
  EXPECT_EQ(report.rows[4].d_t, 4u);
  EXPECT_EQ(report.rows[3].d_t, 0u);
  EXPECT_GT(report.rows[5].params, report.rows[4].params);
  std::ostringstream csv;
  write_ladder_csv(csv, report);
  std::istringstream in(csv.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 7);
  const std::string summary = ladder_summary(report);
  int verdicts = 0;
  for (const char* w : {"PASS ", "FAIL "})
    for (std::size_t pos = 0; (pos = summary.find(w, pos)) != std::string::npos; ++pos) ++verdicts;
  EXPECT_EQ(verdicts, 3);
  EXPECT_EQ(report.all_pass(), report.checks[0].pass && report.checks[1].pass && report.checks[2].pass);
}
