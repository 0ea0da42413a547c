#include "huvr/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "huvr/autodiff/ops.hpp"
#include "huvr/data/transforms.hpp"
#include "huvr/error.hpp"
#include "huvr/trainer/optim.hpp"

namespace huvr::eval {

using namespace huvr::ad;

const char* source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::encoder: return "encoder";
    case FeatureSource::tintok: return "tintok";
    case FeatureSource::decoder: return "decoder";
  }
  return "?";
}

FeatureSource parse_source(const std::string& name) {
  for (auto s : {FeatureSource::encoder, FeatureSource::tintok, FeatureSource::decoder})
    if (name == source_name(s)) return s;
  throw ConfigError("unknown feature source '" + name + "'");
}

const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::global: return "global";
    case Pooling::patch_mean: return "patch_mean";
    case Pooling::concat: return "concat";
    case Pooling::tokens: return "tokens";
  }
  return "?";
}

Pooling parse_pooling(const std::string& name) {
  for (auto p : {Pooling::global, Pooling::patch_mean, Pooling::concat, Pooling::tokens})
    if (name == pooling_name(p)) return p;
  throw ConfigError("unknown pooling '" + name + "'");
}

Tensor extract_features(const hypernet::HuvrModel& model, const data::Dataset& ds, FeatureSource source,
                        Pooling pooling, std::size_t batch) {
  using hypernet::Variant;
  const auto v = model.cfg.variant;
  if (source == FeatureSource::tintok && !hypernet::has_compression(v))
    throw ConfigError(std::string("variant ") + hypernet::variant_name(v) + " has no TinToks");
  if (source == FeatureSource::decoder && !hypernet::is_patchwise(v))
    throw ConfigError(std::string("variant ") + hypernet::variant_name(v) + " has no decoder tokens");
  if (pooling != Pooling::patch_mean && !hypernet::has_global_token(v))
    throw ConfigError(std::string("variant ") + hypernet::variant_name(v) + " has no global token");
  if (ds.size() == 0) throw DataError("extract_features: empty dataset");

  std::vector<Tensor> rows;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    std::vector<Tensor> px;
    for (std::size_t i = start; i < end; ++i) px.push_back(ds.images[i].pixels);
    Tensor x = data::normalize(data::stack_pixels(px, model.cfg.dtype));
    auto t = hypernet::encode({}, model, x);
    if (source != FeatureSource::encoder) hypernet::compress({}, model, t);
    if (source == FeatureSource::decoder) hypernet::decode_tokens({}, model, t);
    const Tensor* g = &t.global_enc;
    const Tensor* p = &t.patch_enc;
    if (source == FeatureSource::tintok) g = &t.global_tin, p = &t.patch_tin;
    if (source == FeatureSource::decoder) g = &t.global_dec, p = &t.patch_dec;
    Tensor f;
    if (pooling == Pooling::global) f = *g;
    else if (pooling == Pooling::patch_mean) f = mean(*p, 1);
    else if (pooling == Pooling::concat) f = concat({*g, mean(*p, 1)}, 1);
    else {
      const std::size_t n = p->dim(0), P = p->dim(1), d = p->dim(2);
      f = reshape(concat({reshape(*g, {n, 1, d}), *p}, 1), {n, (P + 1) * d});
    }
    rows.push_back(f.dtype() == DType::f64 ? f : f.cast(DType::f64));
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

namespace {

Eigen::MatrixXd to_matrix(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("expected a [N, d] feature matrix, got " + to_string(x.shape()));
  auto v = x.to_vector();
  Eigen::MatrixXd m(x.dim(0), x.dim(1));
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t j = 0; j < x.dim(1); ++j) m(i, j) = v[i * x.dim(1) + j];
  return m;
}

Tensor from_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return Tensor::from_doubles({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, v,
                              DType::f64);
}

}  // namespace

Tensor PcaTransform::apply(const Tensor& x) const {
  Eigen::MatrixXd m = to_matrix(x);
  if (m.cols() != mean.size()) throw ShapeError("pca apply: feature dim mismatch");
  return from_matrix((m.rowwise() - mean.transpose()) * components.transpose());
}

Tensor PcaTransform::invert(const Tensor& z) const {
  Eigen::MatrixXd m = to_matrix(z);
  if (m.cols() != components.rows()) throw ShapeError("pca invert: component count mismatch");
  return from_matrix((m * components).rowwise() + mean.transpose());
}

PcaTransform fit_pca(const Tensor& features, std::size_t k) {
  const Eigen::MatrixXd x = to_matrix(features);
  const auto n = x.rows(), d = x.cols();
  if (k == 0 || static_cast<Eigen::Index>(k) > d)
    throw ConfigError("pca: d_t=" + std::to_string(k) + " must be in [1, " + std::to_string(d) + "]");
  if (n <= static_cast<Eigen::Index>(k))
    throw ConfigError("pca: need more samples (" + std::to_string(n) + ") than components (" +
                      std::to_string(k) + ")");
  PcaTransform p;
  p.mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd evals = es.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = es.eigenvectors();
  const double total = std::max(evals.sum(), 0.0);
  const double tol = std::max(1e-12, 1e-10 * std::abs(evals(d - 1)));
  p.components = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), d);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index col = d - 1 - static_cast<Eigen::Index>(i);
    const double lam = std::max(evals(col), 0.0);
    if (lam <= tol) {
      p.eigenvalues.push_back(0.0);
      p.explained.push_back(0.0);
      continue;
    }
    Eigen::VectorXd u = evecs.col(col);
    Eigen::Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    p.components.row(static_cast<Eigen::Index>(i)) = u.transpose();
    p.eigenvalues.push_back(lam);
    p.explained.push_back(total > 0 ? lam / total : 0.0);
    ++p.rank;
  }
  return p;
}

PcaFeatures pca_features(const Tensor& train_x, const Tensor& val_x, std::size_t k, std::size_t token_dim) {
  if (train_x.rank() != 2 || val_x.rank() != 2 || train_x.dim(1) != val_x.dim(1))
    throw ShapeError("pca_features: expected [N, d] inputs of equal width");
  const std::size_t d = train_x.dim(1);
  const std::size_t w = token_dim ? token_dim : d;
  if (d % w != 0) throw ShapeError("pca_features: token width does not divide feature width");
  if (k == 0 || k > w)
    throw ConfigError("pca baseline: d_t=" + std::to_string(k) + " exceeds feature dim " + std::to_string(w));
  const std::size_t t = d / w;
  auto split = [&](const Tensor& x) { return ad::reshape(x, {x.dim(0) * t, w}); };
  PcaFeatures out;
  out.pca = fit_pca(split(train_x), k);
  out.train = ad::reshape(out.pca.apply(split(train_x)), {train_x.dim(0), t * k});
  out.val = ad::reshape(out.pca.apply(split(val_x)), {val_x.dim(0), t * k});
  return out;
}

ProbeResult linear_probe(const Tensor& train_x, const std::vector<int>& train_y, const Tensor& val_x,
                         const std::vector<int>& val_y, const ProbeConfig& cfg, const std::string& source) {
  Eigen::MatrixXd xt = to_matrix(train_x), xv = to_matrix(val_x);
  if (xt.rows() != static_cast<Eigen::Index>(train_y.size()) || xv.rows() != static_cast<Eigen::Index>(val_y.size()))
    throw ShapeError("linear_probe: label count does not match feature rows");
  if (xt.cols() != xv.cols()) throw ShapeError("linear_probe: train/val feature dims differ");
  if (val_y.empty()) throw DataError("linear_probe: empty validation split");
  std::set<int> seen(train_y.begin(), train_y.end());
  for (int y : train_y)
    if (y < 0) throw DataError("linear_probe: unlabeled training example");
  for (int y : val_y)
    if (y < 0) throw DataError("linear_probe: unlabeled validation example");
  if (seen.size() < 2) throw DataError("linear_probe: training split has a single class");
  int max_label = *seen.rbegin();
  for (int y : val_y) max_label = std::max(max_label, y);
  const std::size_t C = static_cast<std::size_t>(max_label) + 1;
  const std::size_t N = train_y.size(), d = static_cast<std::size_t>(xt.cols());

  const Eigen::RowVectorXd mu = xt.colwise().mean();
  Eigen::RowVectorXd sd = ((xt.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(N)).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) sd(j) = std::max(sd(j), 1e-8);
  xt = (xt.rowwise() - mu).array().rowwise() / sd.array();
  xv = (xv.rowwise() - mu).array().rowwise() / sd.array();

  Tensor X = from_matrix(xt);
  std::vector<double> onehot(N * C, 0.0);
  for (std::size_t i = 0; i < N; ++i) onehot[i * C + static_cast<std::size_t>(train_y[i])] = 1.0;
  Tensor Y = Tensor::from_doubles({N, C}, onehot, DType::f64);
  Tensor W = Tensor::zeros({d, C}, DType::f64), b = Tensor::zeros({C}, DType::f64);
  trainer::AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    Tape tape;
    Tensor w = tape.watch(W), bb = tape.watch(b);
    Tensor logits = add(matmul(X, w), bb);
    Tensor shifted = sub(logits, broadcast(max(logits, 1, true), logits.shape()));
    Tensor lse = log(sum(exp(shifted), 1, true));
    Tensor nll = mean(sum(mul(Y, sub(broadcast(lse, logits.shape()), shifted)), 1));
    GradMap g = tape.backward(nll);
    opt.step({W, b}, {g.grad(w), g.grad(bb)}, cfg.lr);
  }
  const Eigen::MatrixXd w = to_matrix(W);
  const auto bv = b.to_vector();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    Eigen::RowVectorXd z = xv.row(i) * w;
    for (std::size_t c = 0; c < C; ++c) z(static_cast<Eigen::Index>(c)) += bv[c];
    Eigen::Index arg = 0;
    z.maxCoeff(&arg);
    correct += arg == val_y[static_cast<std::size_t>(i)];
  }
  ProbeResult r;
  r.source = source;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(val_y.size());
  r.classes = C;
  r.n_train = N;
  r.n_val = val_y.size();
  r.dim = d;
  return r;
}

}  // namespace huvr::eval
