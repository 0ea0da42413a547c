#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "huvr/data/dataset.hpp"
#include "huvr/hypernet/model.hpp"

namespace huvr::eval {

using ad::Tensor;

/// Which token stage feeds a probe.
enum class FeatureSource { encoder, tintok, decoder };
/// How a stage becomes one vector per image. concat = [global, patch mean];
/// tokens = every token flattened in order [global, patch 0, ..., patch P-1].
enum class Pooling { global, patch_mean, concat, tokens };

const char* source_name(FeatureSource s);
FeatureSource parse_source(const std::string& name);
const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& name);

/// Eval-mode features [N, d] (f64) for every image of `ds`. Throws ConfigError when
/// the variant lacks the requested stage or a global token.
Tensor extract_features(const hypernet::HuvrModel& model, const data::Dataset& ds, FeatureSource source,
                        Pooling pooling, std::size_t batch = 64);

struct PcaTransform {
  Eigen::VectorXd mean;            // [d]
  Eigen::MatrixXd components;      // [k, d], orthonormal rows
  std::vector<double> explained;   // variance ratio per component, non-increasing
  std::vector<double> eigenvalues; // covariance eigenvalue per component
  std::size_t rank = 0;            // components with nonzero variance

  std::size_t dim() const { return static_cast<std::size_t>(components.rows()); }
  /// [N, d] -> [N, k]
  Tensor apply(const Tensor& x) const;
  /// [N, k] -> [N, d]
  Tensor invert(const Tensor& z) const;
};

/// Top-k principal directions of the mean-centred rows. Each component's largest-
/// magnitude entry is made positive. Rank-deficient inputs get zero rows past the rank.
PcaTransform fit_pca(const Tensor& features, std::size_t k);

struct PcaFeatures {
  PcaTransform pca;
  Tensor train, val;  // [N, tokens * k]
};

/// PCA baseline at `k` dims, fit on `train_x` only. With `token_dim` > 0 each row is
/// split into tokens of that width and one basis is shared by all tokens (rows of
/// tokens-pooled features); otherwise whole rows are projected. Throws ConfigError
/// when k exceeds the token width.
PcaFeatures pca_features(const Tensor& train_x, const Tensor& val_x, std::size_t k, std::size_t token_dim = 0);

struct ProbeConfig {
  std::size_t steps = 500;
  double lr = 0.01;
  double weight_decay = 1e-4;
};

struct ProbeResult {
  std::string source;
  double accuracy = 0;
  std::size_t classes = 0;
  std::size_t n_train = 0, n_val = 0;
  std::size_t dim = 0;
};

/// Softmax regression on standardized frozen features, full-batch AdamW; top-1
/// accuracy on the validation rows.
ProbeResult linear_probe(const Tensor& train_x, const std::vector<int>& train_y, const Tensor& val_x,
                         const std::vector<int>& val_y, const ProbeConfig& cfg = {},
                         const std::string& source = "");

}  // namespace huvr::eval
