#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "huvr/data/dataset.hpp"
#include "huvr/data/teacher.hpp"
#include "huvr/data/transforms.hpp"
#include "huvr/hypernet/model.hpp"
#include "huvr/losses/losses.hpp"
#include "huvr/trainer/checkpoint.hpp"
#include "huvr/trainer/optim.hpp"

namespace huvr::trainer {

struct TrainConfig {
  double lr_base = 5e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // when nonzero, replaces epochs * steps_per_epoch
  double warmup_epochs = 5;   // used only when the run has >= 50 epochs
  double clip_norm = 0.01;
  double weight_decay = 0.05;
  std::size_t micro_batch = 0;  // forward/backward chunk size; 0 = whole batch
  std::size_t threads = 1;
  bool augment = true;
  data::CropParams crop;
  losses::LossConfig loss;
  std::size_t eval_every = 1;        // epochs; 0 disables
  std::size_t val_limit = 0;         // 0 = whole validation set
  std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  std::uint64_t seed = 0;

  void validate() const;
};

/// lr_base * B / 256.
double effective_lr(const TrainConfig& cfg);

/// Model, distillation heads and the parameter order used by the optimizer.
struct Learner {
  hypernet::HuvrModel model;
  losses::DistillationHeads heads;
  bool with_heads = false;

  static Learner init(const hypernet::HuvrConfig& cfg, std::uint64_t seed);
  /// Model parameters, then "distill.*" when heads are present.
  nn::ParamList params() const;
};

struct StepLog {
  std::size_t step = 0;  // 1-based index of the completed step
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double grad_norm = 0;
  losses::LossReport loss;
};

/// Owns the optimizer state; the batch at each step is a pure function of
/// (seed, step), so resuming from a checkpoint continues the same trajectory.
class Trainer {
 public:
  Trainer(Learner& learner, const data::Dataset& train, const data::TeacherSource* teacher,
          TrainConfig cfg);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return total_steps_; }
  std::size_t warmup_steps() const { return warmup_steps_; }
  std::size_t step() const { return step_; }
  bool done() const { return step_ >= total_steps_; }
  const TrainConfig& config() const { return cfg_; }

  /// Indices into the training set for step `s` (0-based).
  std::vector<std::size_t> batch_indices(std::size_t s) const;
  StepLog train_step();

  Checkpoint checkpoint(const std::string& config_text) const;
  void restore(const Checkpoint& ckpt);

 private:
  Learner& learner_;
  const data::Dataset& train_;
  const data::TeacherSource* teacher_;
  TrainConfig cfg_;
  std::size_t batch_ = 0, steps_per_epoch_ = 0, total_steps_ = 0, warmup_steps_ = 0;
  std::size_t step_ = 0;
  AdamW adam_;
  nn::ParamList params_;
};

inline constexpr const char* kMetricsHeader =
    "step,epoch,lr,loss_total,loss_mse,loss_ssim,loss_distill_g_enc,loss_distill_p_enc,"
    "loss_distill_g_dec,loss_distill_p_dec,psnr_val,ssim_val";

/// One CSV row; NaN fields and absent eval values are written empty.
std::string metrics_row(const StepLog& log, std::optional<double> psnr_val, std::optional<double> ssim_val);

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<std::pair<std::size_t, double>> val_psnr;  // (epoch, psnr)
  std::vector<std::pair<std::size_t, double>> val_ssim;
};

struct TrainOutputs {
  std::filesystem::path dir;  // empty: write nothing
  std::string config_text;    // embedded in checkpoints
  std::ostream* log = nullptr;
};

/// Runs until the step budget is spent. Writes metrics.csv and checkpoints into
/// `out.dir` when given. On a non-finite loss or gradient writes diverged.ckpt and
/// rethrows NumericError.
TrainResult train(Learner& learner, const data::Dataset& train_set, const data::Dataset* val_set,
                  const data::TeacherSource* teacher, const TrainConfig& cfg,
                  const TrainOutputs& out = {}, const Checkpoint* resume = nullptr);

}  // namespace huvr::trainer
