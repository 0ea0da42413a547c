#include "huvr/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <random>
#include <thread>

#include "huvr/error.hpp"
#include "huvr/eval/metrics.hpp"

namespace huvr::trainer {

using namespace huvr::ad;

void TrainConfig::validate() const {
  if (!(lr_base > 0)) throw ConfigError("train.lr_base must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (epochs == 0 && max_steps == 0) throw ConfigError("train.epochs or train.max_steps must be positive");
  if (!(clip_norm > 0)) throw ConfigError("train.clip_norm must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
  if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be non-negative");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (!(crop.scale_min > 0) || crop.scale_min > crop.scale_max || crop.scale_max > 1)
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  if (!(crop.ratio_min > 0) || crop.ratio_min > crop.ratio_max)
    throw ConfigError("crop ratio range must satisfy 0 < min <= max");
  if (!loss.recon && !loss.ssim && !loss.distill) throw ConfigError("every loss component is disabled");
  if (loss.lambda_ssim < 0) throw ConfigError("loss.lambda_ssim must be non-negative");
}

double effective_lr(const TrainConfig& cfg) {
  return cfg.lr_base * static_cast<double>(cfg.batch_size) / 256.0;
}

Learner Learner::init(const hypernet::HuvrConfig& cfg, std::uint64_t seed) {
  Learner l;
  l.model = hypernet::HuvrModel::init(cfg, seed);
  if (cfg.distill.enabled) {
    nn::Rng rng(seed ^ 0x5851f42d4c957f2dULL);
    l.heads = losses::DistillationHeads::init(cfg, rng);
    l.with_heads = true;
  }
  return l;
}

nn::ParamList Learner::params() const {
  nn::ParamList out = model.params();
  if (with_heads) heads.collect(out, "distill");
  return out;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

struct ChunkResult {
  std::vector<Tensor> grads;
  losses::LossReport report;
  std::exception_ptr error;
};

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = add(acc[i], g[i]);
}

bool finite_report(const losses::LossReport& r) { return std::isfinite(r.total); }

}  // namespace

Trainer::Trainer(Learner& learner, const data::Dataset& train, const data::TeacherSource* teacher,
                 TrainConfig cfg)
    : learner_(learner), train_(train), teacher_(teacher), cfg_(std::move(cfg)),
      adam_(0.9, 0.999, 1e-8, cfg_.weight_decay) {
  cfg_.validate();
  const auto& mc = learner_.model.cfg;
  if (train_.size() == 0) throw DataError("training set is empty");
  if (cfg_.loss.distill) {
    if (!learner_.with_heads) throw ConfigError("distillation loss enabled but distill.enabled is false");
    if (!teacher_) throw ConfigError("distillation loss enabled without a teacher");
    if (teacher_->patch_count() != mc.num_patches())
      throw ConfigError("teacher has " + std::to_string(teacher_->patch_count()) +
                        " patches, model has " + std::to_string(mc.num_patches()));
    if (teacher_->dim() != mc.distill.teacher_dim)
      throw ConfigError("teacher dim " + std::to_string(teacher_->dim()) + " != distill.teacher_dim " +
                        std::to_string(mc.distill.teacher_dim));
  }
  if (!cfg_.augment)
    for (const auto& im : train_.images)
      if (im.height() != mc.image_size || im.width() != mc.image_size)
        throw DataError("training image size differs from model image_size and augmentation is off");
  batch_ = std::min(cfg_.batch_size, train_.size());
  steps_per_epoch_ = train_.size() / batch_;
  total_steps_ = cfg_.max_steps ? cfg_.max_steps : cfg_.epochs * steps_per_epoch_;
  const std::size_t epochs = (total_steps_ + steps_per_epoch_ - 1) / steps_per_epoch_;
  const double warm = epochs < 50 ? 0.1 * static_cast<double>(total_steps_)
                                  : cfg_.warmup_epochs * static_cast<double>(steps_per_epoch_);
  warmup_steps_ = std::min(total_steps_, static_cast<std::size_t>(std::llround(warm)));
  params_ = learner_.params();
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t s) const {
  const std::size_t epoch = s / steps_per_epoch_, k = s % steps_per_epoch_;
  auto rng = stream(cfg_.seed, 0xB47C, epoch);
  std::vector<std::size_t> perm(train_.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  return {perm.begin() + static_cast<std::ptrdiff_t>(k * batch_),
          perm.begin() + static_cast<std::ptrdiff_t>((k + 1) * batch_)};
}

StepLog Trainer::train_step() {
  if (done()) throw Error("train_step: step budget exhausted");
  const auto& mc = learner_.model.cfg;
  const auto idx = batch_indices(step_);
  std::vector<data::Image> imgs;
  imgs.reserve(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& src = train_.images[idx[j]];
    if (cfg_.augment) {
      auto rng = stream(cfg_.seed, 0xA06, step_, j);
      imgs.push_back(data::random_resized_crop(src, mc.image_size, rng, cfg_.crop));
    } else {
      imgs.push_back(src);
    }
  }

  const std::size_t mb = cfg_.micro_batch ? std::min(cfg_.micro_batch, batch_) : batch_;
  const std::size_t n_chunks = (batch_ + mb - 1) / mb;
  std::vector<ChunkResult> results(n_chunks);
  const bool need_recon = cfg_.loss.recon || cfg_.loss.ssim;

  auto run_chunk = [&](std::size_t c) {
    ChunkResult& r = results[c];
    try {
      const std::size_t lo = c * mb, hi = std::min(batch_, lo + mb);
      std::vector<Tensor> px;
      for (std::size_t j = lo; j < hi; ++j) px.push_back(imgs[j].pixels);
      Tensor target = data::stack_pixels(px, mc.dtype);
      losses::TeacherBatch tb;
      if (cfg_.loss.distill) {
        std::vector<Tensor> gs, ps;
        for (std::size_t j = lo; j < hi; ++j) {
          auto f = teacher_->features(imgs[j]);
          gs.push_back(reshape(f.global, {1, f.global.numel()}));
          ps.push_back(reshape(f.patches, {1, f.patches.dim(0), f.patches.dim(1)}));
        }
        tb.global = gs.size() == 1 ? gs[0] : concat(gs, 0);
        tb.patches = ps.size() == 1 ? ps[0] : concat(ps, 0);
        if (tb.global.dtype() != mc.dtype) {
          tb.global = tb.global.cast(mc.dtype);
          tb.patches = tb.patches.cast(mc.dtype);
        }
      }
      Tape tape;
      Binder bind(&tape);
      auto out = hypernet::forward(bind, learner_.model, data::normalize(target), need_recon);
      auto res = losses::total_loss(bind, out.recon, target, out.tokens,
                                    learner_.with_heads ? &learner_.heads : nullptr,
                                    cfg_.loss.distill ? &tb : nullptr, cfg_.loss, mc.distill);
      r.report = res.report;
      if (!finite_report(r.report)) return;
      const double w = static_cast<double>(hi - lo) / static_cast<double>(batch_);
      Tensor scaled = n_chunks == 1 ? res.loss : mul_scalar(res.loss, w);
      GradMap g = tape.backward(scaled);
      r.grads.reserve(params_.size());
      for (const auto& p : params_) r.grads.push_back(g.param_grad(p.value).detached());
    } catch (...) {
      r.error = std::current_exception();
    }
  };

  const std::size_t workers = std::min(cfg_.threads, n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < n_chunks; c += workers) run_chunk(c);
      });
    for (auto& t : pool) t.join();
  }

  StepLog log;
  log.step = step_ + 1;
  log.epoch = step_ / steps_per_epoch_ + 1;
  log.loss.total = log.loss.mse = log.loss.ssim = 0;
  log.loss.distill.fill(0);
  std::vector<Tensor> grads;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    if (results[c].error) std::rethrow_exception(results[c].error);
    const auto& rep = results[c].report;
    if (!finite_report(rep)) throw NumericError("non-finite loss at step " + std::to_string(log.step));
    const std::size_t lo = c * mb, hi = std::min(batch_, lo + mb);
    const double w = static_cast<double>(hi - lo) / static_cast<double>(batch_);
    log.loss.total += w * rep.total;
    log.loss.mse += w * rep.mse;
    log.loss.ssim += w * rep.ssim;
    for (std::size_t i = 0; i < 4; ++i) log.loss.distill[i] += w * rep.distill[i];
    add_into(grads, results[c].grads);
  }
  log.grad_norm = clip_global_norm(grads, cfg_.clip_norm);
  if (!std::isfinite(log.grad_norm)) throw NumericError("non-finite gradient at step " + std::to_string(log.step));
  log.lr = lr_schedule(step_, total_steps_, warmup_steps_, effective_lr(cfg_));
  std::vector<Tensor> values;
  values.reserve(params_.size());
  for (const auto& p : params_) values.push_back(p.value);
  adam_.step(values, grads, log.lr);
  ++step_;
  return log;
}

Checkpoint Trainer::checkpoint(const std::string& config_text) const {
  Checkpoint c;
  c.config_text = config_text;
  c.step = step_;
  c.adam_t = adam_.t;
  for (const auto& p : params_) c.tensors.push_back({p.name, p.value});
  if (!adam_.m.empty())
    for (std::size_t i = 0; i < params_.size(); ++i) {
      c.tensors.push_back({"adam.m." + params_[i].name, adam_.m[i]});
      c.tensors.push_back({"adam.v." + params_[i].name, adam_.v[i]});
    }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  restore_params(params_, ckpt);
  if (ckpt.step > total_steps_) throw FormatError("checkpoint step exceeds the configured budget");
  step_ = ckpt.step;
  adam_.t = ckpt.adam_t;
  adam_.m.clear();
  adam_.v.clear();
  if (ckpt.adam_t == 0) return;
  nn::ParamList ms, vs;
  for (const auto& p : params_) {
    adam_.m.push_back(Tensor::zeros(p.value.shape(), p.value.dtype()));
    adam_.v.push_back(Tensor::zeros(p.value.shape(), p.value.dtype()));
    ms.push_back({p.name, adam_.m.back()});
    vs.push_back({p.name, adam_.v.back()});
  }
  restore_params(ms, ckpt, "adam.m.");
  restore_params(vs, ckpt, "adam.v.");
}

std::string metrics_row(const StepLog& log, std::optional<double> psnr_val, std::optional<double> ssim_val) {
  std::string row = std::to_string(log.step) + "," + std::to_string(log.epoch);
  auto field = [&](double v) {
    row += ',';
    if (std::isnan(v)) return;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    row += buf;
  };
  field(log.lr);
  field(log.loss.total);
  field(log.loss.mse);
  field(log.loss.ssim);
  for (double d : log.loss.distill) field(d);
  field(psnr_val.value_or(std::nan("")));
  field(ssim_val.value_or(std::nan("")));
  return row;
}

TrainResult train(Learner& learner, const data::Dataset& train_set, const data::Dataset* val_set,
                  const data::TeacherSource* teacher, const TrainConfig& cfg, const TrainOutputs& out,
                  const Checkpoint* resume) {
  Trainer tr(learner, train_set, teacher, cfg);
  if (resume) tr.restore(*resume);
  const bool write = !out.dir.empty();
  std::ofstream csv;
  if (write) {
    std::filesystem::create_directories(out.dir);
    const auto path = out.dir / "metrics.csv";
    csv.open(path, resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw DataError("cannot write " + path.string());
    if (!resume) csv << kMetricsHeader << '\n';
  }
  TrainResult result;
  const std::size_t spe = tr.steps_per_epoch();
  while (!tr.done()) {
    StepLog log;
    try {
      log = tr.train_step();
    } catch (const NumericError&) {
      if (write) write_checkpoint(out.dir / "diverged.ckpt", tr.checkpoint(out.config_text));
      throw;
    }
    const bool epoch_end = log.step % spe == 0 || tr.done();
    const std::size_t epoch = (log.step + spe - 1) / spe;  // 1-based count of epochs touched
    std::optional<double> psnr, ssim;
    if (epoch_end && val_set && val_set->size() > 0 && cfg.eval_every > 0 &&
        (epoch % cfg.eval_every == 0 || tr.done())) {
      auto ev = eval::evaluate_reconstruction(learner.model, *val_set, cfg.val_limit);
      psnr = ev.psnr;
      ssim = ev.ssim;
      result.val_psnr.emplace_back(epoch, ev.psnr);
      result.val_ssim.emplace_back(epoch, ev.ssim);
    }
    if (write) csv << metrics_row(log, psnr, ssim) << '\n';
    if (epoch_end && out.log) {
      *out.log << "epoch " << epoch << " step " << log.step << "/" << tr.total_steps() << " loss "
               << log.loss.total;
      if (psnr) *out.log << " val_psnr " << *psnr << " val_ssim " << *ssim;
      *out.log << '\n';
    }
    if (write && epoch_end && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && !tr.done())
      write_checkpoint(out.dir / ("epoch" + std::to_string(epoch) + ".ckpt"), tr.checkpoint(out.config_text));
    result.steps.push_back(log);
  }
  if (write) {
    csv.flush();
    write_checkpoint(out.dir / "final.ckpt", tr.checkpoint(out.config_text));
  }
  return result;
}

}  // namespace huvr::trainer
