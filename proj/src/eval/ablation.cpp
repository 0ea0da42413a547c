#include "huvr/eval/ablation.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>

#include "huvr/error.hpp"
#include "huvr/eval/metrics.hpp"

namespace huvr::eval {

using hypernet::Variant;

bool LadderReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::vector<LadderEntry> ladder_entries(const hypernet::HuvrConfig& base, const trainer::TrainConfig& train,
                                        std::uint64_t init_seed, const std::vector<Variant>& variants) {
  std::vector<LadderEntry> out;
  const std::vector<Variant> vs = variants.empty() ? std::vector<Variant>(hypernet::kLadder.begin(), hypernet::kLadder.end())
                                                   : variants;
  for (Variant v : vs) {
    LadderEntry e{base, train, init_seed};
    e.model.variant = v;
    out.push_back(e);
  }
  return out;
}

namespace {

void check_budget(const LadderEntry& a, const LadderEntry& b) {
  const auto& x = a.train;
  const auto& y = b.train;
  auto fail = [&](const char* what) {
    throw ConfigError(std::string("ablation ladder: budget mismatch in ") + what + " between " +
                      hypernet::variant_name(a.model.variant) + " and " + hypernet::variant_name(b.model.variant));
  };
  if (x.max_steps != y.max_steps || x.epochs != y.epochs) fail("steps");
  if (x.batch_size != y.batch_size) fail("batch size");
  if (x.seed != y.seed || a.init_seed != b.init_seed) fail("seed");
  if (x.augment != y.augment) fail("augmentation");
  if (x.lr_base != y.lr_base || x.weight_decay != y.weight_decay || x.clip_norm != y.clip_norm ||
      x.warmup_epochs != y.warmup_epochs)
    fail("recipe");
  if (a.model.image_size != b.model.image_size) fail("image size");
}

const LadderRow* find(const LadderReport& r, Variant v) {
  for (const auto& row : r.rows)
    if (row.variant == v) return &row;
  return nullptr;
}

}  // namespace

LadderReport run_ablation_ladder(const std::vector<LadderEntry>& entries, const data::Dataset& train_set,
                                 const data::Dataset& eval_set, double copy_margin_db, std::ostream* log) {
  if (entries.empty()) throw ConfigError("ablation ladder: no variants");
  for (std::size_t i = 1; i < entries.size(); ++i) check_budget(entries[0], entries[i]);
  LadderReport report;
  for (const auto& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    auto learner = trainer::Learner::init(e.model, e.init_seed);
    trainer::train(learner, train_set, nullptr, nullptr, e.train);
    auto ev = evaluate_reconstruction(learner.model, eval_set);
    LadderRow row;
    row.variant = e.model.variant;
    row.d_t = hypernet::has_compression(row.variant) ? e.model.d_t : 0;
    row.params = nn::count_params(learner.model.params());
    row.psnr = ev.psnr;
    row.ssim = ev.ssim;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) *log << hypernet::variant_name(row.variant) << ": psnr " << row.psnr << " (" << row.seconds << " s)\n";
    report.rows.push_back(row);
  }
  auto add = [&](const char* name, Variant hi, Variant lo, double margin) {
    const LadderRow *a = find(report, hi), *b = find(report, lo);
    if (!a || !b) return;
    report.checks.push_back({name, a->psnr, b->psnr, margin, a->psnr >= b->psnr + margin});
  };
  add("patchwise_copy >> second_layer_only", Variant::patchwise_copy, Variant::second_layer_only, copy_margin_db);
  add("patchwise_global >= patchwise_copy", Variant::patchwise_global, Variant::patchwise_copy, 0.0);
  add("plus_compression <= patchwise_global", Variant::patchwise_global, Variant::plus_compression, 0.0);
  return report;
}

void write_ladder_csv(std::ostream& os, const LadderReport& report) {
  os << "variant,d_t,params,psnr,ssim,seconds\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.6f,%.2f\n", hypernet::variant_name(r.variant), r.d_t, r.params,
                  r.psnr, r.ssim, r.seconds);
    os << buf;
  }
}

std::string ladder_summary(const LadderReport& report) {
  std::string s;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %5s %9s %8s %7s\n", "variant", "d_t", "params", "psnr", "ssim");
  s += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-24s %5s %9zu %8.2f %7.4f\n", hypernet::variant_name(r.variant),
                  r.d_t ? std::to_string(r.d_t).c_str() : "-", r.params, r.psnr, r.ssim);
    s += buf;
  }
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof buf, "%s %s (%.2f vs %.2f, margin %.1f dB)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                  c.lhs, c.rhs, c.margin);
    s += buf;
  }
  return s;
}

}  // namespace huvr::eval
