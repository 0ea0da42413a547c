#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "huvr/data/dataset.hpp"
#include "huvr/hypernet/config.hpp"
#include "huvr/trainer/trainer.hpp"

namespace huvr::eval {

/// One ladder row to train: model config, recipe and init seed.
struct LadderEntry {
  hypernet::HuvrConfig model;
  trainer::TrainConfig train;
  std::uint64_t init_seed = 0;
};

struct LadderRow {
  hypernet::Variant variant{};
  std::size_t d_t = 0;  // 0 when the variant has no compression
  std::size_t params = 0;
  double psnr = 0, ssim = 0;
  double seconds = 0;
};

struct DirectionalCheck {
  std::string name;
  double lhs = 0, rhs = 0;
  double margin = 0;  // pass when lhs >= rhs + margin
  bool pass = false;
};

struct LadderReport {
  std::vector<LadderRow> rows;
  std::vector<DirectionalCheck> checks;
  bool all_pass() const;
};

/// `base` with only the variant switched, for each requested variant (the whole
/// ladder by default).
std::vector<LadderEntry> ladder_entries(const hypernet::HuvrConfig& base, const trainer::TrainConfig& train,
                                        std::uint64_t init_seed,
                                        const std::vector<hypernet::Variant>& variants = {});

/// Trains every entry on `train_set` and scores reconstructions of `eval_set`.
/// Throws ConfigError if the entries do not share one budget (steps, batch, seed,
/// recipe, init seed). Checks, when both rows are present:
///   patchwise_copy >= second_layer_only + copy_margin_db
///   patchwise_global >= patchwise_copy
///   patchwise_global >= plus_compression
LadderReport run_ablation_ladder(const std::vector<LadderEntry>& entries, const data::Dataset& train_set,
                                 const data::Dataset& eval_set, double copy_margin_db = 3.0,
                                 std::ostream* log = nullptr);

/// variant,d_t,params,psnr,ssim,seconds
void write_ladder_csv(std::ostream& os, const LadderReport& report);
/// Table plus one PASS/FAIL line per check.
std::string ladder_summary(const LadderReport& report);

}  // namespace huvr::eval
