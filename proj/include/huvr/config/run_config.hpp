#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "huvr/data/dataset.hpp"
#include "huvr/data/teacher.hpp"
#include "huvr/eval/probe.hpp"
#include "huvr/hypernet/config.hpp"
#include "huvr/trainer/trainer.hpp"

namespace huvr::config {

enum class ValueType { integer, real, boolean, text, choice };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string fallback;  // default, already canonical
  std::vector<std::string> choices;
  std::string help;
};

/// Every accepted key, sorted by name.
const std::vector<KeySpec>& schema();

/// Flat key=value run configuration. Every key is always present; values are kept in
/// canonical form (integers in decimal, reals as %.17g, booleans as true/false),
/// so canonical_text() of an echoed config parses back to the same values.
class RunConfig {
 public:
  /// Schema defaults.
  RunConfig();

  /// Lines of `key = value`; '#' starts a comment. Unknown keys, repeated keys and
  /// malformed values throw ConfigError naming `origin` and the line.
  void merge_text(const std::string& text, const std::string& origin = "<text>");
  void merge_file(const std::filesystem::path& path);
  /// "key=value" as given to --set.
  void set_assignment(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Sorted `key=value` lines.
  std::string canonical_text() const;
  static RunConfig parse(const std::string& text);

  bool operator==(const RunConfig& o) const { return values_ == o.values_; }

 private:
  std::map<std::string, std::string> values_;
};

hypernet::HuvrConfig model_config(const RunConfig& rc);
/// Recipe from train.*; the batch/shuffle seed is the top-level `seed`.
trainer::TrainConfig train_config(const RunConfig& rc);
eval::ProbeConfig probe_config(const RunConfig& rc);

struct DataSplit {
  data::Dataset train, val;
};

/// data.source=shapes: synthetic shapes split by data.n_train. data.source=dir: the
/// directory at data.dir, split the same way unless data.val_dir names a separate
/// validation directory. Throws DataError with the path when a directory is missing.
DataSplit load_data(const RunConfig& rc);

/// nullptr when teacher.source=none.
std::unique_ptr<data::TeacherSource> make_teacher(const RunConfig& rc);

}  // namespace huvr::config
