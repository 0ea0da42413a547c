#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "huvr/nn/layers.hpp"

namespace huvr::trainer {

inline constexpr char kCheckpointMagic[] = "HUVRCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic[8], u32 version, string config (key=value text), u64 step,
/// u64 optimizer step count, u32 tensor count, then (string name, tensor record)
/// per tensor.
struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  std::uint64_t adam_t = 0;
  nn::ParamList tensors;

  /// nullptr when absent.
  const ad::Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params` in place. Throws FormatError when a name is
/// missing or a shape/dtype disagrees.
void restore_params(const nn::ParamList& params, const Checkpoint& ckpt, const std::string& prefix = "");

}  // namespace huvr::trainer
