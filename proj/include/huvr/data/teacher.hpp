#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "huvr/data/image.hpp"

namespace huvr::data {

/// Frozen target features for one image (f32, never trained).
struct TeacherFeatures {
  std::uint64_t id = 0;
  Tensor global;   // [dim]
  Tensor patches;  // [P, dim]
};

class TeacherSource {
 public:
  virtual ~TeacherSource() = default;
  virtual std::size_t patch_count() const = 0;
  virtual std::size_t dim() const = 0;
  /// Features for `img`; throws DataError when unavailable.
  virtual TeacherFeatures features(const Image& img) const = 0;
};

inline constexpr char kTeacherMagic[] = "HUVRTEAC";
inline constexpr std::uint32_t kTeacherVersion = 1;

struct TeacherFileData {
  std::uint32_t patch_count = 0;
  std::uint32_t dim = 0;
  std::vector<TeacherFeatures> records;
};

/// Layout (little-endian): magic[8], u32 version, u32 count, u32 P, u32 dim, then per
/// record u64 id, f32 global[dim], f32 patches[P*dim]. Written to a temp file and renamed.
void write_teacher_file(const std::filesystem::path& path, const TeacherFileData& data);
/// Throws FormatError on bad magic/version or a record count that disagrees with the header.
TeacherFileData read_teacher_file(const std::filesystem::path& path);

class FileTeacher : public TeacherSource {
 public:
  explicit FileTeacher(TeacherFileData data);
  static FileTeacher open(const std::filesystem::path& path);

  std::size_t patch_count() const override { return data_.patch_count; }
  std::size_t dim() const override { return data_.dim; }
  TeacherFeatures features(const Image& img) const override;
  const TeacherFileData& data() const { return data_; }

 private:
  TeacherFileData data_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Deterministic stand-in teacher built on oriented gradient energy. Each pixel
/// votes its squared gradient magnitude (strongest channel) into 16 soft unsigned
/// orientation bins. Histograms are normalized per patch and over the whole image
/// (global), centred, scaled by `gain`, and mapped into `dim` by a seeded random
/// isometry. Features follow shape outlines, so they carry class structure on
/// synthetic shapes. The default gain keeps distillation from swamping the pixel
/// loss under the recipe's tight gradient clip.
/// Output depends on (seed, pixels) only; the image id is carried through.
class FrozenRandomTeacher : public TeacherSource {
 public:
  FrozenRandomTeacher(std::uint64_t seed, std::size_t image_size, std::size_t patch_size,
                      std::size_t dim, double gain = 0.3);
  std::size_t patch_count() const override { return grid_ * grid_; }
  std::size_t dim() const override { return dim_; }
  TeacherFeatures features(const Image& img) const override;

 private:
  static constexpr std::size_t kBins = 16;
  static constexpr double kPatchFloor = 0.5;  // keeps flat patches near zero
  std::size_t image_size_, patch_size_, grid_ = 0, dim_;
  double gain_;
  Eigen::MatrixXd proj_;  // [dim, 16]
};

/// Materializes features for every image (used by `teacher synth`).
TeacherFileData synthesize_teacher_file(const TeacherSource& src, const std::vector<Image>& images);

}  // namespace huvr::data
