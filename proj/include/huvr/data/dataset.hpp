#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "huvr/data/image.hpp"

namespace huvr::data {

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;  // -1 when unlabeled
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  /// Subset by index list, in the given order.
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

struct ShapesSpec {
  std::size_t count = 1000;
  std::size_t resolution = 32;
  std::size_t classes = 8;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxShapeClasses = 16;
const char* shape_class_name(std::size_t cls);

/// Procedural coloured shapes on smooth textured backgrounds. Image i has label
/// i mod classes, so classes are balanced within one; the output is a pure
/// function of the spec.
Dataset synth_shapes(const ShapesSpec& spec);

/// `root/<class>/<image>` (PNG or PPM); classes sorted by name, files by name.
/// Images must all have the same size.
Dataset load_image_directory(const std::filesystem::path& root);

/// Deterministic split: shuffles indices with `seed`, first `n_train` go to train.
void split(const Dataset& all, std::size_t n_train, std::uint64_t seed, Dataset& train, Dataset& val);

}  // namespace huvr::data
