#include "huvr/data/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "huvr/error.hpp"

namespace huvr::data {

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.class_names = class_names;
  for (std::size_t i : idx) {
    if (i >= images.size()) throw DataError("dataset index out of range");
    d.images.push_back(images[i]);
    d.labels.push_back(labels[i]);
  }
  return d;
}

namespace {

constexpr std::array<const char*, kMaxShapeClasses> kNames = {
    "disk",     "square",       "triangle", "ring",   "plus",       "x_cross",
    "diamond",  "hbar",         "vbar",     "frame",  "ellipse_h",  "ellipse_v",
    "half_disk", "star",        "crescent", "checker"};

// Shape membership in the shape's local frame: u, v in units of the shape radius.
bool inside(std::size_t cls, double u, double v) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0: return r <= 1.0;
    case 1: return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case 2: return v <= 0.7 && v >= -0.9 + (1.6 / 0.9) * std::abs(u);
    case 3: return r <= 1.0 && r >= 0.55;
    case 4: return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    case 5: return (std::abs(u - v) <= 0.4 || std::abs(u + v) <= 0.4) && std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case 6: return std::abs(u) + std::abs(v) <= 1.0;
    case 7: return std::abs(u) <= 1.0 && std::abs(v) <= 0.35;
    case 8: return std::abs(v) <= 1.0 && std::abs(u) <= 0.35;
    case 9: return std::max(std::abs(u), std::abs(v)) <= 0.9 && std::max(std::abs(u), std::abs(v)) >= 0.55;
    case 10: return (u * u) / 1.0 + (v * v) / 0.3 <= 1.0;
    case 11: return (u * u) / 0.3 + (v * v) / 1.0 <= 1.0;
    case 12: return r <= 1.0 && v >= 0.0;
    case 13: {
      const double a = std::atan2(v, u);
      const double k = 0.5 + 0.5 * std::cos(5.0 * a);
      return r <= 0.45 + 0.55 * k;
    }
    case 14: return r <= 1.0 && std::hypot(u - 0.45, v) >= 0.75;
    case 15: return std::abs(u) <= 0.9 && std::abs(v) <= 0.9 &&
                    ((static_cast<int>(std::floor((u + 0.9) / 0.6)) + static_cast<int>(std::floor((v + 0.9) / 0.6))) % 2 == 0);
    default: return false;
  }
}

}  // namespace

const char* shape_class_name(std::size_t cls) {
  if (cls >= kMaxShapeClasses) throw DataError("shape class out of range");
  return kNames[cls];
}

Dataset synth_shapes(const ShapesSpec& spec) {
  if (spec.classes == 0 || spec.classes > kMaxShapeClasses)
    throw DataError("synth_shapes: class count must be in [1, 16]");
  if (spec.resolution < 8) throw DataError("synth_shapes: resolution too small");
  Dataset d;
  for (std::size_t c = 0; c < spec.classes; ++c) d.class_names.push_back(kNames[c]);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t R = spec.resolution;
  const double Rd = static_cast<double>(R);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t cls = i % spec.classes;
    // Background: two-colour gradient plus a low-frequency wave texture.
    std::array<double, 3> bg0, bg1, fg;
    for (auto& v : bg0) v = 0.15 + 0.7 * u01(rng);
    for (auto& v : bg1) v = 0.15 + 0.7 * u01(rng);
    const double grad_angle = 2.0 * std::numbers::pi * u01(rng);
    const double tex_fx = 1.0 + 3.0 * u01(rng), tex_fy = 1.0 + 3.0 * u01(rng);
    const double tex_phase = 2.0 * std::numbers::pi * u01(rng), tex_amp = 0.04 + 0.08 * u01(rng);
    // Foreground colour kept away from the background mean.
    do {
      for (auto& v : fg) v = u01(rng);
    } while (std::abs(fg[0] - 0.5 * (bg0[0] + bg1[0])) + std::abs(fg[1] - 0.5 * (bg0[1] + bg1[1])) +
                 std::abs(fg[2] - 0.5 * (bg0[2] + bg1[2])) <
             0.6);
    const double radius = Rd * (0.22 + 0.12 * u01(rng));
    const double cx = Rd * 0.5 + (u01(rng) - 0.5) * (Rd - 2.2 * radius);
    const double cy = Rd * 0.5 + (u01(rng) - 0.5) * (Rd - 2.2 * radius);
    const double rot = (u01(rng) - 0.5) * 0.5;  // small rotation keeps classes distinguishable
    const double cr = std::cos(rot), sr = std::sin(rot);

    std::vector<float> px(3 * R * R);
    for (std::size_t y = 0; y < R; ++y)
      for (std::size_t x = 0; x < R; ++x) {
        const double ny = (static_cast<double>(y) + 0.5) / Rd, nx = (static_cast<double>(x) + 0.5) / Rd;
        const double t = 0.5 + 0.5 * ((nx - 0.5) * std::cos(grad_angle) + (ny - 0.5) * std::sin(grad_angle)) * 1.4;
        const double tex = tex_amp * std::sin(2.0 * std::numbers::pi * (tex_fx * nx + tex_fy * ny) + tex_phase);
        // 3x3 supersampled coverage for anti-aliased edges.
        int hits = 0;
        for (int sy = 0; sy < 3; ++sy)
          for (int sx = 0; sx < 3; ++sx) {
            const double py = static_cast<double>(y) + (sy + 0.5) / 3.0, pxx = static_cast<double>(x) + (sx + 0.5) / 3.0;
            const double du = (pxx - cx) / radius, dv = (py - cy) / radius;
            if (inside(cls, cr * du + sr * dv, -sr * du + cr * dv)) ++hits;
          }
        const double cov = hits / 9.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double b = std::clamp(bg0[c] * (1.0 - t) + bg1[c] * t + tex, 0.0, 1.0);
          px[c * R * R + y * R + x] = static_cast<float>(b * (1.0 - cov) + fg[c] * cov);
        }
      }
    d.images.push_back(make_image(Tensor::from({3, R, R}, std::move(px))));
    d.labels.push_back(static_cast<int>(cls));
  }
  return d;
}

Dataset load_image_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("no class directories under " + root.string());
  Dataset d;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    d.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c]))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto ext = f.extension().string();
      if (ext != ".png" && ext != ".PNG" && ext != ".ppm" && ext != ".PPM") continue;
      d.images.push_back(load_image(f));
      d.labels.push_back(static_cast<int>(c));
    }
  }
  if (d.images.empty()) throw DataError("no PNG/PPM images under " + root.string());
  for (const auto& im : d.images)
    if (im.pixels.shape() != d.images[0].pixels.shape())
      throw DataError("images under " + root.string() + " differ in size");
  return d;
}

void split(const Dataset& all, std::size_t n_train, std::uint64_t seed, Dataset& train, Dataset& val) {
  if (n_train > all.size()) throw DataError("split: n_train exceeds dataset size");
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the permutation does not depend on std::shuffle.
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  train = all.subset({idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)});
  val = all.subset({idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end()});
}

}  // namespace huvr::data
