#include "huvr/data/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "huvr/error.hpp"
#include "huvr/io/binary.hpp"

namespace huvr::data {

namespace {

void write_f32(std::ostream& os, const Tensor& t) {
  const Tensor f = t.dtype() == ad::DType::f32 ? t : t.cast(ad::DType::f32);
  auto d = f.data<float>();
  os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
}

Tensor read_f32(std::istream& is, ad::Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  auto d = t.mutable_data<float>();
  if (!is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes())))
    throw FormatError("teacher file: record count mismatch (file truncated)");
  return t;
}

}  // namespace

void write_teacher_file(const std::filesystem::path& path, const TeacherFileData& data) {
  for (const auto& r : data.records)
    if (r.global.numel() != data.dim || r.patches.numel() != std::size_t{data.patch_count} * data.dim)
      throw FormatError("teacher file: record dims do not match header");
  io::write_file_atomic(path, [&](std::ostream& os) {
    os.write(kTeacherMagic, 8);
    io::write_u32(os, kTeacherVersion);
    io::write_u32(os, static_cast<std::uint32_t>(data.records.size()));
    io::write_u32(os, data.patch_count);
    io::write_u32(os, data.dim);
    for (const auto& r : data.records) {
      io::write_u64(os, r.id);
      write_f32(os, r.global);
      write_f32(os, r.patches);
    }
  });
}

TeacherFileData read_teacher_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open teacher file " + path.string());
  io::expect_magic(is, kTeacherMagic, "teacher file");
  const std::uint32_t version = io::read_u32(is);
  if (version != kTeacherVersion)
    throw FormatError("teacher file: unsupported version " + std::to_string(version));
  TeacherFileData d;
  const std::uint32_t count = io::read_u32(is);
  d.patch_count = io::read_u32(is);
  d.dim = io::read_u32(is);
  if (d.dim == 0 || d.patch_count == 0) throw FormatError("teacher file: zero dims in header");
  for (std::uint32_t i = 0; i < count; ++i) {
    TeacherFeatures f;
    try {
      f.id = io::read_u64(is);
    } catch (const FormatError&) {
      throw FormatError("teacher file: record count mismatch (header " + std::to_string(count) +
                        ", found " + std::to_string(i) + ")");
    }
    f.global = read_f32(is, {d.dim});
    f.patches = read_f32(is, {d.patch_count, d.dim});
    d.records.push_back(std::move(f));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("teacher file: record count mismatch (trailing bytes)");
  return d;
}

FileTeacher::FileTeacher(TeacherFileData data) : data_(std::move(data)) {
  for (std::size_t i = 0; i < data_.records.size(); ++i) index_[data_.records[i].id] = i;
}

FileTeacher FileTeacher::open(const std::filesystem::path& path) {
  return FileTeacher(read_teacher_file(path));
}

TeacherFeatures FileTeacher::features(const Image& img) const {
  auto it = index_.find(img.id);
  if (it == index_.end()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(img.id));
    throw DataError(std::string("teacher file has no record for image id ") + buf);
  }
  return data_.records[it->second];
}

// ---------------------------------------------------------------------------

FrozenRandomTeacher::FrozenRandomTeacher(std::uint64_t seed, std::size_t image_size,
                                         std::size_t patch_size, std::size_t dim, double gain)
    : image_size_(image_size), patch_size_(patch_size), dim_(dim), gain_(gain) {
  if (patch_size == 0 || image_size % patch_size != 0 || dim == 0)
    throw DataError("frozen teacher: image size must be divisible by patch size");
  grid_ = image_size / patch_size;
  // Orthonormal columns (dim >= bins) or rows (dim < bins): an isometry either way.
  const auto tall = static_cast<Eigen::Index>(std::max(dim, kBins));
  const auto wide = static_cast<Eigen::Index>(std::min(dim, kBins));
  std::mt19937_64 rng(seed ^ 0x7465616368657200ULL);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd g(tall, wide);
  for (Eigen::Index c = 0; c < wide; ++c)
    for (Eigen::Index r = 0; r < tall; ++r) g(r, c) = n(rng);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                      Eigen::MatrixXd::Identity(tall, wide);
  proj_ = dim >= kBins ? q : Eigen::MatrixXd(q.transpose());
}

TeacherFeatures FrozenRandomTeacher::features(const Image& img) const {
  if (img.height() != image_size_ || img.width() != image_size_)
    throw DataError("frozen teacher: image size mismatch");
  const auto px = img.pixels.to_vector();
  const auto S = static_cast<std::ptrdiff_t>(image_size_);
  const std::size_t ps = patch_size_, P = grid_ * grid_;
  const auto at = [&](std::ptrdiff_t c, std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, S - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, S - 1);
    return px[static_cast<std::size_t>((c * S + y) * S + x)];
  };
  const double B = static_cast<double>(kBins);
  Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kBins), static_cast<Eigen::Index>(P));
  for (std::ptrdiff_t y = 0; y < S; ++y)
    for (std::ptrdiff_t x = 0; x < S; ++x) {
      // Central differences from the channel with the strongest gradient.
      double energy = -1, gx = 0, gy = 0;
      for (std::ptrdiff_t c = 0; c < 3; ++c) {
        const double ax = at(c, y, x + 1) - at(c, y, x - 1), ay = at(c, y + 1, x) - at(c, y - 1, x);
        if (ax * ax + ay * ay > energy) {
          energy = ax * ax + ay * ay;
          gx = ax;
          gy = ay;
        }
      }
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += std::numbers::pi;
      const double f = std::min(theta / std::numbers::pi, 1.0) * B - 0.5;
      const auto lo = static_cast<std::ptrdiff_t>(std::floor(f));
      const double w = f - static_cast<double>(lo);
      const auto p = static_cast<Eigen::Index>(static_cast<std::size_t>(y) / ps * grid_ +
                                               static_cast<std::size_t>(x) / ps);
      const auto bins = static_cast<std::ptrdiff_t>(kBins);
      hist((lo % bins + bins) % bins, p) += energy * (1.0 - w);
      hist((lo + 1) % bins, p) += energy * w;
    }
  Eigen::VectorXd total = hist.rowwise().sum();
  total *= B / (total.sum() + 1e-6);
  Eigen::MatrixXd local = hist;
  for (Eigen::Index p = 0; p < local.cols(); ++p)
    local.col(p) *= B / (local.col(p).sum() + kPatchFloor);
  const Eigen::VectorXd gvec = gain_ * proj_ * (total.array() - 1.0).matrix();
  const Eigen::MatrixXd pmat = gain_ * proj_ * (local.array() - 1.0).matrix();  // [dim, P]
  std::vector<double> global(gvec.data(), gvec.data() + gvec.size()), patches(P * dim_);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t o = 0; o < dim_; ++o)
      patches[p * dim_ + o] = pmat(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(p));
  return {img.id, Tensor::from_doubles({dim_}, global, ad::DType::f32),
          Tensor::from_doubles({P, dim_}, patches, ad::DType::f32)};
}

TeacherFileData synthesize_teacher_file(const TeacherSource& src, const std::vector<Image>& images) {
  TeacherFileData d;
  d.patch_count = static_cast<std::uint32_t>(src.patch_count());
  d.dim = static_cast<std::uint32_t>(src.dim());
  for (const auto& im : images) d.records.push_back(src.features(im));
  return d;
}

}  // namespace huvr::data
