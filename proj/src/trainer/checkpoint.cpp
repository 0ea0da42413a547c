#include "huvr/trainer/checkpoint.hpp"

#include <fstream>

#include "huvr/autodiff/serialize.hpp"
#include "huvr/error.hpp"
#include "huvr/io/binary.hpp"

namespace huvr::trainer {

const ad::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, [&](std::ostream& os) {
    os.write(kCheckpointMagic, 8);
    io::write_u32(os, kCheckpointVersion);
    io::write_string(os, ckpt.config_text);
    io::write_u64(os, ckpt.step);
    io::write_u64(os, ckpt.adam_t);
    io::write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
      io::write_string(os, t.name);
      ad::write_tensor(os, t.value);
    }
  });
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  io::expect_magic(is, kCheckpointMagic, "checkpoint");
  const std::uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_text = io::read_string(is);
  c.step = io::read_u64(is);
  c.adam_t = io::read_u64(is);
  const std::uint32_t n = io::read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = io::read_string(is, 4096);
    c.tensors.push_back({std::move(name), ad::read_tensor(is)});
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void restore_params(const nn::ParamList& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& p : params) {
    const std::string name = prefix + p.name;
    const ad::Tensor* src = ckpt.find(name);
    if (!src) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (src->shape() != p.value.shape() || src->dtype() != p.value.dtype())
      throw FormatError("checkpoint: tensor '" + name + "' is " + ad::to_string(src->shape()) + " " +
                        ad::dtype_name(src->dtype()) + ", expected " + ad::to_string(p.value.shape()) +
                        " " + ad::dtype_name(p.value.dtype()));
    ad::Tensor dst = p.value;
    if (dst.dtype() == ad::DType::f32) {
      auto s = src->data<float>();
      std::copy(s.begin(), s.end(), dst.mutable_data<float>().begin());
    } else {
      auto s = src->data<double>();
      std::copy(s.begin(), s.end(), dst.mutable_data<double>().begin());
    }
  }
}

}  // namespace huvr::trainer
