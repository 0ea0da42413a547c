#include "huvr/autodiff/serialize.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "huvr/error.hpp"
#include "huvr/io/binary.hpp"

namespace huvr::ad {

static_assert(std::endian::native == std::endian::little, "raw buffers assume a little-endian host");

void write_tensor(std::ostream& os, const Tensor& t) {
  if (!t.defined()) throw Error("write_tensor: undefined tensor");
  io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) io::write_u64(os, e);
  io::write_u8(os, static_cast<std::uint8_t>(t.dtype()));
  if (t.dtype() == DType::f32) {
    auto d = t.data<float>();
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  } else {
    auto d = t.data<double>();
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  }
  if (!os) throw FormatError("write_tensor: stream write failed");
}

Tensor read_tensor(std::istream& is) {
  const std::uint32_t rank = io::read_u32(is);
  if (rank > 16) throw FormatError("read_tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto& e : shape) {
    const std::uint64_t v = io::read_u64(is);
    if (v == 0 || v > (std::uint64_t{1} << 34)) throw FormatError("read_tensor: bad extent");
    total *= v;
    if (total > (std::uint64_t{1} << 34)) throw FormatError("read_tensor: tensor too large");
    e = static_cast<std::size_t>(v);
  }
  const std::uint8_t tag = io::read_u8(is);
  if (tag > 1) throw FormatError("read_tensor: unknown dtype tag " + std::to_string(tag));
  Tensor t = Tensor::zeros(shape, static_cast<DType>(tag));
  if (tag == 0) {
    auto d = t.mutable_data<float>();
    is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  } else {
    auto d = t.mutable_data<double>();
    is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  }
  if (!is) throw FormatError("read_tensor: truncated buffer");
  return t;
}

}  // namespace huvr::ad
