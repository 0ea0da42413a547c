#pragma once

#include <iosfwd>

#include "huvr/autodiff/tensor.hpp"

namespace huvr::ad {

// Record: rank u32, extents u64 each, dtype tag u8 (0 = f32, 1 = f64), raw
// little-endian buffer.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace huvr::ad
