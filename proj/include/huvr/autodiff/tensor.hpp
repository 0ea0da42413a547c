#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace huvr::ad {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);
const char* dtype_name(DType dtype);

namespace detail {
struct Storage;
struct TapeState;
struct Access;
}  // namespace detail

/// Dense row-major array. Values are immutable once built; the only sanctioned
/// in-place mutation is the optimizer writing parameters through mutable_data().
/// A tensor produced from recorded inputs carries a handle to its tape node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor ones(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);
  /// Converts the given values to `dtype`.
  static Tensor from_doubles(Shape shape, std::span<const double> values, DType dtype);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  /// Extent along `axis`; negative axes count from the back.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return numel_of(shape_); }
  DType dtype() const { return dtype_; }

  template <class T>
  std::span<const T> data() const;
  template <class T>
  std::span<T> mutable_data();

  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  Tensor detached() const;
  Tensor clone() const;
  Tensor cast(DType dtype) const;

  bool recorded() const { return tape_ != nullptr; }
  int node() const { return node_; }
  const void* storage_id() const { return storage_.get(); }

 private:
  friend struct detail::Access;
  std::shared_ptr<detail::Storage> storage_;
  Shape shape_;
  DType dtype_ = DType::f32;
  std::shared_ptr<detail::TapeState> tape_;
  int node_ = -1;
};

/// Gradients produced by one backward pass.
class GradMap {
 public:
  /// Gradient of a tensor recorded on the originating tape; zeros when unreachable.
  Tensor grad(const Tensor& t) const;
  /// Gradient of a parameter watched on the tape, looked up by storage identity.
  Tensor param_grad(const Tensor& param) const;
  bool has_param(const Tensor& param) const;

 private:
  friend class Tape;
  std::shared_ptr<const detail::TapeState> tape_;
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
  std::vector<DType> dtypes_;
};

/// Append-only record of one forward pass. Created per pass, consumed by backward().
class Tape {
 public:
  Tape();

  /// Registers `leaf` (typically a parameter) as a differentiable input. The
  /// result shares storage with `leaf`; repeated calls return the same node.
  Tensor watch(const Tensor& leaf);

  GradMap backward(const Tensor& loss);

  std::size_t size() const;
  bool consumed() const;

 private:
  std::shared_ptr<detail::TapeState> state_;
};

/// Resolves parameters for one forward pass: watched on `tape` when given,
/// passed through unchanged otherwise (evaluation mode).
class Binder {
 public:
  Binder() = default;
  explicit Binder(Tape* tape) : tape_(tape) {}
  Tensor operator()(const Tensor& param) const { return tape_ ? tape_->watch(param) : param; }
  bool recording() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
};

}  // namespace huvr::ad
