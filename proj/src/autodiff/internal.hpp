#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <variant>
#include <vector>

#include "huvr/autodiff/tensor.hpp"
#include "huvr/error.hpp"

namespace huvr::ad::detail {

struct Storage {
  std::variant<std::vector<float>, std::vector<double>> buffer;
};

/// Maps an upstream gradient to one gradient per recorded input (undefined = none).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node {
  std::vector<int> inputs;  // -1 for inputs not on the tape
  BackwardFn backward;
  Shape shape;
  DType dtype;
};

struct TapeState {
  std::vector<Node> nodes;
  std::unordered_map<const void*, int> watched;
  bool consumed = false;
};

struct Access {
  static Tensor make(Shape shape, DType dtype);
  static Tensor view(const Tensor& src, Shape shape);  // shares storage, untaped

  template <class T>
  static T* raw(Tensor& t) {
    return std::get<std::vector<T>>(t.storage_->buffer).data();
  }
  template <class T>
  static const T* raw(const Tensor& t) {
    return std::get<std::vector<T>>(t.storage_->buffer).data();
  }

  static const std::shared_ptr<TapeState>& tape(const Tensor& t) { return t.tape_; }
  static void attach(Tensor& t, std::shared_ptr<TapeState> tape, int node) {
    t.tape_ = std::move(tape);
    t.node_ = node;
  }
  static const std::shared_ptr<Storage>& storage(const Tensor& t) { return t.storage_; }
};

/// Records `out` on the tape shared by the recorded inputs. Returns `out` unchanged
/// when no input is recorded.
Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn);

template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op);

}  // namespace huvr::ad::detail
