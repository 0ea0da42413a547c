#include "huvr/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "huvr/autodiff/ops.hpp"
#include "internal.hpp"

namespace huvr::ad {

using detail::Access;

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

namespace detail {

Tensor Access::make(Shape shape, DType dtype) {
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  Tensor t;
  t.storage_ = std::make_shared<Storage>();
  const std::size_t n = numel_of(shape);
  if (dtype == DType::f32)
    t.storage_->buffer = std::vector<float>(n, 0.0f);
  else
    t.storage_->buffer = std::vector<double>(n, 0.0);
  t.shape_ = std::move(shape);
  t.dtype_ = dtype;
  return t;
}

Tensor Access::view(const Tensor& src, Shape shape) {
  Tensor t;
  t.storage_ = src.storage_;
  t.shape_ = std::move(shape);
  t.dtype_ = src.dtype_;
  return t;
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw DTypeError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " and " +
                     dtype_name(b.dtype()));
}

Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  std::shared_ptr<TapeState> tape;
  for (const Tensor* in : inputs) {
    const auto& t = Access::tape(*in);
    if (!t) continue;
    if (tape && tape != t) throw TapeError("inputs belong to different tapes");
    tape = t;
  }
  if (!tape) return out;
  if (tape->consumed) throw TapeError("tape already consumed by backward()");
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) node.inputs.push_back(in->recorded() ? in->node() : -1);
  node.backward = std::move(fn);
  node.shape = out.shape();
  node.dtype = out.dtype();
  tape->nodes.push_back(std::move(node));
  Access::attach(out, tape, static_cast<int>(tape->nodes.size() - 1));
  return out;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, DType dtype) { return Access::make(std::move(shape), dtype); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = Access::make(std::move(shape), dtype);
  detail::dispatch(dtype, [&]<class T>() {
    T* p = Access::raw<T>(t);
    std::fill(p, p + t.numel(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  if (numel_of(shape) != values.size())
    throw ShapeError("buffer length " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  Tensor t = Access::make(std::move(shape), DType::f32);
  t.storage_->buffer = std::move(values);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel_of(shape) != values.size())
    throw ShapeError("buffer length " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  Tensor t = Access::make(std::move(shape), DType::f64);
  t.storage_->buffer = std::move(values);
  return t;
}

Tensor Tensor::from_doubles(Shape shape, std::span<const double> values, DType dtype) {
  if (numel_of(shape) != values.size())
    throw ShapeError("buffer length does not match shape " + to_string(shape));
  Tensor t = Access::make(std::move(shape), dtype);
  detail::dispatch(dtype, [&]<class T>() {
    T* p = Access::raw<T>(t);
    for (std::size_t i = 0; i < values.size(); ++i) p[i] = static_cast<T>(values[i]);
  });
  return t;
}

std::size_t Tensor::dim(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

template <class T>
std::span<const T> Tensor::data() const {
  if (!storage_) throw Error("data() on undefined tensor");
  const auto* v = std::get_if<std::vector<T>>(&storage_->buffer);
  if (!v) throw DTypeError(std::string("tensor holds ") + dtype_name(dtype_));
  return {v->data(), numel()};
}

template <class T>
std::span<T> Tensor::mutable_data() {
  if (!storage_) throw Error("mutable_data() on undefined tensor");
  auto* v = std::get_if<std::vector<T>>(&storage_->buffer);
  if (!v) throw DTypeError(std::string("tensor holds ") + dtype_name(dtype_));
  return {v->data(), numel()};
}

template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;
template std::span<float> Tensor::mutable_data<float>();
template std::span<double> Tensor::mutable_data<double>();

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel());
  detail::dispatch(dtype_, [&]<class T>() {
    const T* p = Access::raw<T>(*this);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(p[i]);
  });
  return out;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return to_vector()[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank mismatch for " + to_string(shape_));
  std::size_t off = 0;
  std::size_t k = 0;
  for (std::size_t i : index) {
    if (i >= shape_[k]) throw ShapeError("index out of range for " + to_string(shape_));
    off = off * shape_[k] + i;
    ++k;
  }
  return detail::dispatch(dtype_, [&]<class T>() {
    return static_cast<double>(Access::raw<T>(*this)[off]);
  });
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_.reset();
  t.node_ = -1;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t = Access::make(shape_, dtype_);
  t.storage_->buffer = storage_->buffer;
  return t;
}

Tensor Tensor::cast(DType dtype) const {
  return from_doubles(shape_, to_vector(), dtype);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : state_(std::make_shared<detail::TapeState>()) {}

std::size_t Tape::size() const { return state_->nodes.size(); }

bool Tape::consumed() const { return state_->consumed; }

Tensor Tape::watch(const Tensor& leaf) {
  if (!leaf.defined()) throw TapeError("cannot watch an undefined tensor");
  if (state_->consumed) throw TapeError("tape already consumed by backward()");
  if (leaf.recorded()) throw TapeError("watch() expects an unrecorded leaf tensor");
  const void* key = leaf.storage_id();
  if (auto it = state_->watched.find(key); it != state_->watched.end()) {
    Tensor t = leaf.detached();
    Access::attach(t, state_, it->second);
    return t;
  }
  detail::Node node;
  node.shape = leaf.shape();
  node.dtype = leaf.dtype();
  state_->nodes.push_back(std::move(node));
  const int id = static_cast<int>(state_->nodes.size() - 1);
  state_->watched.emplace(key, id);
  Tensor t = leaf.detached();
  Access::attach(t, state_, id);
  return t;
}

GradMap Tape::backward(const Tensor& loss) {
  if (state_->consumed) throw TapeError("tape already consumed by backward()");
  if (!loss.recorded() || Access::tape(loss) != state_)
    throw TapeError("loss is not recorded on this tape");
  if (loss.numel() != 1) throw TapeError("backward() requires a scalar loss, got shape " +
                                         to_string(loss.shape()));
  auto& nodes = state_->nodes;
  GradMap out;
  out.grads_.resize(nodes.size());
  out.shapes_.reserve(nodes.size());
  out.dtypes_.reserve(nodes.size());
  for (const auto& n : nodes) {
    out.shapes_.push_back(n.shape);
    out.dtypes_.push_back(n.dtype);
  }
  out.grads_[static_cast<std::size_t>(loss.node())] = Tensor::ones(loss.shape(), loss.dtype());

  for (int i = loss.node(); i >= 0; --i) {
    auto& node = nodes[static_cast<std::size_t>(i)];
    Tensor& g = out.grads_[static_cast<std::size_t>(i)];
    if (!g.defined() || !node.backward) continue;
    std::vector<Tensor> in_grads = node.backward(g);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const int src = node.inputs[k];
      if (src < 0 || k >= in_grads.size() || !in_grads[k].defined()) continue;
      Tensor& acc = out.grads_[static_cast<std::size_t>(src)];
      Tensor contrib = reshape(in_grads[k].detached(), nodes[static_cast<std::size_t>(src)].shape);
      acc = acc.defined() ? add(acc, contrib) : contrib;
    }
  }
  state_->consumed = true;
  for (auto& n : nodes) n.backward = nullptr;  // drop saved activations
  out.tape_ = state_;
  return out;
}

// ---------------------------------------------------------------------------
// GradMap

Tensor GradMap::grad(const Tensor& t) const {
  if (!t.recorded() || Access::tape(t) != tape_)
    throw TapeError("tensor was not recorded on the tape that produced these gradients");
  const auto id = static_cast<std::size_t>(t.node());
  if (grads_[id].defined()) return grads_[id];
  return Tensor::zeros(shapes_[id], dtypes_[id]);
}

bool GradMap::has_param(const Tensor& param) const {
  return tape_ && tape_->watched.count(param.storage_id()) > 0;
}

Tensor GradMap::param_grad(const Tensor& param) const {
  auto it = tape_->watched.find(param.storage_id());
  if (it == tape_->watched.end()) return Tensor::zeros(param.shape(), param.dtype());
  const auto id = static_cast<std::size_t>(it->second);
  if (grads_[id].defined()) return grads_[id];
  return Tensor::zeros(shapes_[id], dtypes_[id]);
}

}  // namespace huvr::ad
