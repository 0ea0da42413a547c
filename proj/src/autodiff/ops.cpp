#include "huvr/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "internal.hpp"
#include "kernels.hpp"

namespace huvr::ad {

using detail::Access;
using detail::dispatch;
using detail::record;

namespace {

std::size_t norm_axis(std::ptrdiff_t axis, std::size_t rank, const char* op) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis);
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

Shape binary_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw Error(std::string(op) + ": undefined operand");
  detail::check_same_dtype(a, b, op);
  if (a.shape() == b.shape()) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

template <class T, class F>
void binary_kernel(const T* a, std::size_t na, const T* b, std::size_t nb, T* out, std::size_t n,
                   F f) {
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  } else if (na == n) {
    for (std::size_t off = 0; off < n; off += nb)
      for (std::size_t j = 0; j < nb; ++j) out[off + j] = f(a[off + j], b[j]);
  } else {
    for (std::size_t off = 0; off < n; off += na)
      for (std::size_t j = 0; j < na; ++j) out[off + j] = f(a[j], b[off + j]);
  }
}

template <class F>
Tensor binary_values(const Tensor& a, const Tensor& b, const char* op, F f) {
  Tensor out = Access::make(binary_shape(a, b, op), a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    binary_kernel(Access::raw<T>(a), a.numel(), Access::raw<T>(b), b.numel(), Access::raw<T>(out),
                  out.numel(), f);
  });
  return out;
}

// Sums the leading repeats of `g` down to `shape`, which is a suffix of g's shape.
Tensor reduce_to(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out = Access::make(shape, g.dtype());
  const std::size_t ns = out.numel();
  dispatch(g.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(g);
    T* dst = Access::raw<T>(out);
    for (std::size_t off = 0; off < g.numel(); off += ns)
      for (std::size_t j = 0; j < ns; ++j) dst[j] += src[off + j];
  });
  return out;
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd) {
  if (!x.defined()) throw Error("unary op on undefined tensor");
  Tensor out = Access::make(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T* dst = Access::raw<T>(out);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) dst[i] = fwd(src[i]);
  });
  if (!x.recorded()) return out;
  Tensor xd = x.detached();
  Tensor yd = out;
  return record(out, {&x}, [xd, yd, bwd](const Tensor& g) {
    Tensor gx = Access::make(g.shape(), g.dtype());
    dispatch(g.dtype(), [&]<class T>() {
      const T* xs = Access::raw<T>(xd);
      const T* ys = Access::raw<T>(yd);
      const T* gs = Access::raw<T>(g);
      T* out_g = Access::raw<T>(gx);
      const std::size_t n = g.numel();
      for (std::size_t i = 0; i < n; ++i) out_g[i] = bwd(xs[i], ys[i], gs[i]);
    });
    return std::vector<Tensor>{gx};
  });
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Walks `out_shape` in row-major order; src offset advances by `src_strides`.
template <class T, class Op>
void strided_walk(const Shape& out_shape, const std::vector<std::size_t>& src_strides, T* out,
                  const T* src, Op op) {
  const std::size_t r = out_shape.size();
  if (r == 0) {
    op(out[0], src[0]);
    return;
  }
  const std::size_t inner = out_shape[r - 1];
  const std::size_t s_inner = src_strides[r - 1];
  const std::size_t total = numel_of(out_shape);
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t src_off = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    T* d = out + o * inner;
    const T* s = src + src_off;
    for (std::size_t j = 0; j < inner; ++j) op(d[j], s[j * s_inner]);
    for (std::ptrdiff_t ax = static_cast<std::ptrdiff_t>(r) - 2; ax >= 0; --ax) {
      const auto a = static_cast<std::size_t>(ax);
      ++idx[a];
      src_off += src_strides[a];
      if (idx[a] < out_shape[a]) break;
      src_off -= src_strides[a] * out_shape[a];
      idx[a] = 0;
    }
  }
}

// Same traversal as strided_walk but accumulates out-of-place: dst[src_off] += g[o].
template <class T>
void strided_scatter_add(const Shape& g_shape, const std::vector<std::size_t>& dst_strides,
                         const T* g, T* dst) {
  const std::size_t r = g_shape.size();
  if (r == 0) {
    dst[0] += g[0];
    return;
  }
  const std::size_t inner = g_shape[r - 1];
  const std::size_t s_inner = dst_strides[r - 1];
  const std::size_t outer = numel_of(g_shape) / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    const T* s = g + o * inner;
    T* d = dst + off;
    for (std::size_t j = 0; j < inner; ++j) d[j * s_inner] += s[j];
    for (std::ptrdiff_t ax = static_cast<std::ptrdiff_t>(r) - 2; ax >= 0; --ax) {
      const auto a = static_cast<std::size_t>(ax);
      ++idx[a];
      off += dst_strides[a];
      if (idx[a] < g_shape[a]) break;
      off -= dst_strides[a] * g_shape[a];
      idx[a] = 0;
    }
  }
}

Tensor expand_along(const Tensor& g, const Shape& full_shape, std::size_t axis) {
  const AxisSplit s = split_at(full_shape, axis);
  Tensor out = Access::make(full_shape, g.dtype());
  dispatch(g.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(g);
    T* dst = Access::raw<T>(out);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        std::copy_n(src + o * s.inner, s.inner, dst + (o * s.len + l) * s.inner);
  });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "add", [](auto x, auto y) { return x + y; });
  if (!a.recorded() && !b.recorded()) return out;
  Shape sa = a.shape(), sb = b.shape();
  return record(out, {&a, &b}, [sa, sb](const Tensor& g) {
    return std::vector<Tensor>{reduce_to(g, sa), reduce_to(g, sb)};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "sub", [](auto x, auto y) { return x - y; });
  if (!a.recorded() && !b.recorded()) return out;
  Shape sa = a.shape(), sb = b.shape();
  const bool need_b = b.recorded();
  return record(out, {&a, &b}, [sa, sb, need_b](const Tensor& g) {
    std::vector<Tensor> r{reduce_to(g, sa), Tensor{}};
    if (need_b) r[1] = reduce_to(mul_scalar(g, -1.0), sb);
    return r;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "mul", [](auto x, auto y) { return x * y; });
  if (!a.recorded() && !b.recorded()) return out;
  Tensor ad = a.detached(), bd = b.detached();
  const bool need_a = a.recorded(), need_b = b.recorded();
  return record(out, {&a, &b}, [ad, bd, need_a, need_b](const Tensor& g) {
    std::vector<Tensor> r(2);
    if (need_a) r[0] = reduce_to(mul(g, bd), ad.shape());
    if (need_b) r[1] = reduce_to(mul(g, ad), bd.shape());
    return r;
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "div", [](auto x, auto y) { return x / y; });
  if (!a.recorded() && !b.recorded()) return out;
  Tensor bd = b.detached(), yd = out;
  Shape sa = a.shape();
  const bool need_a = a.recorded(), need_b = b.recorded();
  return record(out, {&a, &b}, [bd, yd, sa, need_a, need_b](const Tensor& g) {
    std::vector<Tensor> r(2);
    if (need_a) r[0] = reduce_to(div(g, bd), sa);
    if (need_b) r[1] = reduce_to(mul_scalar(div(mul(g, yd), bd), -1.0), bd.shape());
    return r;
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](auto v) { return static_cast<decltype(v)>(v + c); },
      [](auto, auto, auto g) { return g; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(
      x, [c](auto v) { return static_cast<decltype(v)>(v * c); },
      [c](auto, auto, auto g) { return static_cast<decltype(g)>(g * c); });
}

// ---------------------------------------------------------------------------
// Matmul

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (!a.defined() || !b.defined()) throw Error("matmul: undefined operand");
  detail::check_same_dtype(a, b, "matmul");
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t m = a.dim(-2), k = a.dim(-1);
  const std::size_t bk = transpose_b ? b.dim(-1) : b.dim(-2);
  const std::size_t n = transpose_b ? b.dim(-2) : b.dim(-1);
  if (bk != k)
    throw ShapeError("matmul: inner extents differ for " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + (transpose_b ? " (b transposed)" : ""));
  const bool shared = b.rank() == 2;
  if (!shared) {
    if (a.rank() != b.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
      throw ShapeError("matmul: batch extents differ for " + to_string(a.shape()) + " and " +
                       to_string(b.shape()));
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out = Access::make(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    const T* A = Access::raw<T>(a);
    const T* B = Access::raw<T>(b);
    T* C = Access::raw<T>(out);
    std::vector<T> bt;
    const std::size_t b_batches = shared ? 1 : batch;
    if (transpose_b) {
      bt.resize(b.numel());
      for (std::size_t bi = 0; bi < b_batches; ++bi)
        kernels::transpose2d(B + bi * n * k, bt.data() + bi * k * n, n, k);
      B = bt.data();
    }
    if (shared) {
      kernels::gemm(A, B, C, batch * m, k, n);
    } else {
      for (std::size_t bi = 0; bi < batch; ++bi)
        kernels::gemm(A + bi * m * k, B + bi * k * n, C + bi * m * n, m, k, n);
    }
  });
  if (!a.recorded() && !b.recorded()) return out;
  Tensor ad = a.detached(), bd = b.detached();
  const bool need_a = a.recorded(), need_b = b.recorded();
  return record(out, {&a, &b}, [ad, bd, transpose_b, shared, need_a, need_b](const Tensor& g) {
    std::vector<Tensor> r(2);
    if (need_a) r[0] = matmul(g, bd, !transpose_b);
    if (need_b) {
      if (shared) {
        const std::size_t k_ = ad.dim(-1), n_ = g.dim(-1);
        const std::size_t rows = ad.numel() / k_;
        Tensor af = reshape(ad, {rows, k_});
        Tensor gf = reshape(g, {rows, n_});
        r[1] = transpose_b ? matmul(transpose(gf), af) : matmul(transpose(af), gf);
      } else {
        r[1] = transpose_b ? matmul(transpose(g), ad) : matmul(transpose(ad), g);
      }
    }
    return r;
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.rank()) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(x.rank());
  std::vector<std::size_t> src_strides(x.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = x.shape()[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  Tensor out = Access::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    strided_walk(out_shape, src_strides, Access::raw<T>(out), Access::raw<T>(x),
                 [](T& d, const T& s) { d = s; });
  });
  if (!x.recorded()) return out;
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return record(out, {&x}, [inverse](const Tensor& g) {
    return std::vector<Tensor>{permute(g, inverse)};
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose: rank must be >= 2");
  std::vector<std::size_t> perm(x.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("reshape: zero extent in " + to_string(shape));
  Tensor out = Access::view(x, shape);
  if (!x.recorded()) return out;
  Shape original = x.shape();
  return record(out, {&x}, [original](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, original)};
  });
}

Tensor concat(const std::vector<Tensor>& xs, std::ptrdiff_t axis_in) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const std::size_t axis = norm_axis(axis_in, xs[0].rank(), "concat");
  Shape out_shape = xs[0].shape();
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    detail::check_same_dtype(xs[0], t, "concat");
    if (t.rank() != xs[0].rank()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < t.rank(); ++i)
      if (i != axis && t.shape()[i] != xs[0].shape()[i])
        throw ShapeError("concat: extents differ off-axis: " + to_string(t.shape()) + " vs " +
                         to_string(xs[0].shape()));
    out_shape[axis] += t.shape()[axis];
  }
  Tensor out = Access::make(out_shape, xs[0].dtype());
  const AxisSplit so = split_at(out_shape, axis);
  dispatch(out.dtype(), [&]<class T>() {
    T* dst = Access::raw<T>(out);
    std::size_t at = 0;
    for (const auto& t : xs) {
      const std::size_t len = t.shape()[axis];
      const T* src = Access::raw<T>(t);
      for (std::size_t o = 0; o < so.outer; ++o)
        std::copy_n(src + o * len * so.inner, len * so.inner,
                    dst + (o * so.len + at) * so.inner);
      at += len;
    }
  });
  std::vector<const Tensor*> ins;
  bool any = false;
  for (const auto& t : xs) {
    ins.push_back(&t);
    any = any || t.recorded();
  }
  if (!any) return out;
  std::vector<std::size_t> lens;
  for (const auto& t : xs) lens.push_back(t.shape()[axis]);
  return record(out, ins, [lens, axis](const Tensor& g) {
    std::vector<Tensor> r;
    std::size_t at = 0;
    for (std::size_t len : lens) {
      r.push_back(slice(g, static_cast<std::ptrdiff_t>(axis), at, len));
      at += len;
    }
    return r;
  });
}

Tensor slice(const Tensor& x, std::ptrdiff_t axis_in, std::size_t start, std::size_t length) {
  const std::size_t axis = norm_axis(axis_in, x.rank(), "slice");
  if (length == 0 || start + length > x.shape()[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for " + to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor out = Access::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T* dst = Access::raw<T>(out);
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(src + (o * s.len + start) * s.inner, length * s.inner,
                  dst + o * length * s.inner);
  });
  if (!x.recorded()) return out;
  Shape in_shape = x.shape();
  return record(out, {&x}, [in_shape, axis, start, length, s](const Tensor& g) {
    Tensor gx = Access::make(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<class T>() {
      const T* src = Access::raw<T>(g);
      T* dst = Access::raw<T>(gx);
      for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(src + o * length * s.inner, length * s.inner,
                    dst + (o * s.len + start) * s.inner);
    });
    return std::vector<Tensor>{gx};
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  Tensor out = Access::make({}, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T acc = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += src[i];
    Access::raw<T>(out)[0] = acc;
  });
  if (!x.recorded()) return out;
  Shape in_shape = x.shape();
  return record(out, {&x}, [in_shape](const Tensor& g) {
    return std::vector<Tensor>{Tensor::full(in_shape, g.item(), g.dtype())};
  });
}

Tensor sum(const Tensor& x, std::ptrdiff_t axis_in, bool keepdim) {
  const std::size_t axis = norm_axis(axis_in, x.rank(), "sum");
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out = Access::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T* dst = Access::raw<T>(out);
    for (std::size_t o = 0; o < s.outer; ++o) {
      T* d = dst + o * s.inner;
      for (std::size_t l = 0; l < s.len; ++l) {
        const T* r = src + (o * s.len + l) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) d[i] += r[i];
      }
    }
  });
  if (!x.recorded()) return out;
  Shape in_shape = x.shape();
  return record(out, {&x}, [in_shape, axis](const Tensor& g) {
    return std::vector<Tensor>{expand_along(g, in_shape, axis)};
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, std::ptrdiff_t axis, bool keepdim) {
  const double n = static_cast<double>(x.dim(axis));
  return mul_scalar(sum(x, axis, keepdim), 1.0 / n);
}

Tensor max(const Tensor& x, std::ptrdiff_t axis_in, bool keepdim) {
  const std::size_t axis = norm_axis(axis_in, x.rank(), "max");
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out = Access::make(out_shape, x.dtype());
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T* dst = Access::raw<T>(out);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        std::size_t best = 0;
        T bv = src[o * s.len * s.inner + i];
        for (std::size_t l = 1; l < s.len; ++l) {
          const T v = src[(o * s.len + l) * s.inner + i];
          if (v > bv) {
            bv = v;
            best = l;
          }
        }
        dst[o * s.inner + i] = bv;
        arg[o * s.inner + i] = best;
      }
  });
  if (!x.recorded()) return out;
  Shape in_shape = x.shape();
  return record(out, {&x}, [in_shape, arg = std::move(arg), s](const Tensor& g) {
    Tensor gx = Access::make(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<class T>() {
      const T* gs = Access::raw<T>(g);
      T* d = Access::raw<T>(gx);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i)
          d[(o * s.len + arg[o * s.inner + i]) * s.inner + i] = gs[o * s.inner + i];
    });
    return std::vector<Tensor>{gx};
  });
}

Tensor broadcast(const Tensor& x, const Shape& shape) {
  if (x.rank() > shape.size())
    throw ShapeError("broadcast: cannot broadcast " + to_string(x.shape()) + " to " +
                     to_string(shape));
  const std::size_t lead = shape.size() - x.rank();
  const auto xs = strides_of(x.shape());
  std::vector<std::size_t> src_strides(shape.size(), 0);
  for (std::size_t i = 0; i < x.rank(); ++i) {
    const std::size_t e = x.shape()[i];
    if (e == shape[lead + i])
      src_strides[lead + i] = xs[i];
    else if (e != 1)
      throw ShapeError("broadcast: cannot broadcast " + to_string(x.shape()) + " to " +
                       to_string(shape));
  }
  Tensor out = Access::make(shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    strided_walk(shape, src_strides, Access::raw<T>(out), Access::raw<T>(x),
                 [](T& d, const T& s) { d = s; });
  });
  if (!x.recorded()) return out;
  Shape in_shape = x.shape();
  return record(out, {&x}, [in_shape, src_strides](const Tensor& g) {
    Tensor gx = Access::make(in_shape, g.dtype());
    dispatch(g.dtype(), [&]<class T>() {
      strided_scatter_add(g.shape(), src_strides, Access::raw<T>(g), Access::raw<T>(gx));
    });
    return std::vector<Tensor>{gx};
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor exp(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::exp(v); }, [](auto, auto y, auto g) { return g * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::log(v); }, [](auto v, auto, auto g) { return g / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::sqrt(v); },
      [](auto, auto y, auto g) { return g / (y + y); });
}

Tensor power(const Tensor& x, double p) {
  return unary(
      x, [p](auto v) { return static_cast<decltype(v)>(std::pow(v, p)); },
      [p](auto v, auto, auto g) {
        return static_cast<decltype(g)>(g * p * std::pow(v, p - 1.0));
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](auto v) { return v > 0 ? v : decltype(v)(0); },
      [](auto v, auto, auto g) { return v > 0 ? g : decltype(g)(0); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](auto v) {
        using T = decltype(v);
        return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      },
      [](auto, auto y, auto g) { return g * y * (decltype(y)(1) - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::tanh(v); },
      [](auto, auto y, auto g) { return g * (decltype(y)(1) - y * y); });
}

Tensor sin(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::sin(v); }, [](auto v, auto, auto g) { return g * std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary(
      x, [](auto v) { return std::cos(v); }, [](auto v, auto, auto g) { return -g * std::sin(v); });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis_in) {
  const std::size_t axis = norm_axis(axis_in, x.rank(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor out = Access::make(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* src = Access::raw<T>(x);
    T* dst = Access::raw<T>(out);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        T m = src[base];
        for (std::size_t l = 1; l < s.len; ++l) m = std::max(m, src[base + l * s.inner]);
        T z = 0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const T e = std::exp(src[base + l * s.inner] - m);
          dst[base + l * s.inner] = e;
          z += e;
        }
        for (std::size_t l = 0; l < s.len; ++l) dst[base + l * s.inner] /= z;
      }
  });
  if (!x.recorded()) return out;
  Tensor yd = out;
  return record(out, {&x}, [yd, s](const Tensor& g) {
    Tensor gx = Access::make(g.shape(), g.dtype());
    dispatch(g.dtype(), [&]<class T>() {
      const T* y = Access::raw<T>(yd);
      const T* gs = Access::raw<T>(g);
      T* d = Access::raw<T>(gx);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          T dot = 0;
          for (std::size_t l = 0; l < s.len; ++l)
            dot += gs[base + l * s.inner] * y[base + l * s.inner];
          for (std::size_t l = 0; l < s.len; ++l)
            d[base + l * s.inner] = y[base + l * s.inner] * (gs[base + l * s.inner] - dot);
        }
    });
    return std::vector<Tensor>{gx};
  });
}

// ---------------------------------------------------------------------------
// Composites

Tensor square(const Tensor& x) { return mul(x, x); }

Tensor silu(const Tensor& x) { return mul(x, sigmoid(x)); }

Tensor gelu(const Tensor& x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  Tensor inner = mul_scalar(add(x, mul_scalar(power(x, 3.0), 0.044715)), c);
  return mul(mul_scalar(x, 0.5), add_scalar(tanh(inner), 1.0));
}

}  // namespace huvr::ad
