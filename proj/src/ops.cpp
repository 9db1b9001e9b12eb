#include "pt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pt/errors.hpp"
#include "pt/kernels.hpp"

namespace pt::ops {

namespace {

template <typename T>
using NodeRaw = detail::Node<T>*;

struct AxisLayout {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
  std::size_t axis;
};

AxisLayout layout_for(const Shape& shape, std::ptrdiff_t axis) {
  const auto r = static_cast<std::ptrdiff_t>(shape.size());
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    fail(ErrorKind::Dimension,
         "axis " + std::to_string(axis) + " out of range for shape " + to_string(shape));
  AxisLayout l{1, shape[static_cast<std::size_t>(a)], 1, static_cast<std::size_t>(a)};
  for (std::ptrdiff_t i = 0; i < a; ++i) l.outer *= shape[static_cast<std::size_t>(i)];
  for (std::ptrdiff_t i = a + 1; i < r; ++i) l.inner *= shape[static_cast<std::size_t>(i)];
  return l;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail(ErrorKind::Dimension, std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                                   to_string(b.shape()) + " differ");
}

template <typename T>
void require_finite(const char* op, const Tensor<T>& x) {
  for (T v : x.data())
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string(op) + ": non-finite input");
}

// Batch description for the matmul family.
struct MatmulPlan {
  std::size_t batch;
  bool a_batched;
  bool b_batched;
  std::size_t m, k, n;
  Shape out;
};

template <typename T>
MatmulPlan plan_matmul(const char* op, const Tensor<T>& a, const Tensor<T>& b, bool b_transposed) {
  auto mismatch = [&] {
    fail(ErrorKind::Dimension, std::string(op) + ": incompatible shapes " + to_string(a.shape()) +
                                   " and " + to_string(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2) mismatch();
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Shape lead_a(sa.begin(), sa.end() - 2);
  Shape lead_b(sb.begin(), sb.end() - 2);
  MatmulPlan p{};
  p.m = sa[sa.size() - 2];
  p.k = sa.back();
  const std::size_t kb = b_transposed ? sb.back() : sb[sb.size() - 2];
  p.n = b_transposed ? sb[sb.size() - 2] : sb.back();
  if (kb != p.k) mismatch();
  p.a_batched = !lead_a.empty();
  p.b_batched = !lead_b.empty();
  if (p.a_batched && p.b_batched && lead_a != lead_b) mismatch();
  const Shape& lead = p.a_batched ? lead_a : lead_b;
  p.batch = numel(lead);
  p.out = lead;
  p.out.push_back(p.m);
  p.out.push_back(p.n);
  return p;
}

template <typename T>
Tensor<T> matmul_impl(const Tensor<T>& a, const Tensor<T>& b, bool b_transposed) {
  const MatmulPlan p = plan_matmul(b_transposed ? "matmul_nt" : "matmul", a, b, b_transposed);
  std::vector<T> out(numel(p.out));
  const T* A = a.data().data();
  const T* B = b.data().data();
  const std::size_t sa = p.m * p.k;
  const std::size_t sb = p.k * p.n;
  const std::size_t sc = p.m * p.n;
  auto fwd = [&](std::size_t rows, const T* aa, const T* bb, T* cc) {
    if (b_transposed)
      kernels::gemm_nt(rows, p.n, p.k, aa, bb, cc, false);
    else
      kernels::gemm_nn(rows, p.n, p.k, aa, bb, cc, false);
  };
  if (p.a_batched && !p.b_batched) {
    fwd(p.batch * p.m, A, B, out.data());
  } else {
    for (std::size_t i = 0; i < p.batch; ++i)
      fwd(p.m, A + (p.a_batched ? i * sa : 0), B + (p.b_batched ? i * sb : 0), out.data() + i * sc);
  }
  NodeRaw<T> na = a.node().get();
  NodeRaw<T> nb = b.node().get();
  return record_op<T>(b_transposed ? "matmul_nt" : "matmul", {&a, &b}, p.out, std::move(out),
                      [=](NodeRaw<T> o) {
                        return [=] {
                          const T* G = o->grad.data();
                          const T* Av = na->data.data();
                          const T* Bv = nb->data.data();
                          const bool fold = p.a_batched && !p.b_batched;
                          const std::size_t loops = fold ? 1 : p.batch;
                          const std::size_t rows = fold ? p.batch * p.m : p.m;
                          for (std::size_t i = 0; i < loops; ++i) {
                            const T* ai = Av + (p.a_batched ? i * sa : 0);
                            const T* bi = Bv + (p.b_batched ? i * sb : 0);
                            const T* gi = G + i * sc;
                            if (na->requires_grad) {
                              T* da = na->grad.data() + (p.a_batched ? i * sa : 0);
                              // dA = G B^T  (or G B when b is stored transposed)
                              if (b_transposed)
                                kernels::gemm_nn(rows, p.k, p.n, gi, bi, da, true);
                              else
                                kernels::gemm_nt(rows, p.k, p.n, gi, bi, da, true);
                            }
                            if (nb->requires_grad) {
                              T* db = nb->grad.data() + (p.b_batched ? i * sb : 0);
                              if (b_transposed)  // dB[n,k] = G^T A
                                kernels::gemm_tn(p.n, p.k, rows, gi, ai, db, true);
                              else  // dB[k,n] = A^T G
                                kernels::gemm_tn(p.k, p.n, rows, ai, gi, db, true);
                            }
                          }
                        };
                      });
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  const T* xp = xs.data();
  T* op = out.data();
#pragma omp simd
  for (std::size_t i = 0; i < out.size(); ++i) op[i] = fwd(xp[i]);
  NodeRaw<T> nx = x.node().get();
  return record_op<T>(name, {&x}, x.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < o->data.size(); ++i)
        nx->grad[i] += o->grad[i] * deriv(nx->data[i], o->data[i]);
    };
  });
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul_impl(a, b, false);
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul_impl(a, b, true);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2)
    fail(ErrorKind::Dimension, "transpose needs rank >= 2, got " + to_string(a.shape()));
  Shape s = a.shape();
  const std::size_t m = s[s.size() - 2];
  const std::size_t n = s.back();
  std::swap(s[s.size() - 2], s.back());
  const std::size_t batch = a.numel() / (m * n);
  std::vector<T> out(a.numel());
  const auto in = a.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = in[b * m * n + i * n + j];
  NodeRaw<T> na = a.node().get();
  return record_op<T>("transpose", {&a}, s, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            na->grad[b * m * n + i * n + j] += o->grad[b * m * n + j * m + i];
    };
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  NodeRaw<T> na = a.node().get();
  NodeRaw<T> nb = b.node().get();
  return record_op<T>("add", {&a, &b}, a.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (na->requires_grad) na->grad[i] += o->grad[i];
        if (nb->requires_grad) nb->grad[i] += o->grad[i];
      }
    };
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  NodeRaw<T> na = a.node().get();
  NodeRaw<T> nb = b.node().get();
  return record_op<T>("sub", {&a, &b}, a.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (na->requires_grad) na->grad[i] += o->grad[i];
        if (nb->requires_grad) nb->grad[i] -= o->grad[i];
      }
    };
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  NodeRaw<T> na = a.node().get();
  NodeRaw<T> nb = b.node().get();
  return record_op<T>("mul", {&a, &b}, a.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (na->requires_grad) na->grad[i] += o->grad[i] * nb->data[i];
        if (nb->requires_grad) nb->grad[i] += o->grad[i] * na->data[i];
      }
    };
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary<T>(
      "square", a, [](T v) { return v * v; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = x.dim(-1);
  if (bias.numel() != n)
    fail(ErrorKind::Dimension, "add_bias: bias " + to_string(bias.shape()) +
                                   " does not match last axis of " + to_string(x.shape()));
  std::vector<T> out(x.data().begin(), x.data().end());
  const std::size_t rows = x.numel() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.data()[j];
  NodeRaw<T> nx = x.node().get();
  NodeRaw<T> nb = bias.node().get();
  return record_op<T>("add_bias", {&x, &bias}, x.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      if (nx->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) nx->grad[i] += o->grad[i];
      if (nb->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) nb->grad[j] += o->grad[r * n + j];
    };
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rank() != 2 || x.dim(-1) != w.dim(0) || b.numel() != w.dim(1))
    fail(ErrorKind::Dimension, "linear: input " + to_string(x.shape()) + ", weight " +
                                   to_string(w.shape()) + ", bias " + to_string(b.shape()));
  const std::size_t in = w.dim(0);
  const std::size_t out_dim = w.dim(1);
  const std::size_t rows = x.numel() / in;
  std::vector<T> out(rows * out_dim);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(b.data().begin(), b.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
  kernels::gemm_nn(rows, out_dim, in, x.data().data(), w.data().data(), out.data(), true);
  Shape s = x.shape();
  s.back() = out_dim;
  NodeRaw<T> nx = x.node().get();
  NodeRaw<T> nw = w.node().get();
  NodeRaw<T> nb = b.node().get();
  return record_op<T>("linear", {&x, &w, &b}, s, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      const T* G = o->grad.data();
      if (nx->requires_grad)
        kernels::gemm_nt(rows, in, out_dim, G, nw->data.data(), nx->grad.data(), true);
      if (nw->requires_grad)
        kernels::gemm_tn(in, out_dim, rows, nx->data.data(), G, nw->grad.data(), true);
      if (nb->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out_dim; ++j) nb->grad[j] += G[r * out_dim + j];
    };
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        // exp(-|v|) never overflows.
        const T e = kernels::vexp(-std::abs(v));
        return v >= 0 ? T(1) / (T(1) + e) : e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > 0 ? v : T(0); },
      [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  require_finite("softmax", x);
  std::vector<T> out(x.numel());
  kernels::softmax_forward(l.outer, l.len, l.inner, x.data().data(), out.data());
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("softmax", {&x}, x.shape(), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      kernels::softmax_backward(l.outer, l.len, l.inner, o->data.data(), o->grad.data(),
                                nx->grad.data());
    };
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     std::ptrdiff_t axis, T eps) {
  const AxisLayout l = layout_for(x.shape(), axis);
  if (l.len < 2)
    fail(ErrorKind::Dimension, "layer_norm: axis extent must be >= 2 in " + to_string(x.shape()));
  if (gain.numel() != l.len || bias.numel() != l.len)
    fail(ErrorKind::Dimension, "layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                                   to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(l.outer * l.inner);
  kernels::layer_norm_forward(l.outer, l.len, l.inner, x.data().data(), eps, xhat.data(),
                              inv_std.data());
  std::vector<T> out(x.numel());
  const auto g = gain.data();
  const auto bb = bias.data();
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.len; ++i)
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t at = (o * l.len + i) * l.inner + in;
        out[at] = xhat[at] * g[i] + bb[i];
      }
  NodeRaw<T> nx = x.node().get();
  NodeRaw<T> ng = gain.node().get();
  NodeRaw<T> nb = bias.node().get();
  return record_op<T>(
      "layer_norm", {&x, &gain, &bias}, x.shape(), std::move(out),
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](NodeRaw<T> o) {
        return [=] {
          const T* G = o->grad.data();
          const T inv_len = T(1) / static_cast<T>(l.len);
          for (std::size_t o_ = 0; o_ < l.outer; ++o_) {
            for (std::size_t in = 0; in < l.inner; ++in) {
              const std::size_t base = o_ * l.len * l.inner + in;
              T sum_d = 0;
              T sum_dx = 0;
              for (std::size_t i = 0; i < l.len; ++i) {
                const std::size_t at = base + i * l.inner;
                const T d = G[at] * ng->data[i];
                sum_d += d;
                sum_dx += d * xhat[at];
                if (ng->requires_grad) ng->grad[i] += G[at] * xhat[at];
                if (nb->requires_grad) nb->grad[i] += G[at];
              }
              if (!nx->requires_grad) continue;
              const T is = inv_std[o_ * l.inner + in];
              for (std::size_t i = 0; i < l.len; ++i) {
                const std::size_t at = base + i * l.inner;
                const T d = G[at] * ng->data[i];
                nx->grad[at] += is * (d - inv_len * sum_d - xhat[at] * inv_len * sum_dx);
              }
            }
          }
        };
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat: no inputs");
  const AxisLayout first = layout_for(parts[0].shape(), axis);
  Shape out_shape = parts[0].shape();
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size())
      fail(ErrorKind::Dimension, "concat: rank mismatch " + to_string(p.shape()) + " vs " +
                                     to_string(parts[0].shape()));
    for (std::size_t d = 0; d < out_shape.size(); ++d)
      if (d != first.axis && p.shape()[d] != out_shape[d])
        fail(ErrorKind::Dimension, "concat: shape " + to_string(p.shape()) +
                                       " incompatible with " + to_string(parts[0].shape()));
    lens.push_back(p.shape()[first.axis]);
    total += lens.back();
  }
  out_shape[first.axis] = total;
  const std::size_t outer = first.outer;
  const std::size_t inner = first.inner;
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto src = parts[pi].data();
    const std::size_t chunk = lens[pi] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset * inner));
    offset += lens[pi];
  }
  std::vector<NodeRaw<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node().get());
  return record_op_n<T>("concat", parts, out_shape, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        const std::size_t chunk = lens[pi] * inner;
        if (nodes[pi]->requires_grad)
          for (std::size_t oi = 0; oi < outer; ++oi)
            for (std::size_t j = 0; j < chunk; ++j)
              nodes[pi]->grad[oi * chunk + j] += o->grad[oi * total * inner + off * inner + j];
        off += lens[pi];
      }
    };
  });
}

template <typename T>
MaxReduce<T> max_reduce_with_argmax(const Tensor<T>& x, std::ptrdiff_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != l.axis) out_shape.push_back(x.shape()[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(l.outer * l.inner);
  std::vector<std::size_t> arg(l.outer * l.inner, 0);
  const auto xs = x.data();
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      std::size_t best = 0;
      T bv = xs[base];
      for (std::size_t i = 1; i < l.len; ++i) {
        const T v = xs[base + i * l.inner];
        if (v > bv) {  // strict: ties keep the lower index
          bv = v;
          best = i;
        }
      }
      out[o * l.inner + in] = bv;
      arg[o * l.inner + in] = best;
    }
  NodeRaw<T> nx = x.node().get();
  MaxReduce<T> r;
  r.values = record_op<T>("max_reduce", {&x}, out_shape, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t oi = 0; oi < l.outer; ++oi)
        for (std::size_t in = 0; in < l.inner; ++in) {
          const std::size_t s = oi * l.inner + in;
          nx->grad[oi * l.len * l.inner + arg[s] * l.inner + in] += o->grad[s];
        }
    };
  });
  r.argmax = std::move(arg);
  return r;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::Index, "gather_rows: empty index list");
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.numel() / rows;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  for (std::size_t i : idx)
    if (i >= rows)
      fail(ErrorKind::Index, "gather_rows: index " + std::to_string(i) + " out of range for " +
                                 std::to_string(rows) + " rows");
  std::vector<T> out(idx.size() * width);
  const auto xs = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(idx[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  Shape s = x.shape();
  s[0] = idx.size();
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("gather_rows", {&x}, s, std::move(out),
                      [=, idx = std::move(idx)](NodeRaw<T> o) {
                        return [=] {
                          for (std::size_t r = 0; r < idx.size(); ++r)
                            for (std::size_t j = 0; j < width; ++j)
                              nx->grad[idx[r] * width + j] += o->grad[r * width + j];
                        };
                      });
}

template <typename T>
GroupedRows<T> scatter_rows_by_group(const Tensor<T>& x, std::span<const int> assignments,
                                     std::size_t num_groups) {
  if (assignments.size() != x.dim(0))
    fail(ErrorKind::Dimension, "scatter_rows_by_group: " + std::to_string(assignments.size()) +
                                   " assignments for shape " + to_string(x.shape()));
  GroupedRows<T> r;
  r.members.resize(num_groups);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int g = assignments[i];
    if (g < 0 || static_cast<std::size_t>(g) >= num_groups)
      fail(ErrorKind::Index, "scatter_rows_by_group: group " + std::to_string(g) +
                                 " out of range for " + std::to_string(num_groups) + " groups");
    r.members[static_cast<std::size_t>(g)].push_back(i);
  }
  r.groups.resize(num_groups);
  for (std::size_t g = 0; g < num_groups; ++g)
    if (!r.members[g].empty()) r.groups[g] = gather_rows(x, std::span<const std::size_t>(r.members[g]));
  return r;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    fail(ErrorKind::Dimension,
         "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("reshape", {&x}, std::move(shape), std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) nx->grad[i] += o->grad[i];
    };
  });
}

template <typename T>
Tensor<T> swap_axes01(const Tensor<T>& x) {
  if (x.rank() != 3)
    fail(ErrorKind::Dimension, "swap_axes01 needs rank 3, got " + to_string(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>((i * b + j) * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>((j * a + i) * c));
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("swap_axes01", {&x}, Shape{b, a, c}, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
          for (std::size_t k = 0; k < c; ++k)
            nx->grad[(i * b + j) * c + k] += o->grad[(j * a + i) * c + k];
    };
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("sum_all", {&x}, Shape{1}, std::vector<T>{s}, [=](NodeRaw<T> o) {
    return [=] {
      const T g = o->grad[0];
      for (T& v : nx->grad) v += g;
    };
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::ptrdiff_t axis) {
  const AxisLayout l = layout_for(x.shape(), axis);
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != l.axis) out_shape.push_back(x.shape()[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(l.outer * l.inner, T(0));
  const auto xs = x.data();
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.len; ++i)
      for (std::size_t in = 0; in < l.inner; ++in)
        out[o * l.inner + in] += xs[(o * l.len + i) * l.inner + in];
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("sum_axis", {&x}, out_shape, std::move(out), [=](NodeRaw<T> o) {
    return [=] {
      for (std::size_t oi = 0; oi < l.outer; ++oi)
        for (std::size_t i = 0; i < l.len; ++i)
          for (std::size_t in = 0; in < l.inner; ++in)
            nx->grad[(oi * l.len + i) * l.inner + in] += o->grad[oi * l.inner + in];
    };
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, std::mt19937_64& rng) {
  if (p < 0 || p >= 1) fail(ErrorKind::Config, "dropout probability must lie in [0, 1)");
  if (p == 0) return x;
  std::vector<T> mask(x.numel());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  for (T& m : mask) m = u(rng) < static_cast<double>(p) ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  NodeRaw<T> nx = x.node().get();
  return record_op<T>("dropout", {&x}, x.shape(), std::move(out),
                      [=, mask = std::move(mask)](NodeRaw<T> o) {
                        return [=] {
                          for (std::size_t i = 0; i < mask.size(); ++i)
                            nx->grad[i] += o->grad[i] * mask[i];
                        };
                      });
}

template <typename T>
Tensor<T> smooth_cross_entropy(const Tensor<T>& logits, std::size_t label, T eps) {
  const std::size_t c = logits.numel();
  if (!(logits.rank() == 1 || (logits.rank() == 2 && logits.dim(0) == 1)))
    fail(ErrorKind::Dimension, "smooth_cross_entropy expects [C] or [1, C], got " +
                                   to_string(logits.shape()));
  if (c < 2) fail(ErrorKind::Dimension, "smooth_cross_entropy needs at least 2 classes");
  if (label >= c)
    fail(ErrorKind::Label,
         "label " + std::to_string(label) + " out of range for " + std::to_string(c) + " classes");
  if (eps < 0 || eps >= 1) fail(ErrorKind::Config, "label smoothing must lie in [0, 1)");
  require_finite("smooth_cross_entropy", logits);
  const auto z = logits.data();
  const T mx = *std::max_element(z.begin(), z.end());
  T sum = 0;
  for (T v : z) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  std::vector<T> target(c, eps / static_cast<T>(c - 1));
  target[label] = T(1) - eps;
  T loss = 0;
  for (std::size_t i = 0; i < c; ++i) loss -= target[i] * (z[i] - lse);
  NodeRaw<T> nl = logits.node().get();
  return record_op<T>("smooth_cross_entropy", {&logits}, Shape{1}, std::vector<T>{loss},
                      [=, target = std::move(target)](NodeRaw<T> o) {
                        return [=] {
                          const T g = o->grad[0];
                          for (std::size_t i = 0; i < c; ++i) {
                            const T p = std::exp(nl->data[i] - lse);
                            nl->grad[i] += g * (p - target[i]);
                          }
                        };
                      });
}

#define PT_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> square(const Tensor<T>&);                                                  \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> softmax(const Tensor<T>&, std::ptrdiff_t);                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                std::ptrdiff_t, T);                                             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::ptrdiff_t);                     \
  template MaxReduce<T> max_reduce_with_argmax(const Tensor<T>&, std::ptrdiff_t);               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);               \
  template GroupedRows<T> scatter_rows_by_group(const Tensor<T>&, std::span<const int>,         \
                                                std::size_t);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> swap_axes01(const Tensor<T>&);                                             \
  template Tensor<T> sum_all(const Tensor<T>&);                                                 \
  template Tensor<T> mean_all(const Tensor<T>&);                                                \
  template Tensor<T> sum_axis(const Tensor<T>&, std::ptrdiff_t);                                \
  template Tensor<T> dropout(const Tensor<T>&, T, std::mt19937_64&);                            \
  template Tensor<T> smooth_cross_entropy(const Tensor<T>&, std::size_t, T);

PT_INSTANTIATE_OPS(float)
PT_INSTANTIATE_OPS(double)

}  // namespace pt::ops
