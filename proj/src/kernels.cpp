#include "pt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace pt::kernels {

namespace {

// Rows below this count are not worth a parallel region.
constexpr std::size_t kParallelWork = 1 << 14;

// Register tile: R rows of A times a W-wide column strip of B, with the
// accumulators held across the whole k loop. Every C element still sums its
// products in increasing p, so the result does not depend on the tiling.
template <typename T, std::size_t R, std::size_t W>
inline void tile(std::size_t n, std::size_t k, const T* a, std::size_t rs, std::size_t cs,
                 const T* b, T* c, std::size_t j0, std::size_t w) {
  T acc[R][W];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < W; ++j) acc[r][j] = j < w ? c[r * n + j0 + j] : T(0);
  if (w == W) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict bp = b + p * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const T av = a[r * rs + p * cs];
#pragma omp simd
        for (std::size_t j = 0; j < W; ++j) acc[r][j] += av * bp[j];
      }
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict bp = b + p * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const T av = a[r * rs + p * cs];
        for (std::size_t j = 0; j < w; ++j) acc[r][j] += av * bp[j];
      }
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < w; ++j) c[r * n + j0 + j] = acc[r][j];
}

template <typename T, std::size_t R>
inline void row_block(std::size_t n, std::size_t k, const T* a, std::size_t rs, std::size_t cs,
                      const T* b, T* c) {
  constexpr std::size_t W = 64 / sizeof(T) * 2;
  constexpr std::size_t H = W / 2;
  std::size_t j0 = 0;
  for (; j0 + W <= n; j0 += W) tile<T, R, W>(n, k, a, rs, cs, b, c, j0, W);
  if (j0 + H <= n) {
    tile<T, R, H>(n, k, a, rs, cs, b, c, j0, H);
    j0 += H;
  }
  if (j0 < n) tile<T, R, H>(n, k, a, rs, cs, b, c, j0, n - j0);
}

// A element (i, p) lives at a[i * rs + p * cs].
template <typename T>
void gemm_nn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t rs,
                  std::size_t cs, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  constexpr std::size_t R = 4;
  const std::size_t blocks = (m + R - 1) / R;
  const bool parallel = m * n * k >= kParallelWork && blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * R;
    if (i0 + R <= m) {
      row_block<T, R>(n, k, a + i0 * rs, rs, cs, b, c + i0 * n);
    } else {
      for (std::size_t i = i0; i < m; ++i) row_block<T, 1>(n, k, a + i * rs, rs, cs, b, c + i * n);
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nn_impl(m, n, k, a, k, 1, b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  // Materialize B^T (k x n) so the inner loop runs contiguously over n.
  std::vector<T> bt(k * n);
  constexpr std::size_t blk = 16;
  for (std::size_t j0 = 0; j0 < n; j0 += blk)
    for (std::size_t p0 = 0; p0 < k; p0 += blk)
      for (std::size_t j = j0; j < std::min(n, j0 + blk); ++j)
        for (std::size_t p = p0; p < std::min(k, p0 + blk); ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn_impl(m, n, k, a, k, 1, bt.data(), c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nn_impl(m, n, k, a, 1, m, b, c, accumulate);
}

template <typename T>
void softmax_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x, T* y) {
  const std::size_t slices = outer * inner;
  const bool parallel = slices * len >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t o = s / inner;
    const std::size_t in = s % inner;
    const T* xs = x + o * len * inner + in;
    T* ys = y + o * len * inner + in;
    T mx = xs[0];
    T sum = 0;
    if (inner == 1) {
      // The lane layout of these reductions is fixed at compile time, so the
      // result is still independent of the thread count.
#pragma omp simd reduction(max : mx)
      for (std::size_t i = 1; i < len; ++i) mx = xs[i] > mx ? xs[i] : mx;
#pragma omp simd reduction(+ : sum)
      for (std::size_t i = 0; i < len; ++i) {
        ys[i] = vexp(xs[i] - mx);
        sum += ys[i];
      }
    } else {
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * inner]);
      for (std::size_t i = 0; i < len; ++i) {
        ys[i * inner] = vexp(xs[i * inner] - mx);
        sum += ys[i * inner];
      }
    }
    const T inv = T(1) / sum;
    for (std::size_t i = 0; i < len; ++i) ys[i * inner] *= inv;
  }
}

template <typename T>
void softmax_backward(std::size_t outer, std::size_t len, std::size_t inner, const T* y,
                      const T* dy, T* dx) {
  const std::size_t slices = outer * inner;
  const bool parallel = slices * len >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = (s / inner) * len * inner + s % inner;
    T dot = 0;
    for (std::size_t i = 0; i < len; ++i) dot += dy[base + i * inner] * y[base + i * inner];
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t at = base + i * inner;
      dx[at] += y[at] * (dy[at] - dot);
    }
  }
}

template <typename T>
void layer_norm_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x,
                        T eps, T* xhat, T* inv_std) {
  const std::size_t slices = outer * inner;
  const bool parallel = slices * len >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = (s / inner) * len * inner + s % inner;
    T mean = 0;
    for (std::size_t i = 0; i < len; ++i) mean += x[base + i * inner];
    mean /= static_cast<T>(len);
    T var = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const T d = x[base + i * inner] - mean;
      var += d * d;
    }
    var /= static_cast<T>(len);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[s] = is;
    for (std::size_t i = 0; i < len; ++i) xhat[base + i * inner] = (x[base + i * inner] - mean) * is;
  }
}

namespace serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void softmax_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x, T* y) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      T sum = 0;
      for (std::size_t i = 0; i < len; ++i) sum += std::exp(x[base + i * inner] - mx);
      for (std::size_t i = 0; i < len; ++i)
        y[base + i * inner] = std::exp(x[base + i * inner] - mx) / sum;
    }
  }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                             float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*,
                              const double*, double*, bool);
template void softmax_forward<float>(std::size_t, std::size_t, std::size_t, const float*, float*);
template void softmax_forward<double>(std::size_t, std::size_t, std::size_t, const double*,
                                      double*);

}  // namespace serial

#define PT_INSTANTIATE_KERNELS(T)                                                               \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void softmax_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T*);        \
  template void softmax_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*,  \
                                    T*);                                                        \
  template void layer_norm_forward<T>(std::size_t, std::size_t, std::size_t, const T*, T, T*,    \
                                      T*);

PT_INSTANTIATE_KERNELS(float)
PT_INSTANTIATE_KERNELS(double)

}  // namespace pt::kernels
