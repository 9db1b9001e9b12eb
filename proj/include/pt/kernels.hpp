#pragma once

// Dense row-major kernels used by the differentiable ops.
//
// The OpenMP versions partition work by output row, and every output element
// is produced by exactly one thread in a fixed summation order. Results are
// therefore bit-identical for any thread count. The `serial` namespace holds
// straightforward reference loops that the tests and the benchmark compare
// against.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace pt::kernels {

/// Vectorizable exp for float: reduction by ln 2 and a degree-6 polynomial,
/// relative error about 2e-7. Inputs below -87.3 flush to zero. The double
/// overload is std::exp.
inline float vexp(float x) {
  const float lo = -87.3f;
  float c = x < lo ? lo : x;
  c = c > 88.7f ? 88.7f : c;
  // Adding and removing 1.5 * 2^23 rounds to the nearest integer.
  const float n = (c * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
  const float r = (c - n * 0.693359375f) + n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  const float y = p * r * r + r + 1.0f;
  // 2^n is applied as two halves so both ends of the clamped range stay
  // representable (n runs from -126 to 128).
  const std::int32_t ni = static_cast<std::int32_t>(n);
  const std::int32_t half = ni >> 1;
  const float s1 = std::bit_cast<float>((half + 127) << 23);
  const float s2 = std::bit_cast<float>((ni - half + 127) << 23);
  return x < lo ? 0.0f : (y * s1) * s2;
}
inline double vexp(double x) { return std::exp(x); }

/// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// Softmax over the middle extent of an [outer, len, inner] block.
template <typename T>
void softmax_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x, T* y);

/// dx += y * (dy - sum(dy * y)) along the same layout.
template <typename T>
void softmax_backward(std::size_t outer, std::size_t len, std::size_t inner, const T* y,
                      const T* dy, T* dx);

/// Standardizes each length-`len` slice of an [outer, len, inner] block.
/// Writes the normalized values to `xhat` and 1/sqrt(var + eps) to `inv_std`
/// (one entry per slice, outer-major).
template <typename T>
void layer_norm_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x,
                        T eps, T* xhat, T* inv_std);

namespace serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

template <typename T>
void softmax_forward(std::size_t outer, std::size_t len, std::size_t inner, const T* x, T* y);

}  // namespace serial

}  // namespace pt::kernels
