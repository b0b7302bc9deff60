#pragma once

#include <cmath>
#include <cstddef>

#if defined(__AVX512F__) && defined(__FMA__)
#define RTSTT_GEMM_AVX512 1
#include <immintrin.h>
#elif defined(__AVX2__) && defined(__FMA__)
#define RTSTT_GEMM_AVX2 1
#include <immintrin.h>
#endif

namespace rtstt::detail {

// Every output element is accumulated as c <- madd(a_k, b_k, c) for
// k = 0..K-1 in order, whichever blocking path it lands in. That makes a
// result independent of how many rows or frames share the call, which the
// streaming-equivalence guarantees depend on. Build with -ffp-contract=off so
// the non-FMA path is not fused behind our back.
inline float madd(float a, float b, float c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return a * b + c;
#endif
}

#if defined(RTSTT_GEMM_AVX512)

struct SimdF {
  using reg = __m512;
  static constexpr std::size_t width = 16;
  static reg load(const float* p, std::size_t n) {
    return n == width ? _mm512_loadu_ps(p) : _mm512_maskz_loadu_ps(mask(n), p);
  }
  static void store(float* p, reg v, std::size_t n) {
    if (n == width) {
      _mm512_storeu_ps(p, v);
    } else {
      _mm512_mask_storeu_ps(p, mask(n), v);
    }
  }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
  static reg set1(float a) { return _mm512_set1_ps(a); }
  static __mmask16 mask(std::size_t n) { return static_cast<__mmask16>((1u << n) - 1u); }
};
inline constexpr std::size_t kGemmRows = 8;

#elif defined(RTSTT_GEMM_AVX2)

struct SimdF {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg load(const float* p, std::size_t n) {
    return n == width ? _mm256_loadu_ps(p) : _mm256_maskload_ps(p, mask(n));
  }
  static void store(float* p, reg v, std::size_t n) {
    if (n == width) {
      _mm256_storeu_ps(p, v);
    } else {
      _mm256_maskstore_ps(p, mask(n), v);
    }
  }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg set1(float a) { return _mm256_set1_ps(a); }
  static __m256i mask(std::size_t n) {
    const __m256i idx = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
    return _mm256_cmpgt_epi32(_mm256_set1_epi32(static_cast<int>(n)), idx);
  }
};
inline constexpr std::size_t kGemmRows = 4;

#endif

#if defined(RTSTT_GEMM_AVX512) || defined(RTSTT_GEMM_AVX2)

// MR rows by NV vectors; the last vector holds `tail` valid columns.
template <std::size_t MR, std::size_t NV>
inline void gemm_tile(std::size_t K, const float* A, std::size_t lda, const float* B, std::size_t ldb,
                      float* C, std::size_t ldc, std::size_t tail) {
  using V = SimdF;
  typename V::reg acc[MR][NV];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t v = 0; v < NV; ++v)
      acc[r][v] = V::load(C + r * ldc + v * V::width, v + 1 == NV ? tail : V::width);
  for (std::size_t k = 0; k < K; ++k) {
    typename V::reg b[NV];
    for (std::size_t v = 0; v < NV; ++v) b[v] = V::load(B + k * ldb + v * V::width, v + 1 == NV ? tail : V::width);
    for (std::size_t r = 0; r < MR; ++r) {
      const typename V::reg a = V::set1(A[r * lda + k]);
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] = V::fmadd(a, b[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t v = 0; v < NV; ++v)
      V::store(C + r * ldc + v * V::width, acc[r][v], v + 1 == NV ? tail : V::width);
}

template <std::size_t MR>
inline void gemm_rows(std::size_t N, std::size_t K, const float* A, std::size_t lda, const float* B,
                      std::size_t ldb, float* C, std::size_t ldc) {
  constexpr std::size_t W = SimdF::width;
  std::size_t j = 0;
  for (; j + 2 * W <= N; j += 2 * W) gemm_tile<MR, 2>(K, A, lda, B + j, ldb, C + j, ldc, W);
  const std::size_t rest = N - j;
  if (rest > W) {
    gemm_tile<MR, 2>(K, A, lda, B + j, ldb, C + j, ldc, rest - W);
  } else if (rest > 0) {
    gemm_tile<MR, 1>(K, A, lda, B + j, ldb, C + j, ldc, rest);
  }
}

template <std::size_t MR>
inline void gemm_tail_rows(std::size_t m, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                           const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  if constexpr (MR > 0) {
    if (m == MR) {
      gemm_rows<MR>(N, K, A, lda, B, ldb, C, ldc);
    } else {
      gemm_tail_rows<MR - 1>(m, N, K, A, lda, B, ldb, C, ldc);
    }
  }
}

/// C[M x N] += A[M x K] * B[K x N], all row-major.
inline void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                     const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + kGemmRows <= M; i += kGemmRows)
    gemm_rows<kGemmRows>(N, K, A + i * lda, lda, B, ldb, C + i * ldc, ldc);
  if (i < M) gemm_tail_rows<kGemmRows - 1>(M - i, N, K, A + i * lda, lda, B, ldb, C + i * ldc, ldc);
}

#else

template <std::size_t MR, std::size_t NR>
inline void gemm_micro(std::size_t K, const float* A, std::size_t lda, const float* B,
                       std::size_t ldb, float* C, std::size_t ldc) {
  float acc[MR][NR];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) acc[r][j] = C[r * ldc + j];
  for (std::size_t k = 0; k < K; ++k) {
    const float* b = B + k * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const float a = A[r * lda + k];
      for (std::size_t j = 0; j < NR; ++j) acc[r][j] = madd(a, b[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < NR; ++j) C[r * ldc + j] = acc[r][j];
}

template <std::size_t MR>
inline void gemm_row_block(std::size_t N, std::size_t K, const float* A, std::size_t lda,
                           const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 16 <= N; j += 16) gemm_micro<MR, 16>(K, A, lda, B + j, ldb, C + j, ldc);
  for (; j < N; ++j) gemm_micro<MR, 1>(K, A, lda, B + j, ldb, C + j, ldc);
}

/// C[M x N] += A[M x K] * B[K x N], all row-major.
inline void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                     const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) gemm_row_block<4>(N, K, A + i * lda, lda, B, ldb, C + i * ldc, ldc);
  for (; i < M; ++i) gemm_row_block<1>(N, K, A + i * lda, lda, B, ldb, C + i * ldc, ldc);
}

#endif

/// Scalar reference with the same accumulation order, for tests.
inline void gemm_acc_reference(std::size_t M, std::size_t N, std::size_t K, const float* A, std::size_t lda,
                               const float* B, std::size_t ldb, float* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      float c = C[i * ldc + j];
      for (std::size_t k = 0; k < K; ++k) c = madd(A[i * lda + k], B[k * ldb + j], c);
      C[i * ldc + j] = c;
    }
}

}  // namespace rtstt::detail
