// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// runtime CPU check.
#include <immintrin.h>

#include "darth/simd/distance.hpp"

namespace darth::simd::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

float l2_sqr(const float* a, const float* b, std::size_t dim) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= dim; i += 16) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    const __m256 d1 = _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
    acc1 = _mm256_fmadd_ps(d1, d1, acc1);
  }
  for (; i + 8 <= dim; i += 8) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
  }
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

float norm_sqr(const float* a, std::size_t dim) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= dim; i += 16) {
    const __m256 v0 = _mm256_loadu_ps(a + i);
    const __m256 v1 = _mm256_loadu_ps(a + i + 8);
    acc0 = _mm256_fmadd_ps(v0, v0, acc0);
    acc1 = _mm256_fmadd_ps(v1, v1, acc1);
  }
  for (; i + 8 <= dim; i += 8) {
    const __m256 v0 = _mm256_loadu_ps(a + i);
    acc0 = _mm256_fmadd_ps(v0, v0, acc0);
  }
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < dim; ++i) sum += a[i] * a[i];
  return sum;
}

void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out) {
  std::size_t r = 0;
  // Four rows per pass share the query loads.
  if (dim % 8 == 0) {
    for (; r + 4 <= n; r += 4) {
      const float* r0 = rows + r * dim;
      const float* r1 = r0 + dim;
      const float* r2 = r1 + dim;
      const float* r3 = r2 + dim;
      __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
      __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
      for (std::size_t i = 0; i < dim; i += 8) {
        const __m256 q = _mm256_loadu_ps(query + i);
        const __m256 d0 = _mm256_sub_ps(q, _mm256_loadu_ps(r0 + i));
        const __m256 d1 = _mm256_sub_ps(q, _mm256_loadu_ps(r1 + i));
        const __m256 d2 = _mm256_sub_ps(q, _mm256_loadu_ps(r2 + i));
        const __m256 d3 = _mm256_sub_ps(q, _mm256_loadu_ps(r3 + i));
        a0 = _mm256_fmadd_ps(d0, d0, a0);
        a1 = _mm256_fmadd_ps(d1, d1, a1);
        a2 = _mm256_fmadd_ps(d2, d2, a2);
        a3 = _mm256_fmadd_ps(d3, d3, a3);
      }
      out[r] = hsum(a0);
      out[r + 1] = hsum(a1);
      out[r + 2] = hsum(a2);
      out[r + 3] = hsum(a3);
    }
  }
  for (; r < n; ++r) out[r] = l2_sqr(query, rows + r * dim, dim);
}

}  // namespace darth::simd::avx2
