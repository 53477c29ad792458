// SPDX-License-Identifier: Apache-2.0
#include <arm_neon.h>

#include "darth/simd/distance.hpp"

namespace darth::simd::neon {

float l2_sqr(const float* a, const float* b, std::size_t dim) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= dim; i += 8) {
    const float32x4_t d0 = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
    const float32x4_t d1 = vsubq_f32(vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    acc0 = vfmaq_f32(acc0, d0, d0);
    acc1 = vfmaq_f32(acc1, d1, d1);
  }
  float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

float norm_sqr(const float* a, std::size_t dim) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    const float32x4_t v = vld1q_f32(a + i);
    acc = vfmaq_f32(acc, v, v);
  }
  float sum = vaddvq_f32(acc);
  for (; i < dim; ++i) sum += a[i] * a[i];
  return sum;
}

void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out) {
  for (std::size_t r = 0; r < n; ++r) out[r] = l2_sqr(query, rows + r * dim, dim);
}

}  // namespace darth::simd::neon
