// SPDX-License-Identifier: Apache-2.0
#include "darth/simd/distance.hpp"

namespace darth::simd::scalar {

// Four independent partial sums keep the loop auto-vectorizable while
// fixing a summation order that does not depend on compiler flags.
float l2_sqr(const float* a, const float* b, std::size_t dim) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    const float d0 = a[i] - b[i];
    const float d1 = a[i + 1] - b[i + 1];
    const float d2 = a[i + 2] - b[i + 2];
    const float d3 = a[i + 3] - b[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < dim; ++i) {
    const float d = a[i] - b[i];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

float norm_sqr(const float* a, std::size_t dim) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    s0 += a[i] * a[i];
    s1 += a[i + 1] * a[i + 1];
    s2 += a[i + 2] * a[i + 2];
    s3 += a[i + 3] * a[i + 3];
  }
  for (; i < dim; ++i) s0 += a[i] * a[i];
  return (s0 + s1) + (s2 + s3);
}

void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out) {
  for (std::size_t r = 0; r < n; ++r) out[r] = l2_sqr(query, rows + r * dim, dim);
}

}  // namespace darth::simd::scalar
