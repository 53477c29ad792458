// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace darth::simd {

enum class Kernel { scalar, avx2, neon };

std::string_view kernel_name(Kernel k);

// Reference kernels. Always compiled.
namespace scalar {
float l2_sqr(const float* a, const float* b, std::size_t dim);
float norm_sqr(const float* a, std::size_t dim);
void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out);
}  // namespace scalar

#if defined(DARTH_HAVE_AVX2)
namespace avx2 {
float l2_sqr(const float* a, const float* b, std::size_t dim);
float norm_sqr(const float* a, std::size_t dim);
void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out);
}  // namespace avx2
#endif

#if defined(DARTH_HAVE_NEON)
namespace neon {
float l2_sqr(const float* a, const float* b, std::size_t dim);
float norm_sqr(const float* a, std::size_t dim);
void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out);
}  // namespace neon
#endif

/// True when the variant was compiled in and the running CPU supports it.
bool kernel_available(Kernel k);

/// The best available kernel for this CPU. Honors DARTH_SIMD=scalar|avx2|neon.
Kernel detect_kernel();

/// Kernel currently used by the dispatching entry points below.
Kernel active_kernel();

/// Switch the dispatch table. Throws ArgumentError if the kernel is not
/// available. Not thread-safe with respect to in-flight distance calls.
void set_kernel(Kernel k);

struct KernelTable {
  float (*l2_sqr)(const float*, const float*, std::size_t);
  float (*norm_sqr)(const float*, std::size_t);
  void (*l2_sqr_batch)(const float*, const float*, std::size_t, std::size_t, float*);
};

const KernelTable& kernels();

inline float l2_sqr(const float* a, const float* b, std::size_t dim) { return kernels().l2_sqr(a, b, dim); }

inline float l2_sqr(std::span<const float> a, std::span<const float> b) {
  return kernels().l2_sqr(a.data(), b.data(), a.size());
}

inline float norm_sqr(std::span<const float> a) { return kernels().norm_sqr(a.data(), a.size()); }

/// out[i] = ||query - rows[i]||^2 for n row-major rows of width dim.
inline void l2_sqr_batch(const float* query, const float* rows, std::size_t n, std::size_t dim, float* out) {
  kernels().l2_sqr_batch(query, rows, n, dim, out);
}

}  // namespace darth::simd
