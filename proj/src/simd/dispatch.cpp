// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "darth/common.hpp"
#include "darth/simd/distance.hpp"

namespace darth::simd {
namespace {

KernelTable table_for(Kernel k) {
  switch (k) {
#if defined(DARTH_HAVE_AVX2)
    case Kernel::avx2:
      return {&avx2::l2_sqr, &avx2::norm_sqr, &avx2::l2_sqr_batch};
#endif
#if defined(DARTH_HAVE_NEON)
    case Kernel::neon:
      return {&neon::l2_sqr, &neon::norm_sqr, &neon::l2_sqr_batch};
#endif
    default:
      return {&scalar::l2_sqr, &scalar::norm_sqr, &scalar::l2_sqr_batch};
  }
}

struct Dispatch {
  Kernel kind;
  KernelTable table;
  Dispatch() : kind(detect_kernel()), table(table_for(kind)) {}
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

std::string_view kernel_name(Kernel k) {
  switch (k) {
    case Kernel::scalar:
      return "scalar";
    case Kernel::avx2:
      return "avx2";
    case Kernel::neon:
      return "neon";
  }
  return "unknown";
}

bool kernel_available(Kernel k) {
  switch (k) {
    case Kernel::scalar:
      return true;
    case Kernel::avx2:
#if defined(DARTH_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Kernel::neon:
#if defined(DARTH_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Kernel detect_kernel() {
  if (const char* env = std::getenv("DARTH_SIMD")) {
    const std::string want(env);
    for (Kernel k : {Kernel::scalar, Kernel::avx2, Kernel::neon}) {
      if (want == kernel_name(k) && kernel_available(k)) return k;
    }
  }
  if (kernel_available(Kernel::avx2)) return Kernel::avx2;
  if (kernel_available(Kernel::neon)) return Kernel::neon;
  return Kernel::scalar;
}

Kernel active_kernel() { return dispatch().kind; }

void set_kernel(Kernel k) {
  if (!kernel_available(k)) {
    throw ArgumentError("SIMD kernel '" + std::string(kernel_name(k)) + "' is not available on this CPU");
  }
  dispatch().kind = k;
  dispatch().table = table_for(k);
}

const KernelTable& kernels() { return dispatch().table; }

}  // namespace darth::simd
