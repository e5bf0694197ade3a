// OpenBLAS is statically linked and picks its kernel set from cpuid in a
// library constructor. Some virtualized CPUs defeat that detection and it
// falls back to the slow generic kernels, so steer it through
// OPENBLAS_CORETYPE before its constructor runs. Priority 1001 orders this
// ahead of OpenBLAS's unprioritized constructor within the final binary.
// A user-provided OPENBLAS_CORETYPE always wins.

#include <cstdlib>

namespace imex::detail {

__attribute__((constructor(1001))) static void tune_blas_coretype() {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
#if defined(__x86_64__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512vl") &&
      __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512dq")) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
  }
#endif
}

// Referenced from the GEMM conv path so the linker keeps this object file.
int blas_tuning_anchor = 0;

}  // namespace imex::detail
