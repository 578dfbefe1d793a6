#pragma once
// Dense double-precision inner loops used by the autodiff operators.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, a vector implementation (AVX2+FMA on x86-64, NEON on AArch64).
// The active backend is chosen once at startup from the CPU feature flags and
// can be overridden with LABELDIST_SIMD=scalar|avx2|neon or set_backend().

#include <cstddef>
#include <string_view>

namespace labeldist::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n], all row-major and densely packed.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
};

const KernelTable& scalar_kernels();
/// Null when the backend was not compiled in for this target.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

bool cpu_supports(Backend backend);
Backend best_backend();

/// Currently active table. Thread-safe to read; set_backend is meant for
/// startup and tests.
const KernelTable& kernels();
Backend active_backend();
/// Throws std::invalid_argument if the backend is unavailable on this CPU.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view name);

}  // namespace labeldist::simd
