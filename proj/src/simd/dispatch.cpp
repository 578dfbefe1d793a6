#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "labeldist/simd/kernels.hpp"

namespace labeldist::simd {
namespace {

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return &scalar_kernels();
    case Backend::kAvx2:
      return avx2_kernels();
    case Backend::kNeon:
      return neon_kernels();
  }
  return nullptr;
}

Backend initial_backend() {
  if (const char* env = std::getenv("LABELDIST_SIMD"); env != nullptr && *env != '\0') {
    const Backend requested = parse_backend(env);
    if (cpu_supports(requested)) return requested;
  }
  return best_backend();
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool cpu_supports(Backend backend) {
  if (table_for(backend) == nullptr) return false;
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
      // NEON is mandatory on AArch64.
      return true;
  }
  return false;
}

Backend best_backend() {
  if (cpu_supports(Backend::kAvx2)) return Backend::kAvx2;
  if (cpu_supports(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

const KernelTable& kernels() { return *table_for(active().load(std::memory_order_relaxed)); }

Backend active_backend() { return active().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!cpu_supports(backend))
    throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(backend)));
  active().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw std::invalid_argument("unknown SIMD backend: " + std::string(name));
}

}  // namespace labeldist::simd
