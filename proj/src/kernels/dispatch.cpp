#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#include "gzsl/error.hpp"
#include "gzsl/kernels.hpp"

namespace gzsl::kernels {

#ifndef GZSL_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef GZSL_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* lookup(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &scalar_table();
    case Isa::kAvx2:
      return avx2_table();
    case Isa::kNeon:
      return neon_table();
  }
  return nullptr;
}

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("GZSL_KERNELS"); env != nullptr && *env != '\0') {
    const Isa wanted = parse_isa(env);
    if (!supported(wanted)) {
      throw DomainError(std::string("GZSL_KERNELS=") + env + " is not supported on this CPU");
    }
    return lookup(wanted);
  }
  return lookup(best_available());
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

bool compiled(Isa isa) { return lookup(isa) != nullptr; }

bool supported(Isa isa) { return compiled(isa) && cpu_has(isa); }

Isa best_available() {
  if (supported(Isa::kAvx2)) return Isa::kAvx2;
  if (supported(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (!supported(isa)) {
    throw DomainError("kernel variant '" + std::string(isa_name(isa)) +
                      "' is not available on this machine");
  }
  active_slot().store(lookup(isa), std::memory_order_release);
}

const KernelTable& table(Isa isa) {
  const KernelTable* t = lookup(isa);
  if (t == nullptr) {
    throw DomainError("kernel variant '" + std::string(isa_name(isa)) + "' was not compiled in");
  }
  return *t;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  if (name == "neon") return Isa::kNeon;
  throw DomainError("unknown kernel variant '" + std::string(name) + "'");
}

void gemm_nn(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) kt.axpy(a_row[p], b + p * n, c_row, n);
  }
}

void gemm_nt(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = kt.dot(a + i * k, b + j * k, k);
  }
}

void gemm_tn(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* a_row = a + p * m;
    const double* b_row = b + p * n;
    for (std::size_t i = 0; i < m; ++i) kt.axpy(a_row[i], b_row, c + i * n, n);
  }
}

}  // namespace gzsl::kernels
