#pragma once

// Inner-loop kernels behind the dense layers and the MMD discrepancy.
//
// Every ISA variant reproduces the scalar reference bit for bit: reductions use
// four interleaved partial sums combined as (s0 + s1) + (s2 + s3), the tail is
// added sequentially, and no fused multiply-add is used. A run therefore gives
// identical checkpoints whichever variant the dispatcher picks.

#include <cstddef>
#include <string_view>

namespace gzsl::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y[i] += x[i]
  void (*add)(const double* x, double* y, std::size_t n);
  // y[i] *= x[i]
  void (*mul)(const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the variant was not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool compiled(Isa isa);
// Compiled in and supported by the running CPU.
bool supported(Isa isa);
Isa best_available();

// Table used by all dense algebra. Initialized to best_available() unless the
// GZSL_KERNELS environment variable names another variant ("scalar", "avx2",
// "neon").
const KernelTable& active();
// Throws gzsl::DomainError if `isa` is not supported on this machine.
void select(Isa isa);
const KernelTable& table(Isa isa);

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

// Row-major GEMM variants built on a kernel table. c is overwritten.
// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(const KernelTable& kt, const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

}  // namespace gzsl::kernels
