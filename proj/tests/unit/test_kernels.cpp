#include <cstring>
#include <vector>

#include "doctest.h"
#include "gzsl/error.hpp"
#include "gzsl/kernels.hpp"
#include "gzsl/rng.hpp"
#include "gzsl/tensor.hpp"

using namespace gzsl;
using namespace gzsl::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Variants compiled in and runnable here, besides scalar.
std::vector<const KernelTable*> simd_tables() {
  std::vector<const KernelTable*> out;
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (supported(isa)) out.push_back(&table(isa));
  }
  return out;
}

}  // namespace

TEST_CASE("scalar dot matches naive four-lane reduction") {
  Rng rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 33u}) {
    const auto a = random_vec(n, rng), b = random_vec(n, rng);
    double s[4] = {0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
      for (int l = 0; l < 4; ++l) s[l] += a[i + l] * b[i + l];
    }
    double ref = (s[0] + s[1]) + (s[2] + s[3]);
    for (; i < n; ++i) ref += a[i] * b[i];
    CHECK(bits_equal(scalar_table().dot(a.data(), b.data(), n), ref));
  }
}

TEST_CASE("SIMD kernels are bit-identical to scalar") {
  const auto tables = simd_tables();
  if (tables.empty()) MESSAGE("no SIMD variant supported on this CPU; equivalence not exercised");
  const KernelTable& ref = scalar_table();
  Rng rng(2);
  for (const KernelTable* kt : tables) {
    CAPTURE(kt->name);
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto a = random_vec(n, rng), b = random_vec(n, rng);
      CHECK(bits_equal(kt->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n)));
      CHECK(bits_equal(kt->squared_distance(a.data(), b.data(), n), ref.squared_distance(a.data(), b.data(), n)));
      auto y1 = b, y2 = b;
      kt->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      CHECK(bits_equal(y1, y2));
      y1 = b, y2 = b;
      kt->add(a.data(), y1.data(), n);
      ref.add(a.data(), y2.data(), n);
      CHECK(bits_equal(y1, y2));
      y1 = b, y2 = b;
      kt->mul(a.data(), y1.data(), n);
      ref.mul(a.data(), y2.data(), n);
      CHECK(bits_equal(y1, y2));
    }
    for (auto [m, k, n] : {std::tuple{1u, 1u, 1u}, {5u, 7u, 3u}, {17u, 9u, 13u}, {8u, 32u, 4u}}) {
      const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), bt = random_vec(n * k, rng),
                 at = random_vec(k * m, rng);
      std::vector<double> c1(m * n), c2(m * n);
      gemm_nn(*kt, a.data(), b.data(), c1.data(), m, k, n);
      gemm_nn(ref, a.data(), b.data(), c2.data(), m, k, n);
      CHECK(bits_equal(c1, c2));
      gemm_nt(*kt, a.data(), bt.data(), c1.data(), m, k, n);
      gemm_nt(ref, a.data(), bt.data(), c2.data(), m, k, n);
      CHECK(bits_equal(c1, c2));
      gemm_tn(*kt, at.data(), b.data(), c1.data(), m, k, n);
      gemm_tn(ref, at.data(), b.data(), c2.data(), m, k, n);
      CHECK(bits_equal(c1, c2));
    }
  }
}

TEST_CASE("gemm variants agree with a naive triple loop") {
  Rng rng(3);
  const std::size_t m = 4, k = 6, n = 5;
  const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
  std::vector<double> c(m * n);
  gemm_nn(scalar_table(), a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("selecting a kernel variant changes nothing observable") {
  Rng rng(4);
  Tensor2 a(9, 11), b(11, 7);
  for (double& v : a.values()) v = rng.normal();
  for (double& v : b.values()) v = rng.normal();
  const Isa before = active().isa;
  select(Isa::kScalar);
  const Tensor2 ref = matmul(a, b);
  for (const KernelTable* kt : simd_tables()) {
    select(kt->isa);
    CHECK(matmul(a, b) == ref);
  }
  select(before);
}

TEST_CASE("isa names round-trip and unsupported selection throws") {
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) CHECK(parse_isa(isa_name(isa)) == isa);
  CHECK(supported(Isa::kScalar));
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (!supported(isa)) CHECK_THROWS_AS(select(isa), DomainError);
  }
}
