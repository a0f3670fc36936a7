#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "gzsl/rng.hpp"
#include "gzsl/tape.hpp"

namespace gzsl::test {

using Build = std::function<Var(Tape&, Var)>;

// Largest elementwise |analytic - central difference| / (|analytic| + floor).
inline double max_gradient_error(const Build& f, const Tensor2& x0, double floor = 1e-8) {
  Tape tape;
  Var x = tape.leaf(x0);
  tape.backward(f(tape, x));
  const Tensor2 g = tape.gradient(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double h = 1e-5;
    auto eval = [&](double delta) {
      Tensor2 xp = x0;
      xp.values()[i] += delta;
      Tape t;
      return f(t, t.leaf(xp)).value().item();
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.values()[i]) / (std::abs(g.values()[i]) + floor));
  }
  return worst;
}

// |g - fd|_2 / (|g|_2 + 1e-8) over the whole input.
inline double norm_gradient_error(const Build& f, const Tensor2& x0) {
  Tape tape;
  Var x = tape.leaf(x0);
  tape.backward(f(tape, x));
  const Tensor2 g = tape.gradient(x);
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double h = 1e-5;
    auto eval = [&](double delta) {
      Tensor2 xp = x0;
      xp.values()[i] += delta;
      Tape t;
      return f(t, t.leaf(xp)).value().item();
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    diff2 += (fd - g.values()[i]) * (fd - g.values()[i]);
    norm2 += g.values()[i] * g.values()[i];
  }
  return std::sqrt(diff2) / (std::sqrt(norm2) + 1e-8);
}

inline Tensor2 random_tensor(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gzsl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gzsl::test
