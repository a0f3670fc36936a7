#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>

#include "gzsl/app.hpp"
#include "gzsl/calibration.hpp"
#include "gzsl/evidential.hpp"
#include "gzsl/rng.hpp"
#include "gzsl/semantics.hpp"
#include "gzsl/special.hpp"
#include "gzsl/synthesis.hpp"

namespace gzsl::app {

namespace {

using Build = std::function<Var(Tape&, Var)>;

// |analytic - central difference| / (|analytic| + 1e-8), over the whole input.
double gradient_error(const Build& f, const Tensor2& x0) {
  Tape tape;
  Var x = tape.leaf(x0);
  tape.backward(f(tape, x));
  const Tensor2 g = tape.gradient(x);
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x0.values()[i]));
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

Tensor2 random_tensor(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

struct Line {
  std::ostream& out;
  bool ok = true;
  void operator()(const std::string& name, double err, double tol) {
    const bool pass = err <= tol;
    ok = ok && pass;
    out << std::left << std::setw(34) << name << " err " << std::scientific << std::setprecision(3) << err << "  tol "
        << tol << "  " << (pass ? "PASS" : "FAIL") << "\n"
        << std::defaultfloat;
  }
};

}  // namespace

bool selfcheck(std::ostream& out) {
  Line line{out};
  Rng rng(20240607);

  // Reference values of psi from identities.
  line("digamma(1) = -gamma", std::abs(digamma(1.0) + kEulerGamma), 1e-10);
  line("digamma(2) = 1 - gamma", std::abs(digamma(2.0) - (1.0 - kEulerGamma)), 1e-10);
  line("digamma(0.5) = -gamma - 2 ln 2", std::abs(digamma(0.5) + kEulerGamma + 2.0 * std::log(2.0)), 1e-10);
  double rec = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(1e-3, 50.0);
    rec = std::max(rec, std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) / std::max(1.0, 1.0 / x));
  }
  line("digamma recurrence", rec, 1e-10);

  const std::vector<int> targets{0, evidential::kUnseen, 2, 1, evidential::kUnseen};
  const std::vector<int> labels{0, 4, 2, 1, 3};
  const evidential::EvidentialLossWeights w{0.3, 0.7, evidential::BlOrientation::kTextualIntent};
  auto alpha_in = [&] { return random_tensor(5, 3, 1.05, 6.0, rng); };
  line("grad cross-entropy", gradient_error([&](Tape&, Var x) { return calibration::softmax_cross_entropy(x, labels); },
                                            random_tensor(5, 5, -2, 2, rng)),
       1e-4);
  line("grad L_SL", gradient_error([&](Tape&, Var a) { return evidential::loss_sl(a, targets); }, alpha_in()), 1e-4);
  line("grad L_DL through alpha~",
       gradient_error([&](Tape&, Var a) { return evidential::loss_dl(evidential::modify_alpha(a, targets)); },
                      alpha_in()),
       1e-4);
  line("grad L_BL", gradient_error([&](Tape&, Var a) {
         return evidential::loss_bl(evidential::uncertainty(a), targets, w.bl_orientation);
       }, alpha_in()),
       1e-4);
  line("grad L_EV from logits", gradient_error([&](Tape&, Var l) {
         return evidential::loss_ev(evidential::evidence_from_logits(l), targets, w).total;
       }, random_tensor(5, 3, -2, 2, rng)),
       1e-4);
  const std::vector<double> bw{1.0, 2.0, 4.0};
  const Tensor2 real = random_tensor(4, 3, -1, 1, rng);
  line("grad MMD", gradient_error([&](Tape& t, Var y) { return synthesis::mmd2(t.constant(real), y, bw); },
                                  random_tensor(5, 3, -1, 1, rng)),
       1e-4);
  const std::vector<int> sl{0, 1, 0, 2}, rl{0, 1, 2, 0};
  line("grad contrastive", gradient_error([&](Tape& t, Var y) {
         return synthesis::contrastive_loss(y, sl, t.constant(real), rl, 0.5);
       }, random_tensor(4, 3, -1, 1, rng)),
       1e-4);
  line("grad prototype", gradient_error([&](Tape&, Var y) { return synthesis::prototype_loss(y, sl, 3.0); },
                                        random_tensor(4, 3, -1, 1, rng)),
       1e-4);
  semantics::TuningLayer layer = semantics::TuningLayer::initialized(3, 4, rng);
  layer.weight.value = random_tensor(3, 4, -0.5, 0.5, rng);
  const Tensor2 desc(2, 4, std::vector<double>{1, -1, 1, -1, -1, 1, 1, 1});
  line("grad tuning path", gradient_error([&](Tape& t, Var e) {
         return ad::sum(ad::square(semantics::tune(t, e, t.constant(desc), layer)));
       }, random_tensor(2, 3, -1, 1, rng)),
       1e-4);

  // Monte-Carlo: E[-log p_y] under Dir(2,1,1) for label 0 is psi(4) - psi(2) = 5/6.
  {
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g0 = rng.gamma(2.0), g1 = rng.gamma(1.0), g2 = rng.gamma(1.0);
      const double v = -std::log(g0 / (g0 + g1 + g2));
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    const Tensor2 a(1, 3, std::vector<double>{2, 1, 1});
    const double closed = evidential::loss_sl(a, std::vector<int>{0});
    line("MC L_SL(2,1,1) / 4 SE", std::abs(closed - mean) / (4.0 * se), 1.0);
  }
  // KL(Dir(2,1) || Dir(1,1)) = ln 2 - 1/2: E[log p(x) - log q(x)] with x ~ Beta(2,1).
  {
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g0 = rng.gamma(2.0), g1 = rng.gamma(1.0);
      const double v = std::log(2.0 * g0 / (g0 + g1));
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    const double closed = evidential::dirichlet_kl_to_uniform(std::vector<double>{2.0, 1.0});
    line("MC KL(Dir(2,1)) / 4 SE", std::abs(closed - mean) / (4.0 * se), 1.0);
  }
  out << (line.ok ? "selfcheck passed\n" : "selfcheck FAILED\n");
  return line.ok;
}

}  // namespace gzsl::app
