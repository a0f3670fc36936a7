#include <cmath>
#include <vector>

#include "doctest.h"
#include "gzsl/error.hpp"
#include "gzsl/evidential.hpp"
#include "gzsl/special.hpp"
#include "support.hpp"

using namespace gzsl;
using namespace gzsl::evidential;
using doctest::Approx;

TEST_CASE("evidence_from_logits examples") {
  const auto a = evidence_from_logits(std::vector<double>{0, 0, 0, 0});
  CHECK(std::vector<double>(a.alpha().begin(), a.alpha().end()) == std::vector<double>{2, 2, 2, 2});
  CHECK(uncertainty(a).value == 0.5);
  const auto floor = evidence_from_logits(std::vector<double>{-40, -40, -40});
  for (double v : floor.alpha()) CHECK(v == Approx(1.0).epsilon(1e-15));
  CHECK(uncertainty(floor).value == Approx(1.0).epsilon(1e-15));
  // Logits past the clamp behave like the clamp.
  const auto below = evidence_from_logits(std::vector<double>{-900, 900});
  CHECK(below.alpha()[0] == floor.alpha()[0]);
  CHECK(std::isfinite(below.alpha()[1]));
  const auto b = evidence_from_logits(std::vector<double>{std::log(3.0), 0});
  CHECK(b.alpha()[0] == Approx(4.0).epsilon(1e-15));
  CHECK(b.alpha()[1] == 2.0);
  CHECK(uncertainty(b).value == Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("uncertainty examples and invariants") {
  CHECK(uncertainty(ConcentrationVector({1, 1, 1, 1})).value == 1.0);
  CHECK(uncertainty(ConcentrationVector({2, 2, 2, 2})).value == 0.5);
  CHECK(uncertainty(ConcentrationVector({9, 1})).value == Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(ConcentrationVector({0.5, 2}), DomainError);
  CHECK_THROWS_AS(ConcentrationVector({1, std::nan("")}), DomainError);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> alpha(2 + rng.index(7));
    for (double& a : alpha) a = 1.0 + rng.gamma(1.0) * 3.0;
    const double u = uncertainty(ConcentrationVector(alpha)).value;
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    auto more = alpha;
    more[rng.index(more.size())] += rng.uniform(1e-3, 2.0);
    CHECK(uncertainty(ConcentrationVector(more)).value < u);
  }
  // u = 1 only at the all-ones vector.
  CHECK(uncertainty(ConcentrationVector({1, 1 + 1e-9})).value < 1.0);
}

TEST_CASE("loss_sl examples") {
  const Tensor2 a(1, 3, std::vector<double>{2, 1, 1});
  CHECK(loss_sl(a, std::vector<int>{0}) == Approx(5.0 / 6.0).epsilon(1e-12));
  const Tensor2 twice(2, 3, std::vector<double>{2, 1, 1, 2, 1, 1});
  CHECK(loss_sl(twice, std::vector<int>{0, 0}) == Approx(5.0 / 6.0).epsilon(1e-12));
  // Concentrated Dirichlet: E[-log pi_k] -> log N_s.
  const Tensor2 c(1, 4, 1e4);
  CHECK(loss_sl(c, std::vector<int>{2}) == Approx(std::log(4.0)).epsilon(1e-4));
  CHECK(loss_sl(a, std::vector<int>{kUnseen}) == 0.0);
  CHECK_THROWS_AS(loss_sl(a, std::vector<int>{3}), DomainError);
}

TEST_CASE("loss_sl agrees with a small Monte-Carlo oracle") {
  Rng rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t k = 2 + rng.index(5);
    Tensor2 a(1, k);
    for (double& v : a.values()) v = rng.uniform(1.0, 5.0);
    const int y = static_cast<int>(rng.index(k));
    const int n = 50000;
    double s = 0.0, s2 = 0.0;
    std::vector<double> g(k);
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += g[j] = rng.gamma(a(0, j));
      const double v = -std::log(g[y] / total);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(loss_sl(a, std::vector<int>{y}) - mean) < 4.0 * se);
  }
}

TEST_CASE("modify_alpha examples") {
  CHECK(modify_alpha(std::vector<double>{1, 1, 1}, 0) == std::vector<double>{2, 1, 1});
  CHECK(modify_alpha(std::vector<double>{4, 4}, 0) == std::vector<double>{1.5, 2});
  CHECK(modify_alpha(std::vector<double>{3.5, 1.25}, kUnseen) == std::vector<double>{3.5, 1.25});
  const Tensor2 batch(2, 2, std::vector<double>{4, 4, 4, 4});
  const Tensor2 m = modify_alpha(batch, std::vector<int>{1, kUnseen});
  CHECK(m == Tensor2(2, 2, std::vector<double>{2, 1.5, 4, 4}));
}

TEST_CASE("loss_dl examples and properties") {
  CHECK(dirichlet_kl_to_uniform(std::vector<double>{1, 1, 1, 1}) == 0.0);
  CHECK(dirichlet_kl_to_uniform(std::vector<double>{2, 1}) == Approx(std::log(2.0) - 0.5).epsilon(1e-12));
  // Exact value of log 6 - 7/6 (the rounded 0.62513 is a slip for 0.62509).
  CHECK(dirichlet_kl_to_uniform(std::vector<double>{3, 1, 1}) == Approx(0.6250928025613883341458).epsilon(1e-12));
  CHECK(dirichlet_kl_to_uniform(std::vector<double>{1 + 1 / std::sqrt(2.0), 1, 1}) ==
        Approx(0.162115835016341881864).epsilon(1e-12));
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(2 + rng.index(7));
    for (double& v : a) v = rng.uniform(0.2, 6.0);
    CHECK(dirichlet_kl_to_uniform(a) > 0.0);
  }
  const Tensor2 batch(2, 2, std::vector<double>{2, 1, 1, 1});
  CHECK(loss_dl(batch) == Approx((std::log(2.0) - 0.5) / 2).epsilon(1e-12));
}

TEST_CASE("loss_bl examples") {
  const double e = std::exp(1.0);
  CHECK(loss_bl(std::vector<double>{1 - 1 / e}, std::vector<int>{0}, BlOrientation::kTextualIntent) ==
        Approx(1.0).epsilon(1e-12));
  CHECK(loss_bl(std::vector<double>{1 / e}, std::vector<int>{kUnseen}, BlOrientation::kTextualIntent) ==
        Approx(1.0).epsilon(1e-12));
  for (auto o : {BlOrientation::kTextualIntent, BlOrientation::kAsPrinted}) {
    CHECK(loss_bl(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, kUnseen, 2}, o) ==
          Approx(std::log(2.0)).epsilon(1e-12));
  }
  // As printed, the indicators are swapped.
  CHECK(loss_bl(std::vector<double>{1 / e}, std::vector<int>{0}, BlOrientation::kAsPrinted) ==
        Approx(1.0).epsilon(1e-12));
  // The clamp keeps the loss finite at u = 1 and u = 0.
  CHECK(std::isfinite(loss_bl(std::vector<double>{1.0, 0.0}, std::vector<int>{0, kUnseen},
                              BlOrientation::kTextualIntent)));
}

TEST_CASE("loss_ev examples") {
  const Tensor2 a(2, 3, std::vector<double>{2, 1, 1, 1.5, 3, 1});
  const std::vector<int> t{0, kUnseen};
  const auto only_sl = loss_ev(a, t, EvidentialLossWeights{0.0, 0.0});
  CHECK(only_sl.total == loss_sl(a, t));
  CHECK(only_sl.total == Approx(5.0 / 6.0).epsilon(1e-12));

  // High-precision reference: L_SL = 5/6, L_DL = 0.34524923244112875,
  // L_BL = 0.99621508234510308 for these inputs.
  const auto full = loss_ev(a, t, EvidentialLossWeights{0.3, 0.7});
  CHECK(full.sl == Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(full.dl == Approx(0.3452492324411287544925).epsilon(1e-12));
  CHECK(full.bl == Approx(0.996215082345103081042).epsilon(1e-12));
  CHECK(full.total == Approx(1.634258660707244068337).epsilon(1e-12));
  const auto printed = loss_ev(a, t, EvidentialLossWeights{0.3, 0.7, BlOrientation::kAsPrinted});
  CHECK(printed.bl == Approx(0.5380697164080255484502).epsilon(1e-12));

  const Tensor2 unseen_only(2, 3, 2.0);
  const auto u = loss_ev(unseen_only, std::vector<int>{kUnseen, kUnseen}, EvidentialLossWeights{});
  CHECK(u.sl == 0.0);

  CHECK_THROWS_AS((EvidentialLossWeights{-1.0, 0.0}.validate()), DomainError);
}

TEST_CASE("taped evidential losses match the plain versions") {
  Rng rng(8);
  const Tensor2 logits = test::random_tensor(6, 4, -3, 3, rng);
  const std::vector<int> t{0, kUnseen, 3, 1, kUnseen, 2};
  const EvidentialLossWeights w{0.005, 0.01};
  Tape tape;
  Var alpha = evidence_from_logits(tape.constant(logits));
  CHECK(alpha.value() == evidence_from_logits(logits));
  const auto taped = loss_ev(alpha, t, w);
  const auto plain = loss_ev(evidence_from_logits(logits), t, w);
  CHECK(taped.total.value().item() == Approx(plain.total).epsilon(1e-14));
  CHECK(taped.terms.dl == Approx(plain.dl).epsilon(1e-14));
  const Tensor2 u = uncertainty(alpha).value();
  const auto u_plain = uncertainty(evidence_from_logits(logits));
  for (std::size_t i = 0; i < u_plain.size(); ++i) CHECK(u(i, 0) == u_plain[i]);
}

TEST_CASE("evidential gradients pass finite differences") {
  Rng rng(9);
  const std::vector<int> t{0, kUnseen, 2, 1, kUnseen};
  for (auto o : {BlOrientation::kTextualIntent, BlOrientation::kAsPrinted}) {
    const EvidentialLossWeights w{0.3, 0.7, o};
    for (int rep = 0; rep < 10; ++rep) {
      CHECK(test::norm_gradient_error([&](Tape&, Var l) { return loss_ev(evidence_from_logits(l), t, w).total; },
                                      test::random_tensor(5, 3, -2, 2, rng)) < 1e-6);
      CHECK(test::norm_gradient_error([&](Tape&, Var a) { return loss_dl(modify_alpha(a, t)); },
                                      test::random_tensor(5, 3, 1.05, 6, rng)) < 1e-6);
    }
  }
}
