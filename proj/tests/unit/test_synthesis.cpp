#include <cmath>
#include <vector>

#include "doctest.h"
#include "gzsl/error.hpp"
#include "gzsl/synthesis.hpp"
#include "support.hpp"

using namespace gzsl;
using namespace gzsl::synthesis;
using doctest::Approx;

namespace {

const std::vector<double> kBw{1.0, 2.0, 4.0, 8.0, 16.0};

double brute_mmd2(const Tensor2& x, const Tensor2& y, const std::vector<double>& bw) {
  auto k = [&](std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    double s = 0.0;
    for (double sig : bw) s += std::exp(-d2 / (2 * sig * sig));
    return s;
  };
  auto mean_k = [&](const Tensor2& a, const Tensor2& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.rows(); ++j) s += k(a.row_span(i), b.row_span(j));
    }
    return s / static_cast<double>(a.rows() * b.rows());
  };
  return mean_k(x, x) + mean_k(y, y) - 2 * mean_k(x, y);
}

semantics::ClassCatalog toy_catalog() {
  return semantics::ClassCatalog({{"a", 0, true, {1.0, 0.0, 0.5}},
                                  {"b", 0, true, {0.0, 1.0, -0.5}},
                                  {"c", 0, true, {-1.0, 0.3, 0.2}},
                                  {"u", 0, false, {0.8, 0.2, 0.4}}});
}

// Seen classes as well-separated clusters in a 4-dim feature space.
std::vector<SceneFeatures> toy_scenes(Rng& rng, std::size_t n_scenes) {
  std::vector<SceneFeatures> out;
  for (std::size_t s = 0; s < n_scenes; ++s) {
    SceneFeatures sc;
    sc.features = Tensor2(30, 4);
    for (std::size_t i = 0; i < 30; ++i) {
      const int c = static_cast<int>((i + s) % 3);
      sc.labels.push_back(c);
      for (std::size_t d = 0; d < 4; ++d) {
        sc.features(i, d) = (d == static_cast<std::size_t>(c) ? 2.0 : -0.5) + 0.2 * rng.normal();
      }
    }
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace

TEST_CASE("mmd2 examples") {
  Rng rng(1);
  const Tensor2 x = test::random_tensor(6, 3, -1, 1, rng);
  CHECK(std::abs(mmd2(x, x, kBw)) < 1e-12);
  const Tensor2 a(1, 2, std::vector<double>{0, 0}), b(1, 2, std::vector<double>{3, 4});
  double closed = 0.0;
  for (double s : kBw) closed += 2.0 - 2.0 * std::exp(-25.0 / (2 * s * s));
  CHECK(mmd2(a, b, kBw) == Approx(closed).epsilon(1e-13));
  const Tensor2 far(1, 2, std::vector<double>{1e4, 0});
  CHECK(mmd2(a, far, kBw) == Approx(2.0 * kBw.size()).epsilon(1e-12));
  CHECK_THROWS_AS(mmd2(Tensor2(0, 2), a, kBw), DomainError);
  CHECK_THROWS_AS(mmd2(Tensor2(1, 3), a, kBw), ShapeError);
}

TEST_CASE("mmd2 matches brute force, is symmetric and nonnegative") {
  Rng rng(2);
  for (int i = 0; i < 30; ++i) {
    const Tensor2 x = test::random_tensor(1 + rng.index(7), 4, -2, 2, rng);
    const Tensor2 y = test::random_tensor(1 + rng.index(7), 4, -1, 3, rng);
    const double v = mmd2(x, y, kBw);
    CHECK(v == Approx(brute_mmd2(x, y, kBw)).epsilon(1e-12));
    CHECK(v == Approx(mmd2(y, x, kBw)).epsilon(1e-14));
    CHECK(v >= -1e-12);
    Tape tape;
    CHECK(mmd2(tape.constant(x), tape.constant(y), kBw).value().item() == Approx(v).epsilon(1e-13));
  }
}

TEST_CASE("contrastive_loss examples") {
  const Tensor2 anchor(1, 2, std::vector<double>{1, 0});
  const std::vector<int> y0{0};
  CHECK(contrastive_loss(anchor, y0, Tensor2(1, 2, std::vector<double>{2, 0}), y0, 0.1).value == Approx(0.0));
  const Tensor2 reals(2, 2, std::vector<double>{2, 0, 0, 3});
  const std::vector<int> rl{0, 1};
  CHECK(contrastive_loss(anchor, y0, reals, rl, 1.0).value == Approx(0.31326168751822283).epsilon(1e-14));
  const Tensor2 tied(2, 2, std::vector<double>{1, 1, 1, -1});
  CHECK(contrastive_loss(anchor, y0, tied, rl, 0.3).value == Approx(std::log(2.0)).epsilon(1e-14));
  // An anchor whose class has no real sample is skipped.
  const auto r = contrastive_loss(Tensor2(2, 2, std::vector<double>{1, 0, 0, 1}), std::vector<int>{0, 5}, reals,
                                  rl, 1.0);
  CHECK(r.skipped_anchors == 1);
  CHECK(r.value == Approx(0.31326168751822283).epsilon(1e-14));
  CHECK(contrastive_loss(anchor, std::vector<int>{7}, reals, rl, 1.0).value == 0.0);
}

TEST_CASE("prototype_loss examples") {
  const Tensor2 coincident(3, 2, 1.5);
  CHECK(prototype_loss(coincident, std::vector<int>{0, 1, 2}, 1.0) == Approx(1.0));
  const Tensor2 apart(2, 2, std::vector<double>{0, 0, 3, 4});
  CHECK(prototype_loss(apart, std::vector<int>{0, 1}, 5.0) == 0.0);
  const Tensor2 half(4, 1, std::vector<double>{0, 0.5, 1.25, 1.75});
  // Means 0.25 and 1.5, distance 1.25 = m / 2 for m = 2.5.
  CHECK(prototype_loss(half, std::vector<int>{3, 3, 8, 8}, 2.5) == Approx(1.25));
  CHECK_THROWS_AS(prototype_loss(apart, std::vector<int>{1, 1}, 1.0), DomainError);
}

TEST_CASE("decoder losses pass finite differences") {
  Rng rng(3);
  const Tensor2 real = test::random_tensor(5, 3, -1, 1, rng);
  const std::vector<int> sl{0, 1, 0, 2}, rl{0, 1, 2, 0, 1};
  for (int rep = 0; rep < 10; ++rep) {
    CHECK(test::norm_gradient_error([&](Tape& t, Var y) { return mmd2(t.constant(real), y, kBw); },
                                    test::random_tensor(4, 3, -1, 1, rng)) < 1e-6);
    CHECK(test::norm_gradient_error([&](Tape&, Var y) { return mmd2(y, y, kBw); },
                                    test::random_tensor(4, 3, -1, 1, rng)) < 1e-6);
    CHECK(test::norm_gradient_error([&](Tape& t, Var y) { return contrastive_loss(y, sl, t.constant(real), rl, 0.2); },
                                    test::random_tensor(4, 3, -1, 1, rng)) < 1e-6);
    CHECK(test::norm_gradient_error([&](Tape& t, Var x) {
            return contrastive_loss(t.constant(real), rl, x, sl, 0.5);
          }, test::random_tensor(4, 3, -1, 1, rng)) < 1e-6);
    CHECK(test::norm_gradient_error([&](Tape&, Var y) { return prototype_loss(y, sl, 3.0); },
                                    test::random_tensor(4, 3, -1, 1, rng)) < 1e-6);
  }
}

TEST_CASE("decoder synthesis") {
  DecoderConfig cfg;
  cfg.noise_dim = 4;
  cfg.hidden = {8};
  Rng rng(4);
  Decoder dec(cfg, 3, 5, rng);
  CHECK(dec.feature_dim() == 5);
  Rng n1(9), n2(9);
  const Tensor2 z1 = sample_noise(6, 4, n1), z2 = sample_noise(6, 4, n2);
  CHECK(z1 == z2);
  for (double v : z1.values()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  const Tensor2 fused = test::random_tensor(6, 3, -1, 1, rng);
  const Tensor2 f = dec.synthesize(z1, fused);
  CHECK(f == dec.synthesize(z2, fused));
  Tape tape;
  CHECK(dec.synthesize(tape, tape.constant(z1), tape.constant(fused)).value() == f);
  CHECK_THROWS_AS(dec.synthesize(z1, Tensor2(6, 4)), ShapeError);
  CHECK_THROWS_AS(dec.synthesize(z1, Tensor2(5, 3)), ShapeError);

  // All-zero weights: every output row is the last layer's bias.
  for (Parameter* p : dec.parameters()) p->value.fill(0.0);
  Parameter& bias = dec.network().layers().back().bias;
  for (std::size_t c = 0; c < 5; ++c) bias.value(0, c) = 0.1 * static_cast<double>(c) - 0.2;
  const Tensor2 g = dec.synthesize(z1, fused);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(g(r, c) == bias.value(0, c));
  }

  cfg.bandwidths = {};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("decoder config json round trip") {
  DecoderConfig cfg;
  cfg.noise_dim = 7;
  cfg.temperature = 0.3;
  nlohmann::json j = cfg;
  const auto back = j.get<DecoderConfig>();
  CHECK(back.noise_dim == 7);
  CHECK(back.temperature == 0.3);
  CHECK(back.bandwidths == cfg.bandwidths);
}

TEST_CASE("descriptor rows and fused embeddings") {
  const auto cat = toy_catalog();
  const std::vector<int> scene{0, 2, 2};
  const Tensor2 d = descriptor_rows(scene, 4, 2);
  CHECK(d == Tensor2(2, 4, std::vector<double>{1, -1, 1, -1, 1, -1, 1, -1}));
  const std::vector<int> labels{3, 1};
  const Tensor2 plain = fused_embeddings(cat, nullptr, labels, d);
  CHECK(plain(0, 0) == 0.8);
  CHECK(plain(1, 2) == -0.5);
  Rng rng(5);
  const auto layer = semantics::TuningLayer::initialized(3, 4, rng);
  const Tensor2 tuned = fused_embeddings(cat, &layer, labels, d);
  CHECK(tuned == semantics::tune(plain, d, layer));
}

TEST_CASE("train_decoder: zero epochs leaves parameters untouched, training lowers the monitor MMD") {
  const auto cat = toy_catalog();
  Rng data_rng(6);
  const auto scenes = toy_scenes(data_rng, 6);
  DecoderConfig cfg;
  cfg.noise_dim = 4;
  cfg.hidden = {32};
  Rng rng(7);
  Decoder dec(cfg, 3, 4, rng);
  auto tuning = semantics::TuningLayer::initialized(3, 4, rng);
  Decoder d0 = dec;
  const auto t0 = tuning;

  DecoderTrainOptions opt;
  opt.epochs = 0;
  opt.scenes_per_batch = 3;
  const auto none = train_decoder(dec, tuning, cat, scenes, opt);
  CHECK(none.size() == 1);
  for (std::size_t i = 0; i < dec.parameters().size(); ++i) {
    CHECK(dec.parameters()[i]->value == d0.parameters()[i]->value);
  }
  CHECK(tuning.weight.value == t0.weight.value);

  opt.epochs = 60;
  opt.learning_rate = 5e-3;
  Decoder again = d0;
  auto tuning2 = t0;
  std::size_t logged = 0;
  const auto curve = train_decoder(again, tuning2, cat, scenes, opt, [&](const DecoderEpochLog&) { ++logged; });
  CHECK(curve.size() == 61);
  CHECK(logged >= 60);
  CHECK(curve.back().monitor_mmd < 0.5 * curve.front().monitor_mmd);
  CHECK(tuning2.weight.value != t0.weight.value);

  // Same seed, same result.
  Decoder third = d0;
  auto tuning3 = t0;
  const auto curve3 = train_decoder(third, tuning3, cat, scenes, opt);
  CHECK(curve3.back().monitor_mmd == curve.back().monitor_mmd);
  CHECK(third.parameters().back()->value == again.parameters().back()->value);

  // Without tuning the layer is left alone.
  opt.semantic_tuning = false;
  opt.epochs = 3;
  Decoder fourth = d0;
  auto tuning4 = t0;
  train_decoder(fourth, tuning4, cat, scenes, opt);
  CHECK(tuning4.weight.value == t0.weight.value);

  // Trained classes come out separated, and a perturbed embedding moves the output.
  Rng g(8);
  const Tensor2 desc = descriptor_rows(std::vector<int>{0, 1, 2}, 4, 40);
  std::vector<int> la(20, 0), lb(20, 1);
  la.insert(la.end(), lb.begin(), lb.end());
  const Tensor2 f = generate(again, &tuning2, cat, la, desc, g);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = i + 1; j < 40; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 4; ++c) d2 += (f(i, c) - f(j, c)) * (f(i, c) - f(j, c));
      if (la[i] == la[j]) {
        intra += std::sqrt(d2);
        ++n_intra;
      } else {
        inter += std::sqrt(d2);
        ++n_inter;
      }
    }
  }
  CHECK(inter / n_inter > intra / n_intra);

  auto classes = cat.classes();
  classes[0].embedding[0] += 0.5;
  const semantics::ClassCatalog moved(classes);
  Rng g1(10), g2(10);
  const std::vector<int> l0(20, 0);
  const Tensor2 d20 = descriptor_rows(std::vector<int>{0}, 4, 20);
  const Tensor2 base = generate(again, &tuning2, cat, l0, d20, g1);
  const Tensor2 shifted = generate(again, &tuning2, moved, l0, d20, g2);
  double disp = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) disp += std::abs(base.values()[i] - shifted.values()[i]);
  CHECK(disp > 0.0);
}

TEST_CASE("train_decoder rejects unseen labels") {
  const auto cat = toy_catalog();
  Rng rng(11);
  auto scenes = toy_scenes(rng, 2);
  scenes[1].labels[0] = 3;
  DecoderConfig cfg;
  cfg.noise_dim = 2;
  cfg.hidden = {4};
  Decoder dec(cfg, 3, 4, rng);
  auto tuning = semantics::TuningLayer::initialized(3, 4, rng);
  DecoderTrainOptions opt;
  opt.epochs = 1;
  CHECK_THROWS_AS(train_decoder(dec, tuning, cat, scenes, opt), ValidationError);
}
