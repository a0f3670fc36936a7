#include <cmath>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "gzsl/error.hpp"
#include "gzsl/semantics.hpp"
#include "support.hpp"

using namespace gzsl;
using namespace gzsl::semantics;
using doctest::Approx;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  const auto dir = test::scratch_dir("semantics_" + name);
  const auto path = dir / "classes.json";
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("scene_descriptor examples") {
  CHECK(scene_descriptor(std::vector<std::size_t>{}, 3).descriptor == std::vector<double>{-1, -1, -1});
  CHECK(scene_descriptor(std::vector<std::size_t>{0, 1, 2}, 3).descriptor == std::vector<double>{1, 1, 1});
  CHECK(scene_descriptor(std::vector<std::size_t>{0, 2}, 4).descriptor == std::vector<double>{1, -1, 1, -1});
  CHECK(scene_descriptor(std::vector<std::size_t>{2, 2, 0}, 4).descriptor == std::vector<double>{1, -1, 1, -1});
  CHECK_THROWS_AS(scene_descriptor(std::vector<std::size_t>{4}, 4), DomainError);
}

TEST_CASE("tune examples") {
  const SceneComposition scene{{1, -1}};
  const TuningLayer zero(Tensor2(1, 2), Tensor2(1, 1));
  CHECK(tune(std::vector<double>{0.5}, scene, zero) == std::vector<double>{0.0});

  const std::vector<double> t{0.3, -1.7, 2.2};
  const TuningLayer saturated(Tensor2(3, 2), Tensor2(1, 3, 20.0));
  const auto f = tune(t, scene, saturated);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(f[i] - t[i]) < 1e-8 * std::abs(t[i]));

  const TuningLayer toy(Tensor2(1, 2, std::vector<double>{1, -1}), Tensor2(1, 1));
  CHECK(tuning_vector(scene, toy)[0] == Approx(std::tanh(2.0)).epsilon(1e-15));
  CHECK(tune(std::vector<double>{0.5}, scene, toy)[0] == Approx(0.48201379003790844).epsilon(1e-14));
}

TEST_CASE("tuning vector stays in (-1, 1) and reacts to presence bits") {
  Rng rng(1);
  const TuningLayer layer(test::random_tensor(4, 5, -3, 3, rng), test::random_tensor(1, 4, -1, 1, rng));
  for (int i = 0; i < 50; ++i) {
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < 5; ++c) {
      if (rng.uniform() < 0.5) present.push_back(c);
    }
    const auto scene = scene_descriptor(present, 5);
    const auto s = tuning_vector(scene, layer);
    for (double v : s) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
    auto flipped = scene;
    const std::size_t c = rng.index(5);
    flipped.descriptor[c] = -flipped.descriptor[c];
    CHECK(tuning_vector(flipped, layer) != s);
  }
  // A zero column makes that presence bit irrelevant.
  TuningLayer masked = layer;
  for (std::size_t r = 0; r < 4; ++r) masked.weight.value(r, 2) = 0.0;
  auto a = scene_descriptor(std::vector<std::size_t>{0, 2}, 5);
  auto b = scene_descriptor(std::vector<std::size_t>{0}, 5);
  CHECK(tuning_vector(a, masked) == tuning_vector(b, masked));
}

TEST_CASE("initialized tuning layer starts near tanh(1)") {
  Rng rng(2);
  const auto layer = TuningLayer::initialized(6, 8, rng);
  CHECK(layer.embedding_dim() == 6);
  CHECK(layer.n_classes() == 8);
  for (double w : layer.weight.value.values()) CHECK(std::abs(w) <= 0.05);
  for (double b : layer.bias.value.values()) CHECK(b == 1.0);
  const auto s = tuning_vector(scene_descriptor(std::vector<std::size_t>{1, 3}, 8), layer);
  for (double v : s) CHECK(std::abs(v - std::tanh(1.0)) < 0.3);
}

TEST_CASE("batched and taped tune agree with the single-row form and pass finite differences") {
  Rng rng(3);
  TuningLayer layer(test::random_tensor(3, 4, -0.5, 0.5, rng), test::random_tensor(1, 3, -0.5, 0.5, rng));
  const Tensor2 emb = test::random_tensor(2, 3, -1, 1, rng);
  const Tensor2 desc(2, 4, std::vector<double>{1, -1, 1, -1, -1, 1, 1, 1});
  const Tensor2 batched = tune(emb, desc, layer);
  for (std::size_t r = 0; r < 2; ++r) {
    const SceneComposition sc{std::vector<double>(desc.row_span(r).begin(), desc.row_span(r).end())};
    const auto single = tune(emb.row_span(r), sc, layer);
    for (std::size_t c = 0; c < 3; ++c) CHECK(batched(r, c) == Approx(single[c]).epsilon(1e-15));
  }
  Tape tape;
  CHECK(tune(tape, tape.constant(emb), tape.constant(desc), layer).value() == batched);

  // Gradient with respect to the embeddings.
  CHECK(test::max_gradient_error([&](Tape& t, Var e) {
          return ad::sum(ad::square(tune(t, e, t.constant(desc), layer)));
        }, emb) < 1e-4);
  // Gradient with respect to the layer weight, threaded through a leaf copy.
  const Tensor2 w0 = layer.weight.value;
  for (Parameter* p : layer.parameters()) p->zero_grad();
  Tape t2;
  t2.backward(ad::sum(ad::square(tune(t2, t2.constant(emb), t2.constant(desc), layer))));
  const Tensor2 g = layer.weight.grad;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    auto eval = [&](double d) {
      layer.weight.value = w0;
      layer.weight.value.values()[i] += d;
      const Tensor2 out = tune(emb, desc, layer);
      double s = 0.0;
      for (double v : out.values()) s += v * v;
      return s;
    };
    const double fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
    CHECK(std::abs(fd - g.values()[i]) <= 1e-4 * (std::abs(g.values()[i]) + 1e-8));
  }
  layer.weight.value = w0;
  CHECK_THROWS_AS(tune(emb, Tensor2(3, 4), layer), ShapeError);
}

TEST_CASE("class catalog validation") {
  ClassCatalog cat({{"chair", 0, true, {1, 0}}, {"sofa", 0, false, {0, 1}}, {"desk", 0, true, {1, 1}}});
  CHECK(cat.n_classes() == 3);
  CHECK(cat.n_seen() == 2);
  CHECK(cat.at(2).id == 2);
  CHECK(cat.seen_ids() == std::vector<std::size_t>{0, 2});
  CHECK(cat.unseen_ids() == std::vector<std::size_t>{1});
  CHECK(cat.seen_index(2) == 1);
  CHECK_THROWS_AS(cat.seen_index(1), DomainError);
  CHECK(cat.seen_mask().seen(0));
  CHECK_FALSE(cat.seen_mask().seen(1));
  CHECK(cat.embeddings()(2, 1) == 1.0);
  const auto back = ClassCatalog::from_json(cat.to_json());
  CHECK(back.to_json() == cat.to_json());

  CHECK_THROWS_AS(ClassCatalog({{"a", 0, true, {1}}, {"a", 0, false, {2}}}), ValidationError);
  CHECK_THROWS_AS(ClassCatalog({{"a", 0, true, {1, 2, 3}}, {"b", 0, false, {2, 3, 4, 5}}}), ValidationError);
  CHECK_THROWS_AS(ClassCatalog({{"a", 0, false, {1}}}), ValidationError);
  CHECK_THROWS_AS(ClassCatalog(std::vector<ClassInfo>{}), ValidationError);
}

TEST_CASE("load_embeddings examples") {
  const auto ok = write_text("ok", R"({"wall": {"seen": true, "vector": [1, 2, 3]},
                                       "door": {"seen": false, "vector": [0.5, 0, -1]}})");
  const auto cat = load_embeddings(ok);
  CHECK(cat.n_classes() == 2);
  CHECK(cat.embedding_dim() == 3);
  CHECK(cat.at(0).name == "wall");
  CHECK_FALSE(cat.at(1).seen);

  const auto dup = write_text("dup", R"({"wall": {"seen": true, "vector": [1, 2, 3]},
                                         "wall": {"seen": false, "vector": [1, 2, 3]}})");
  CHECK_THROWS_AS(load_embeddings(dup), ValidationError);
  const auto mixed = write_text("mixed", R"({"a": {"seen": true, "vector": [1, 2, 3]},
                                             "b": {"seen": false, "vector": [1, 2, 3, 4]}})");
  CHECK_THROWS_AS(load_embeddings(mixed), ValidationError);
  CHECK_THROWS_AS(load_embeddings(write_text("bad", "{not json")), ValidationError);
  CHECK_THROWS_AS(load_embeddings(write_text("noseen", R"({"a": {"vector": [1]}})")), ValidationError);

  const auto out = test::scratch_dir("semantics_roundtrip") / "c.json";
  save_embeddings(cat, out);
  CHECK(load_embeddings(out).to_json() == cat.to_json());
}
