#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "gzsl/benchgen.hpp"
#include "gzsl/error.hpp"
#include "gzsl/io.hpp"
#include "support.hpp"

using namespace gzsl;
using namespace gzsl::benchgen;
using doctest::Approx;

namespace {

BenchSpec small_spec() {
  BenchSpec s;
  s.points_per_scene = 64;
  s.train_scenes = 8;
  s.eval_scenes = 8;
  return s;
}

bool has_code(const ValidationReport& r, const std::string& code) {
  return std::any_of(r.violations.begin(), r.violations.end(), [&](const Violation& v) { return v.code == code; });
}

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
  const auto a = generate(small_spec());
  const auto b = generate(small_spec());
  CHECK(data::scenes_to_jsonl(a.train) == data::scenes_to_jsonl(b.train));
  CHECK(data::scenes_to_jsonl(a.eval) == data::scenes_to_jsonl(b.eval));
  CHECK(a.catalog.to_json().dump() == b.catalog.to_json().dump());
  auto other = small_spec();
  other.seed = 2;
  CHECK(data::scenes_to_jsonl(generate(other).train) != data::scenes_to_jsonl(a.train));

  const auto dir = test::scratch_dir("benchgen_files");
  data::save_dataset(a, dir / "one");
  data::save_dataset(b, dir / "two");
  for (const char* f : {data::kTrainFile, data::kEvalFile, data::kClassesFile, data::kSpecFile}) {
    CAPTURE(f);
    CHECK(io::read_text(dir / "one" / f) == io::read_text(dir / "two" / f));
  }
  const auto back = data::load_dataset(dir / "one");
  CHECK(data::scenes_to_jsonl(back.eval) == data::scenes_to_jsonl(a.eval));
  CHECK(back.spec.has_value());
}

TEST_CASE("generated splits respect the inductive setting and cover every class") {
  const BenchSpec spec = small_spec();
  const auto d = generate(spec);
  CHECK(d.catalog.n_seen() == spec.n_seen);
  CHECK(d.catalog.n_unseen() == spec.n_unseen);
  CHECK(d.train.size() == spec.train_scenes);
  CHECK(d.eval.size() == spec.eval_scenes);
  for (const auto& s : d.train) {
    CHECK(s.size() == spec.points_per_scene);
    std::set<int> present(s.labels.begin(), s.labels.end());
    CHECK(present.size() >= spec.min_classes_per_scene);
    for (int l : present) CHECK(d.catalog.is_seen(static_cast<std::size_t>(l)));
  }
  std::set<int> eval_classes;
  for (const auto& s : d.eval) {
    bool seen = false, unseen = false;
    for (int l : s.labels) {
      eval_classes.insert(l);
      (d.catalog.is_seen(static_cast<std::size_t>(l)) ? seen : unseen) = true;
    }
    CHECK(seen);
    CHECK(unseen);
  }
  CHECK(eval_classes.size() == d.catalog.n_classes());
  CHECK(validate(d).ok());
  for (double c : nearest_seen_cosines(d.catalog)) CHECK(c == Approx(spec.rho).epsilon(1e-12));
}

TEST_CASE("rho = 1 with zero spread makes each unseen class coincide with its relative") {
  BenchSpec spec = small_spec();
  spec.rho = 1.0;
  spec.cluster_std = 0.0;
  const auto d = generate(spec);
  CHECK(validate(d).ok());
  for (std::size_t u : d.catalog.unseen_ids()) {
    const auto& tu = d.catalog.at(u).embedding;
    const auto rel = std::find_if(d.catalog.seen_ids().begin(), d.catalog.seen_ids().end(),
                                  [&](std::size_t s) { return d.catalog.at(s).embedding == tu; });
    REQUIRE(rel != d.catalog.seen_ids().end());
    // With context_gain 0 every point sits on its class mean.
    std::vector<double> pu, ps;
    for (const auto& s : d.eval) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (static_cast<std::size_t>(s.labels[i]) == u) pu.assign(s.points.row_span(i).begin(), s.points.row_span(i).end());
        if (static_cast<std::size_t>(s.labels[i]) == *rel) ps.assign(s.points.row_span(i).begin(), s.points.row_span(i).end());
      }
    }
    if (!pu.empty() && !ps.empty()) CHECK(pu == ps);
  }
}

TEST_CASE("validate reports hand-made corruption") {
  const auto clean = generate(small_spec());

  auto leaked = clean;
  leaked.train[3].labels[5] = static_cast<int>(clean.catalog.unseen_ids().front());
  CHECK(has_code(validate(leaked), "unseen-in-train"));

  auto wild = clean;
  wild.eval[0].labels[0] = 99;
  CHECK(has_code(validate(wild), "label-out-of-range"));

  auto missing = clean;
  const int gone = static_cast<int>(clean.catalog.unseen_ids().back());
  const int fill = static_cast<int>(clean.catalog.seen_ids().front());
  for (auto& s : missing.eval) std::replace(s.labels.begin(), s.labels.end(), gone, fill);
  CHECK(has_code(validate(missing), "class-missing-in-eval"));

  auto empty = clean;
  empty.eval.clear();
  CHECK(has_code(validate(empty), "empty-split"));

  // Shuffle the entries of every embedding vector.
  auto infos = clean.catalog.classes();
  Rng rng(5);
  for (auto& c : infos) rng.shuffle(c.embedding);
  auto shuffled = clean;
  shuffled.catalog = semantics::ClassCatalog(infos);
  CHECK(has_code(validate(shuffled), "cosine-structure"));
  // Without a known rho the cosine check is skipped.
  shuffled.spec.reset();
  CHECK(validate(shuffled).ok());
  CHECK(has_code(validate(shuffled, 0.8), "cosine-structure"));

  const auto j = validate(leaked).to_json();
  CHECK(j["violations"][0]["code"] == "unseen-in-train");
}

TEST_CASE("spec validation") {
  BenchSpec s = small_spec();
  s.rho = 1.2;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = small_spec();
  s.n_seen = 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = small_spec();
  s.n_unseen = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  // Too few free coordinates to place a novel direction orthogonal to the seen set.
  s = small_spec();
  s.embedding_dim = kGeometryDims + s.n_seen;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK_THROWS_AS(generate(s), ValidationError);
  s.rho = 1.0;
  CHECK_NOTHROW(s.validate());

  const auto j = small_spec().to_json();
  const auto back = BenchSpec::from_json(j);
  CHECK(back.to_json() == j);
  nlohmann::json extra = j;
  extra["colour"] = true;
  CHECK_THROWS_AS(BenchSpec::from_json(extra), ValidationError);
  CHECK(BenchSpec::from_json(nlohmann::json::object()).to_json() == BenchSpec{}.to_json());
}
