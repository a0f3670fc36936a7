#include "gzsl/benchgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "gzsl/error.hpp"
#include "gzsl/rng.hpp"

namespace gzsl::benchgen {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::string class_name(bool seen, std::size_t k) {
  std::ostringstream os;
  os << (seen ? "seen_" : "unseen_") << k;
  return os.str();
}

std::string scene_name(const char* split, std::size_t i) {
  std::ostringstream os;
  os << split << '-' << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void BenchSpec::validate() const {
  if (n_seen < 2) throw ValidationError("bench spec: n_seen must be >= 2");
  if (n_unseen < 1) throw ValidationError("bench spec: n_unseen must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("bench spec: rho must lie in [0, 1]");
  if (points_per_scene == 0) throw ValidationError("bench spec: points_per_scene must be >= 1");
  if (train_scenes == 0 || eval_scenes == 0) throw ValidationError("bench spec: both splits need scenes");
  if (min_classes_per_scene < 1 || min_classes_per_scene > n_seen) {
    throw ValidationError("bench spec: min_classes_per_scene must lie in [1, n_seen]");
  }
  if (points_per_scene < n_seen + n_unseen) {
    throw ValidationError("bench spec: points_per_scene must cover every class of a scene");
  }
  if (!(cluster_std >= 0.0) || !(geom_scale > 0.0) || !(spread_gain >= 0.0) || !(context_gain >= 0.0) ||
      context_gain >= 1.0) {
    throw ValidationError("bench spec: cluster_std, spread_gain >= 0, geom_scale > 0, context_gain in [0, 1)");
  }
  // The novel part of an unseen embedding lives in the free coordinates and
  // must be orthogonal to every seen embedding there.
  if (rho < 1.0 && embedding_dim < kGeometryDims + n_seen + 1) {
    throw ValidationError("bench spec: rho = " + std::to_string(rho) + " is infeasible with embedding_dim " +
                          std::to_string(embedding_dim) + "; need >= " + std::to_string(kGeometryDims + n_seen + 1));
  }
  if (embedding_dim < kGeometryDims) {
    throw ValidationError("bench spec: embedding_dim must be >= " + std::to_string(kGeometryDims));
  }
}

nlohmann::ordered_json BenchSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_seen"] = n_seen;
  j["n_unseen"] = n_unseen;
  j["points_per_scene"] = points_per_scene;
  j["train_scenes"] = train_scenes;
  j["eval_scenes"] = eval_scenes;
  j["min_classes_per_scene"] = min_classes_per_scene;
  j["cluster_std"] = cluster_std;
  j["geom_scale"] = geom_scale;
  j["spread_gain"] = spread_gain;
  j["context_gain"] = context_gain;
  j["embedding_dim"] = embedding_dim;
  j["rho"] = rho;
  j["seed"] = seed;
  return j;
}

BenchSpec BenchSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("bench spec must be a JSON object");
  static const std::set<std::string> known{"n_seen",      "n_unseen",     "points_per_scene", "train_scenes",
                                           "eval_scenes", "min_classes_per_scene", "cluster_std", "geom_scale",
                                           "spread_gain", "context_gain", "embedding_dim",    "rho",
                                           "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError("bench spec: unknown field '" + key + "'");
  }
  BenchSpec s;
  try {
    s.n_seen = j.value("n_seen", s.n_seen);
    s.n_unseen = j.value("n_unseen", s.n_unseen);
    s.points_per_scene = j.value("points_per_scene", s.points_per_scene);
    s.train_scenes = j.value("train_scenes", s.train_scenes);
    s.eval_scenes = j.value("eval_scenes", s.eval_scenes);
    s.min_classes_per_scene = j.value("min_classes_per_scene", s.min_classes_per_scene);
    s.cluster_std = j.value("cluster_std", s.cluster_std);
    s.geom_scale = j.value("geom_scale", s.geom_scale);
    s.spread_gain = j.value("spread_gain", s.spread_gain);
    s.context_gain = j.value("context_gain", s.context_gain);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.rho = j.value("rho", s.rho);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bench spec: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

namespace {

std::vector<std::vector<double>> make_embeddings(const BenchSpec& spec, Rng& rng) {
  const std::size_t nt = spec.embedding_dim;
  std::vector<std::vector<double>> t(spec.n_seen + spec.n_unseen, std::vector<double>(nt));
  for (std::size_t c = 0; c < spec.n_seen; ++c) {
    for (double& v : t[c]) v = rng.normal();
  }
  // Distinct relatives while they last.
  std::vector<std::size_t> relatives(spec.n_seen);
  std::iota(relatives.begin(), relatives.end(), std::size_t{0});
  rng.shuffle(relatives);
  for (std::size_t u = 0; u < spec.n_unseen; ++u) {
    const auto& tr = t[relatives[u % spec.n_seen]];
    const double len = norm(tr);
    std::vector<double> novel(nt, 0.0);
    if (spec.rho < 1.0) {
      // Gaussian direction in the free coordinates, Gram-Schmidt against the
      // seen embeddings restricted to those coordinates (twice, for accuracy).
      for (std::size_t i = kGeometryDims; i < nt; ++i) novel[i] = rng.normal();
      std::vector<std::vector<double>> basis;
      for (std::size_t c = 0; c < spec.n_seen; ++c) {
        std::vector<double> b(nt, 0.0);
        std::copy(t[c].begin() + kGeometryDims, t[c].end(), b.begin() + kGeometryDims);
        for (const auto& q : basis) {
          const double p = dot(b, q);
          for (std::size_t i = 0; i < nt; ++i) b[i] -= p * q[i];
        }
        const double bn = norm(b);
        if (bn < 1e-12) continue;
        for (double& v : b) v /= bn;
        basis.push_back(std::move(b));
      }
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) {
          const double p = dot(novel, q);
          for (std::size_t i = 0; i < nt; ++i) novel[i] -= p * q[i];
        }
      }
      const double nn = norm(novel);
      if (nn < 1e-12) throw ValidationError("bench spec: could not build an orthogonal unseen direction");
      for (double& v : novel) v /= nn;
    }
    auto& tu = t[spec.n_seen + u];
    const double a = spec.rho;
    const double b = std::sqrt(std::max(0.0, 1.0 - spec.rho * spec.rho));
    for (std::size_t i = 0; i < nt; ++i) tu[i] = a * tr[i] + b * len * novel[i];
  }
  return t;
}

struct Geometry {
  std::vector<std::array<double, 3>> mean;
  std::vector<std::array<double, 3>> spread;
  std::vector<std::array<double, 3>> context;
};

Geometry geometry(const BenchSpec& spec, const std::vector<std::vector<double>>& t) {
  Geometry g;
  for (std::size_t c = 0; c < t.size(); ++c) {
    std::array<double, 3> m{}, s{}, k{};
    for (std::size_t a = 0; a < 3; ++a) {
      m[a] = spec.geom_scale * t[c][a];
      s[a] = spec.cluster_std * std::exp(spec.spread_gain * t[c][3 + a]);
      k[a] = c < spec.n_seen ? t[c][6 + a] : 0.0;
    }
    g.mean.push_back(m);
    g.spread.push_back(s);
    g.context.push_back(k);
  }
  return g;
}

data::Scene make_scene(const BenchSpec& spec, const Geometry& g, std::string id, std::vector<std::size_t> classes,
                       Rng& rng) {
  std::sort(classes.begin(), classes.end());
  std::array<double, 3> axis_scale{1.0, 1.0, 1.0};
  std::size_t n_ctx = 0;
  std::array<double, 3> ctx{};
  for (std::size_t c : classes) {
    if (c >= spec.n_seen) continue;
    for (std::size_t a = 0; a < 3; ++a) ctx[a] += g.context[c][a];
    ++n_ctx;
  }
  if (n_ctx > 0) {
    for (std::size_t a = 0; a < 3; ++a) axis_scale[a] = 1.0 + spec.context_gain * std::tanh(ctx[a] / n_ctx);
  }
  // One point per class first, the rest uniformly over the scene's classes.
  std::vector<int> labels;
  for (std::size_t c : classes) labels.push_back(static_cast<int>(c));
  while (labels.size() < spec.points_per_scene) labels.push_back(static_cast<int>(classes[rng.index(classes.size())]));
  rng.shuffle(labels);
  data::Scene s;
  s.scene_id = std::move(id);
  s.points = Tensor2(labels.size(), 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t a = 0; a < 3; ++a) {
      s.points(i, a) = g.mean[c][a] * axis_scale[a] + g.spread[c][a] * rng.normal();
    }
  }
  s.labels = std::move(labels);
  return s;
}

std::vector<std::size_t> random_subset(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  rng.shuffle(pool);
  pool.resize(k);
  return pool;
}

}  // namespace

data::Dataset generate(const BenchSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto t = make_embeddings(spec, rng);
  const Geometry g = geometry(spec, t);

  std::vector<semantics::ClassInfo> infos;
  for (std::size_t c = 0; c < t.size(); ++c) {
    const bool seen = c < spec.n_seen;
    infos.push_back({class_name(seen, seen ? c : c - spec.n_seen), c, seen, t[c]});
  }
  data::Dataset d;
  d.catalog = semantics::ClassCatalog(std::move(infos));
  d.spec = spec.to_json();

  std::vector<std::size_t> seen(spec.n_seen);
  std::iota(seen.begin(), seen.end(), std::size_t{0});
  for (std::size_t i = 0; i < spec.train_scenes; ++i) {
    const std::size_t k = spec.min_classes_per_scene + rng.index(spec.n_seen - spec.min_classes_per_scene + 1);
    d.train.push_back(make_scene(spec, g, scene_name("train", i), random_subset(seen, k, rng), rng));
  }

  const std::size_t n_classes = spec.n_seen + spec.n_unseen;
  for (std::size_t i = 0; i < spec.eval_scenes; ++i) {
    // Class (i mod N_c) guarantees coverage; extras fill up to a random size,
    // with at least one seen and one unseen class.
    std::set<std::size_t> chosen{i % n_classes};
    const std::size_t k = spec.min_classes_per_scene + rng.index(n_classes - spec.min_classes_per_scene + 1);
    std::vector<std::size_t> all(n_classes);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(all);
    for (std::size_t c : all) {
      if (chosen.size() >= k) break;
      chosen.insert(c);
    }
    const bool has_seen = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return c < spec.n_seen; });
    const bool has_unseen = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return c >= spec.n_seen; });
    if (!has_seen) chosen.insert(rng.index(spec.n_seen));
    if (!has_unseen) chosen.insert(spec.n_seen + rng.index(spec.n_unseen));
    d.eval.push_back(make_scene(spec, g, scene_name("eval", i),
                                std::vector<std::size_t>(chosen.begin(), chosen.end()), rng));
  }
  return d;
}

std::vector<double> nearest_seen_cosines(const semantics::ClassCatalog& catalog) {
  std::vector<double> out;
  for (std::size_t u : catalog.unseen_ids()) {
    const auto& tu = catalog.at(u).embedding;
    double best = -1.0;
    for (std::size_t s : catalog.seen_ids()) {
      const auto& ts = catalog.at(s).embedding;
      const double denom = norm(tu) * norm(ts);
      best = std::max(best, denom > 0.0 ? dot(tu, ts) / denom : 0.0);
    }
    out.push_back(best);
  }
  return out;
}

nlohmann::ordered_json ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["ok"] = ok();
  j["violations"] = nlohmann::ordered_json::array();
  for (const Violation& v : violations) j["violations"].push_back({{"code", v.code}, {"detail", v.detail}});
  return j;
}

ValidationReport validate(const data::Dataset& dataset, std::optional<double> rho) {
  ValidationReport r;
  const auto& cat = dataset.catalog;
  const std::size_t nc = cat.n_classes();
  auto add = [&](std::string code, std::string detail) { r.violations.push_back({std::move(code), std::move(detail)}); };

  if (dataset.train.empty()) add("empty-split", "training split has no scenes");
  if (dataset.eval.empty()) add("empty-split", "evaluation split has no scenes");

  for (const auto* split : {&dataset.train, &dataset.eval}) {
    for (const data::Scene& s : *split) {
      for (int l : s.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= nc) {
          add("label-out-of-range", s.scene_id + " holds label " + std::to_string(l));
          break;
        }
      }
    }
  }
  for (const data::Scene& s : dataset.train) {
    std::set<int> bad;
    for (int l : s.labels) {
      if (l >= 0 && static_cast<std::size_t>(l) < nc && !cat.is_seen(static_cast<std::size_t>(l))) bad.insert(l);
    }
    for (int l : bad) add("unseen-in-train", s.scene_id + " contains unseen class " + cat.at(l).name);
  }
  std::vector<std::size_t> counts(nc, 0);
  for (const data::Scene& s : dataset.eval) {
    for (int l : s.labels) {
      if (l >= 0 && static_cast<std::size_t>(l) < nc) ++counts[static_cast<std::size_t>(l)];
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (counts[c] == 0) add("class-missing-in-eval", "no evaluation points of class " + cat.at(c).name);
  }

  if (!rho && dataset.spec && dataset.spec->contains("rho")) rho = dataset.spec->at("rho").get<double>();
  if (rho) {
    const auto cos = nearest_seen_cosines(cat);
    for (std::size_t i = 0; i < cos.size(); ++i) {
      if (std::abs(cos[i] - *rho) > 0.05) {
        std::ostringstream os;
        os << cat.at(cat.unseen_ids()[i]).name << " nearest seen cosine " << cos[i] << ", expected " << *rho
           << " +/- 0.05";
        add("cosine-structure", os.str());
      }
    }
  }
  return r;
}

}  // namespace gzsl::benchgen
