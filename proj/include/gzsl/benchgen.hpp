#pragma once

// Seeded synthetic GZSL benchmark: each class is a Gaussian cluster in R^3
// whose mean and per-axis spread are read off the leading components of its
// embedding, so semantic-to-geometric transfer is learnable. Unseen embeddings
// are built at a chosen cosine rho to one seen relative.

#include <optional>
#include <string>
#include <vector>

#include "gzsl/dataset.hpp"

namespace gzsl::benchgen {

// Embedding layout: [0,3) cluster mean / geom_scale, [3,6) log spread /
// spread_gain, [6,9) context push (seen classes only), the rest free.
inline constexpr std::size_t kGeometryDims = 9;

struct BenchSpec {
  std::size_t n_seen = 6;
  std::size_t n_unseen = 2;
  std::size_t points_per_scene = 512;
  std::size_t train_scenes = 40;
  std::size_t eval_scenes = 10;
  std::size_t min_classes_per_scene = 3;
  double cluster_std = 0.35;
  double geom_scale = 2.0;
  double spread_gain = 0.25;
  // Scene-level axis scaling 1 + gain * tanh(mean context of the seen classes present).
  double context_gain = 0.0;
  std::size_t embedding_dim = 16;
  double rho = 0.8;
  std::uint64_t seed = 1;

  // Throws ValidationError for out-of-range fields and for an infeasible
  // (rho, embedding_dim) combination.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static BenchSpec from_json(const nlohmann::json& j);
};

// Pure function of the spec.
data::Dataset generate(const BenchSpec& spec);

struct Violation {
  std::string code;  // unseen-in-train, label-out-of-range, class-missing-in-eval, cosine-structure, empty-split
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  nlohmann::ordered_json to_json() const;
};

// The cosine check runs when a rho is known, from `rho` or the recorded spec.
ValidationReport validate(const data::Dataset& dataset, std::optional<double> rho = std::nullopt);

// Largest cosine between each unseen embedding and any seen embedding, unseen in id order.
std::vector<double> nearest_seen_cosines(const semantics::ClassCatalog& catalog);

}  // namespace gzsl::benchgen
