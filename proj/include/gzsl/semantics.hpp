#pragma once

// Class description embeddings and scene-conditioned semantic tuning:
// s = tanh(W d + b) from a +/-1 scene composition descriptor d, and the fused
// embedding t (x) s fed to the feature generator.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gzsl/calibration.hpp"
#include "gzsl/rng.hpp"
#include "gzsl/tape.hpp"
#include "vendor_json.hpp"

namespace gzsl::semantics {

struct ClassInfo {
  std::string name;
  std::size_t id = 0;
  bool seen = true;
  std::vector<double> embedding;
};

class ClassCatalog {
 public:
  ClassCatalog() = default;
  // Ids are reassigned densely in the given order. Throws ValidationError on
  // duplicate names, mixed embedding dimensions, or no seen class.
  explicit ClassCatalog(std::vector<ClassInfo> classes);

  std::size_t n_classes() const { return classes_.size(); }
  std::size_t n_seen() const { return seen_ids_.size(); }
  std::size_t n_unseen() const { return unseen_ids_.size(); }
  std::size_t embedding_dim() const { return classes_.empty() ? 0 : classes_.front().embedding.size(); }

  const ClassInfo& at(std::size_t id) const;
  const std::vector<ClassInfo>& classes() const { return classes_; }
  const std::vector<std::size_t>& seen_ids() const { return seen_ids_; }
  const std::vector<std::size_t>& unseen_ids() const { return unseen_ids_; }
  bool is_seen(std::size_t id) const { return at(id).seen; }
  // Position of a seen class among seen_ids(); throws DomainError for unseen ids.
  std::size_t seen_index(std::size_t id) const;
  calibration::SeenMask seen_mask() const;
  // N_c x N_t
  Tensor2 embeddings() const;

  nlohmann::ordered_json to_json() const;
  static ClassCatalog from_json(const nlohmann::ordered_json& j);

 private:
  std::vector<ClassInfo> classes_;
  std::vector<std::size_t> seen_ids_;
  std::vector<std::size_t> unseen_ids_;
  std::vector<std::size_t> seen_index_;
};

// File format: {"<class name>": {"seen": bool, "vector": [reals]}, ...}; class
// ids follow file order.
ClassCatalog load_embeddings(const std::filesystem::path& path);
void save_embeddings(const ClassCatalog& catalog, const std::filesystem::path& path);

// +1 where a class is present in the scene, -1 elsewhere.
struct SceneComposition {
  std::vector<double> descriptor;
};

SceneComposition scene_descriptor(std::span<const std::size_t> present_ids, std::size_t n_classes);

struct TuningLayer {
  Parameter weight;  // N_t x N_c
  Parameter bias;    // 1 x N_t

  TuningLayer() = default;
  TuningLayer(Tensor2 weight, Tensor2 bias);
  // Weights uniform in +/-0.05, bias 1.0, so s starts near tanh(1) rather than 0.
  static TuningLayer initialized(std::size_t embedding_dim, std::size_t n_classes, Rng& rng);

  std::size_t embedding_dim() const { return weight.value.rows(); }
  std::size_t n_classes() const { return weight.value.cols(); }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter*> parameters() const { return {&weight, &bias}; }
};

// s = tanh(W d + b)
std::vector<double> tuning_vector(const SceneComposition& scene, const TuningLayer& layer);
// t (x) s
std::vector<double> tune(std::span<const double> t, const SceneComposition& scene, const TuningLayer& layer);

// Row-wise tuning on a batch: embeddings and descriptors have one row per sample.
Tensor2 tune(const Tensor2& embeddings, const Tensor2& descriptors, const TuningLayer& layer);
Var tune(Tape& tape, Var embeddings, Var descriptors, TuningLayer& layer);

}  // namespace gzsl::semantics
