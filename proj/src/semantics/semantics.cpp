#include "gzsl/semantics.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "gzsl/error.hpp"
#include "gzsl/io.hpp"

namespace gzsl::semantics {

ClassCatalog::ClassCatalog(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
  if (classes_.empty()) throw ValidationError("class catalog is empty");
  std::set<std::string> names;
  const std::size_t dim = classes_.front().embedding.size();
  if (dim == 0) throw ValidationError("class '" + classes_.front().name + "' has an empty embedding");
  seen_index_.assign(classes_.size(), 0);
  for (std::size_t id = 0; id < classes_.size(); ++id) {
    ClassInfo& c = classes_[id];
    c.id = id;
    if (c.name.empty()) throw ValidationError("class " + std::to_string(id) + " has an empty name");
    if (!names.insert(c.name).second) throw ValidationError("duplicate class name '" + c.name + "'");
    if (c.embedding.size() != dim) {
      throw ValidationError("class '" + c.name + "' has embedding dimension " + std::to_string(c.embedding.size()) +
                            ", expected " + std::to_string(dim));
    }
    for (double v : c.embedding) {
      if (!std::isfinite(v)) throw ValidationError("class '" + c.name + "' has a non-finite embedding entry");
    }
    if (c.seen) {
      seen_index_[id] = seen_ids_.size();
      seen_ids_.push_back(id);
    } else {
      unseen_ids_.push_back(id);
    }
  }
  if (seen_ids_.empty()) throw ValidationError("class catalog has no seen class");
}

const ClassInfo& ClassCatalog::at(std::size_t id) const {
  if (id >= classes_.size()) throw DomainError("class id " + std::to_string(id) + " out of range");
  return classes_[id];
}

std::size_t ClassCatalog::seen_index(std::size_t id) const {
  if (!at(id).seen) throw DomainError("class '" + at(id).name + "' is not a seen class");
  return seen_index_[id];
}

calibration::SeenMask ClassCatalog::seen_mask() const {
  std::vector<bool> mask(classes_.size());
  for (const ClassInfo& c : classes_) mask[c.id] = c.seen;
  return calibration::SeenMask(std::move(mask));
}

Tensor2 ClassCatalog::embeddings() const {
  Tensor2 out(n_classes(), embedding_dim());
  for (const ClassInfo& c : classes_) std::copy(c.embedding.begin(), c.embedding.end(), out.row_span(c.id).begin());
  return out;
}

nlohmann::ordered_json ClassCatalog::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const ClassInfo& c : classes_) j[c.name] = {{"seen", c.seen}, {"vector", c.embedding}};
  return j;
}

ClassCatalog ClassCatalog::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("class embedding file must be a JSON object");
  std::vector<ClassInfo> classes;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.is_object() || !entry.contains("seen") || !entry.contains("vector")) {
      throw ValidationError("class '" + name + "' must have \"seen\" and \"vector\" fields");
    }
    if (!entry["seen"].is_boolean() || !entry["vector"].is_array()) {
      throw ValidationError("class '" + name + "': \"seen\" must be a bool and \"vector\" an array");
    }
    ClassInfo c;
    c.name = name;
    c.seen = entry["seen"].get<bool>();
    for (const auto& v : entry["vector"]) {
      if (!v.is_number()) throw ValidationError("class '" + name + "': non-numeric embedding entry");
      c.embedding.push_back(v.get<double>());
    }
    classes.push_back(std::move(c));
  }
  return ClassCatalog(std::move(classes));
}

ClassCatalog load_embeddings(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  // Duplicate keys are rejected here; nlohmann would silently keep the last.
  std::set<std::string> seen_keys;
  bool duplicate = false;
  std::string dup_name;
  nlohmann::ordered_json::parser_callback_t cb = [&](int depth, nlohmann::ordered_json::parse_event_t event,
                                                     nlohmann::ordered_json& parsed) {
    if (depth == 1 && event == nlohmann::ordered_json::parse_event_t::key) {
      const auto key = parsed.get<std::string>();
      if (!seen_keys.insert(key).second) {
        duplicate = true;
        dup_name = key;
      }
    }
    return true;
  };
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text, cb);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
  if (duplicate) throw ValidationError("duplicate class name '" + dup_name + "'");
  return ClassCatalog::from_json(j);
}

void save_embeddings(const ClassCatalog& catalog, const std::filesystem::path& path) {
  io::write_atomic(path, catalog.to_json().dump(2) + "\n");
}

SceneComposition scene_descriptor(std::span<const std::size_t> present_ids, std::size_t n_classes) {
  SceneComposition s{std::vector<double>(n_classes, -1.0)};
  for (std::size_t id : present_ids) {
    if (id >= n_classes) throw DomainError("scene_descriptor: class id " + std::to_string(id) + " out of range");
    s.descriptor[id] = 1.0;
  }
  return s;
}

TuningLayer::TuningLayer(Tensor2 w, Tensor2 b) : weight("tuning.weight", std::move(w)), bias("tuning.bias", std::move(b)) {
  if (bias.value.rows() != 1 || bias.value.cols() != weight.value.rows()) {
    throw ShapeError("tuning layer: bias must be 1 x N_t");
  }
}

TuningLayer TuningLayer::initialized(std::size_t embedding_dim, std::size_t n_classes, Rng& rng) {
  Tensor2 w(embedding_dim, n_classes);
  for (double& v : w.values()) v = rng.uniform(-0.05, 0.05);
  return TuningLayer(std::move(w), Tensor2(1, embedding_dim, 1.0));
}

std::vector<double> tuning_vector(const SceneComposition& scene, const TuningLayer& layer) {
  const Tensor2 d = Tensor2::row(scene.descriptor);
  const Tensor2 s = tune(Tensor2(1, layer.embedding_dim(), 1.0), d, layer);
  return {s.values().begin(), s.values().end()};
}

std::vector<double> tune(std::span<const double> t, const SceneComposition& scene, const TuningLayer& layer) {
  const Tensor2 fused = tune(Tensor2::row(t), Tensor2::row(scene.descriptor), layer);
  return {fused.values().begin(), fused.values().end()};
}

Tensor2 tune(const Tensor2& embeddings, const Tensor2& descriptors, const TuningLayer& layer) {
  if (embeddings.rows() != descriptors.rows() || embeddings.cols() != layer.embedding_dim() ||
      descriptors.cols() != layer.n_classes()) {
    throw ShapeError("tune: embeddings " + shape_string(embeddings) + ", descriptors " + shape_string(descriptors) +
                     ", layer " + shape_string(layer.weight.value));
  }
  Tensor2 s = matmul_nt(descriptors, layer.weight.value);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) = std::tanh(s(r, c) + layer.bias.value(0, c));
  }
  for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] *= embeddings.data()[i];
  return s;
}

Var tune(Tape& tape, Var embeddings, Var descriptors, TuningLayer& layer) {
  if (embeddings.rows() != descriptors.rows() || embeddings.cols() != layer.embedding_dim() ||
      descriptors.cols() != layer.n_classes()) {
    throw ShapeError("tune: embeddings " + shape_string(embeddings.value()) + ", descriptors " +
                     shape_string(descriptors.value()) + ", layer " + shape_string(layer.weight.value));
  }
  Var pre = ad::add_row(ad::matmul_nt(descriptors, tape.param(layer.weight)), tape.param(layer.bias));
  return ad::mul(ad::tanh(pre), embeddings);
}

}  // namespace gzsl::semantics
