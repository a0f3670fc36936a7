#pragma once

// Labeled point scenes. On disk a split is JSON-lines, one scene per line:
//   {"scene_id": "...", "points": [[x, y, z], ...], "labels": [int, ...]}
// and a dataset directory holds train.jsonl, eval.jsonl, classes.json and,
// for generated data, spec.json.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gzsl/semantics.hpp"
#include "gzsl/tensor.hpp"
#include "gzsl/vendor_json.hpp"

namespace gzsl::data {

struct Scene {
  std::string scene_id;
  Tensor2 points;  // n x 3
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  nlohmann::ordered_json to_json() const;
  // Throws ValidationError on missing fields, ragged points, or a label count
  // that does not match the point count.
  static Scene from_json(const nlohmann::json& j);
};

std::vector<Scene> read_scenes(const std::filesystem::path& path);
void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);
std::string scenes_to_jsonl(const std::vector<Scene>& scenes);

struct Dataset {
  semantics::ClassCatalog catalog;
  std::vector<Scene> train;
  std::vector<Scene> eval;
  std::optional<nlohmann::ordered_json> spec;  // generator spec, if recorded
};

inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kEvalFile = "eval.jsonl";
inline constexpr const char* kClassesFile = "classes.json";
inline constexpr const char* kSpecFile = "spec.json";

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace gzsl::data
