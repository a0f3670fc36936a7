#include "gzsl/dataset.hpp"

#include <sstream>

#include "gzsl/error.hpp"
#include "gzsl/io.hpp"

namespace gzsl::data {

nlohmann::ordered_json Scene::to_json() const {
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = points.row_span(i);
    pts.push_back(std::vector<double>(row.begin(), row.end()));
  }
  nlohmann::ordered_json j;
  j["scene_id"] = scene_id;
  j["points"] = std::move(pts);
  j["labels"] = labels;
  return j;
}

Scene Scene::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("scene_id") || !j.contains("points") || !j.contains("labels")) {
    throw ValidationError("scene needs scene_id, points and labels");
  }
  Scene s;
  try {
    s.scene_id = j.at("scene_id").get<std::string>();
    const auto& pts = j.at("points");
    s.labels = j.at("labels").get<std::vector<int>>();
    if (!pts.is_array()) throw ValidationError("scene " + s.scene_id + ": points is not an array");
    const std::size_t dim = pts.empty() ? 3 : pts.front().size();
    std::vector<double> flat;
    flat.reserve(pts.size() * dim);
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != dim) throw ValidationError("scene " + s.scene_id + ": ragged points");
      for (const auto& v : p) flat.push_back(v.get<double>());
    }
    s.points = Tensor2(pts.size(), dim, std::move(flat));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed scene: " + std::string(e.what()));
  }
  if (s.labels.size() != s.points.rows()) {
    throw ValidationError("scene " + s.scene_id + ": " + std::to_string(s.points.rows()) + " points but " +
                          std::to_string(s.labels.size()) + " labels");
  }
  if (!s.points.all_finite()) throw ValidationError("scene " + s.scene_id + ": non-finite coordinate");
  return s;
}

std::vector<Scene> read_scenes(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      scenes.push_back(Scene::from_json(j));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return scenes;
}

std::string scenes_to_jsonl(const std::vector<Scene>& scenes) {
  std::string out;
  for (const Scene& s : scenes) {
    out += s.to_json().dump();
    out += '\n';
  }
  return out;
}

void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  io::write_atomic(path, scenes_to_jsonl(scenes));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.catalog = semantics::load_embeddings(dir / kClassesFile);
  d.train = read_scenes(dir / kTrainFile);
  d.eval = read_scenes(dir / kEvalFile);
  if (std::filesystem::exists(dir / kSpecFile)) {
    try {
      d.spec = nlohmann::ordered_json::parse(io::read_text(dir / kSpecFile));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError((dir / kSpecFile).string() + ": " + e.what());
    }
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  write_scenes(dir / kTrainFile, dataset.train);
  write_scenes(dir / kEvalFile, dataset.eval);
  semantics::save_embeddings(dataset.catalog, dir / kClassesFile);
  if (dataset.spec) io::write_atomic(dir / kSpecFile, dataset.spec->dump(2) + "\n");
}

}  // namespace gzsl::data
