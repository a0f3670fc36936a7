#pragma once

// Binary parameter container:
//   "GZSLCKPT" | u32 version | u64 header bytes | JSON header | float64 blobs
// Integers and doubles are little-endian. The header lists every tensor as
// {"name", "rows", "cols"} in blob order, next to free-form metadata.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gzsl/tape.hpp"
#include "gzsl/vendor_json.hpp"

namespace gzsl::ckpt {

inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  nlohmann::ordered_json meta;
  std::map<std::string, Tensor2> tensors;

  // Throws ValidationError naming the tensor if it is missing or has another shape.
  const Tensor2& get(const std::string& name, std::size_t rows, std::size_t cols) const;
  void load_into(Parameter& p) const { p.value = get(p.name, p.value.rows(), p.value.cols()); }
};

std::string encode(const nlohmann::ordered_json& meta, const std::vector<const Parameter*>& params);
Checkpoint decode(std::string_view bytes, const std::string& origin = "checkpoint");

void write(const std::filesystem::path& path, const nlohmann::ordered_json& meta,
           const std::vector<const Parameter*>& params);
// Throws PrerequisiteError when the file does not exist, ValidationError when it is malformed.
Checkpoint read(const std::filesystem::path& path);

// FNV-1a over names, shapes and value bits.
std::string parameter_checksum(const std::vector<const Parameter*>& params);

}  // namespace gzsl::ckpt
