#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace gzsl::io {

// Whole-file read. Throws ValidationError if the file is missing or unreadable.
std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// fnv1a64 of a file's contents, as hex.
std::string file_hash(const std::filesystem::path& path);

}  // namespace gzsl::io
