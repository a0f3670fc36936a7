#include "gzsl/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "gzsl/error.hpp"
#include "gzsl/io.hpp"

namespace gzsl::ckpt {

namespace {

constexpr char kMagic[8] = {'G', 'Z', 'S', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::string_view bytes, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace

const Tensor2& Checkpoint::get(const std::string& name, std::size_t rows, std::size_t cols) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("checkpoint has no tensor '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw ValidationError("checkpoint tensor '" + name + "' is " + shape_string(it->second) + ", expected " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  }
  return it->second;
}

std::string encode(const nlohmann::ordered_json& meta, const std::vector<const Parameter*>& params) {
  nlohmann::ordered_json header = meta;
  header["tensors"] = nlohmann::ordered_json::array();
  for (const Parameter* p : params) {
    header["tensors"].push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, h.size());
  out += h;
  for (const Parameter* p : params) {
    for (double v : p->value.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode(std::string_view bytes, const std::string& origin) {
  const std::size_t fixed = sizeof kMagic + 4 + 8;
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ValidationError(origin + ": not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kVersion) throw ValidationError(origin + ": unsupported checkpoint version " + std::to_string(version));
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - fixed) throw ValidationError(origin + ": truncated header");
  Checkpoint c;
  try {
    c.meta = nlohmann::ordered_json::parse(bytes.substr(fixed, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(origin + ": malformed header: " + e.what());
  }
  std::size_t at = fixed + hlen;
  try {
    for (const auto& t : c.meta.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      if ((bytes.size() - at) / 8 < rows * cols) throw ValidationError(origin + ": truncated tensor '" + name + "'");
      Tensor2 v(rows, cols);
      for (double& x : v.values()) {
        x = std::bit_cast<double>(get_le<std::uint64_t>(bytes, at));
        at += 8;
      }
      c.tensors.emplace(name, std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": malformed tensor table: " + e.what());
  }
  if (at != bytes.size()) throw ValidationError(origin + ": trailing bytes after the last tensor");
  c.meta.erase("tensors");
  return c;
}

void write(const std::filesystem::path& path, const nlohmann::ordered_json& meta,
           const std::vector<const Parameter*>& params) {
  io::write_atomic(path, encode(meta, params));
}

Checkpoint read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw PrerequisiteError("missing checkpoint " + path.string());
  return decode(io::read_text(path), path.string());
}

std::string parameter_checksum(const std::vector<const Parameter*>& params) {
  std::uint64_t h = io::fnv1a64("");
  for (const Parameter* p : params) {
    h = io::fnv1a64(p->name, h);
    const std::uint64_t dims[2] = {p->value.rows(), p->value.cols()};
    h = io::fnv1a64(std::string_view(reinterpret_cast<const char*>(dims), sizeof dims), h);
    h = io::fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double)),
                    h);
  }
  return io::hex64(h);
}

}  // namespace gzsl::ckpt
