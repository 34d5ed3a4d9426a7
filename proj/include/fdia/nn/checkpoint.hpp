#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdia/nn/core.hpp"

namespace fdia::nn {

struct NamedTensor {
  std::string name;
  Tensor* value;
};

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace detail

/// Writes `manifest.json` (the given manifest plus a tensor table) and
/// `weights.bin` (little-endian float64, tensors in table order, each tensor
/// column-major).
inline void write_checkpoint(const std::filesystem::path& dir, nlohmann::json manifest,
                             const std::vector<NamedTensor>& tensors) {
  std::filesystem::create_directories(dir);
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw ConfigError("cannot write " + (dir / "weights.bin").string());
  for (const auto& t : tensors) {
    table.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}, {"offset", offset}});
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, t.value->data() + i, 8);
      bits = detail::to_little_endian(bits);
      blob.write(reinterpret_cast<const char*>(&bits), 8);
    }
    offset += static_cast<std::uint64_t>(t.value->size());
  }
  if (!blob) throw ConfigError("write failed: " + (dir / "weights.bin").string());
  manifest["tensors"] = table;
  manifest["weights"] = {{"file", "weights.bin"}, {"dtype", "float64"}, {"byte_order", "little"},
                         {"layout", "column-major"}, {"count", offset}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw ConfigError("checkpoint manifest not found in " + dir.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint manifest: " + std::string(e.what()));
  }
}

/// Fills already-shaped tensors from a checkpoint; names and shapes must match.
inline void read_weights(const std::filesystem::path& dir, const nlohmann::json& manifest,
                         const std::vector<NamedTensor>& tensors) {
  const auto& table = manifest.at("tensors");
  if (table.size() != tensors.size())
    throw ConfigError("checkpoint holds " + std::to_string(table.size()) + " tensors, model expects " +
                      std::to_string(tensors.size()));
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw ConfigError("checkpoint weights not found in " + dir.string());
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& entry = table[k];
    Tensor& t = *tensors[k].value;
    if (entry.at("name") != tensors[k].name || entry.at("rows") != t.rows() || entry.at("cols") != t.cols())
      throw ConfigError("checkpoint tensor '" + entry.at("name").get<std::string>() + "' does not match model tensor '" +
                        tensors[k].name + "'");
    blob.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>() * 8));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      std::uint64_t bits;
      blob.read(reinterpret_cast<char*>(&bits), 8);
      bits = detail::to_little_endian(bits);
      std::memcpy(t.data() + i, &bits, 8);
    }
    if (!blob) throw ConfigError("checkpoint weights are truncated");
  }
}

}  // namespace fdia::nn
