#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cspeech/error.hpp"
#include "cspeech/nn/layers.hpp"
#include "json.hpp"

namespace cspeech::nn {

namespace fs = std::filesystem;

// weights.bin layout (little-endian host order):
//   "CSPW" u32 version u32 count, then per tensor:
//   u32 name_len, name bytes, i32 rows, i32 cols, rows*cols f32.
inline void save_weights(const fs::path& path, const ParameterList& params) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("CSPW", 4);
  const std::uint32_t version = 1, count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, t] : params) {
    const auto len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    const std::int32_t rows = t.rows(), cols = t.cols();
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

// Loads into an already-constructed model; every parameter must be present
// with the same shape.
inline void load_weights(const fs::path& path, ParameterList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("missing checkpoint weights: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (std::string(magic, 4) != "CSPW") throw SchemaError("not a weights file: " + path.string());
  std::uint32_t version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (version != 1) throw SchemaError("unsupported weights version");
  std::unordered_map<std::string, std::pair<std::pair<int, int>, std::vector<float>>> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::int32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    std::vector<float> values(static_cast<size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!in) throw SchemaError("truncated weights file: " + path.string());
    stored.emplace(std::move(name), std::make_pair(std::make_pair(rows, cols), std::move(values)));
  }
  for (auto& [name, t] : params) {
    auto it = stored.find(name);
    if (it == stored.end()) throw SchemaError("checkpoint lacks parameter " + name);
    if (it->second.first.first != t.rows() || it->second.first.second != t.cols())
      throw DimensionError("checkpoint shape mismatch for " + name);
    t.values() = it->second.second;
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace cspeech::nn
