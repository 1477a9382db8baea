#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "infocal/num/params.hpp"

// Checkpoint layout: `<prefix>.json` is a manifest listing every parameter
// (name, group, shape, byte offset) and `<prefix>.bin` holds the values as
// little-endian float32, concatenated in manifest order.

namespace infocal::num {

inline constexpr const char* kCheckpointFormat = "infocal-checkpoint";

struct CheckpointPaths {
  std::filesystem::path manifest;
  std::filesystem::path blob;
};

inline CheckpointPaths checkpoint_paths(const std::filesystem::path& prefix) {
  return {std::filesystem::path(prefix.string() + ".json"), std::filesystem::path(prefix.string() + ".bin")};
}

inline bool checkpoint_exists(const std::filesystem::path& prefix) {
  auto p = checkpoint_paths(prefix);
  return std::filesystem::exists(p.manifest) && std::filesystem::exists(p.blob);
}

namespace detail {

inline void put_f32_le(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((bits >> (8 * k)) & 0xffu));
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

inline Group group_from_name(const std::string& s) {
  for (auto g : {Group::generator, Group::guider, Group::discriminator, Group::language_model})
    if (s == group_name(g)) return g;
  throw DataError("checkpoint: unknown parameter group '" + s + "'");
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& prefix, const std::string& tag,
                     const nlohmann::json& meta, GroupSet groups = GroupSet::all()) {
  auto paths = checkpoint_paths(prefix);
  if (paths.manifest.has_parent_path()) std::filesystem::create_directories(paths.manifest.parent_path());

  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["version"] = 1;
  manifest["tag"] = tag;
  manifest["dtype"] = "float32-le";
  manifest["blob"] = paths.blob.filename().string();
  manifest["meta"] = meta;
  manifest["params"] = nlohmann::json::array();

  std::vector<unsigned char> blob;
  for (const auto& [name, p] : store) {
    if (!groups.contains(p.group)) continue;
    manifest["params"].push_back({{"name", name},
                                  {"group", group_name(p.group)},
                                  {"shape", p.value.shape()},
                                  {"offset", blob.size()}});
    for (auto v : p.value.values()) detail::put_f32_le(blob, static_cast<float>(v));
  }

  std::ofstream bin(paths.blob, std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write " + paths.blob.string());
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(paths.manifest, std::ios::trunc);
  if (!js) throw DataError("cannot write " + paths.manifest.string());
  js << manifest.dump(2) << "\n";
}

template <typename T>
struct LoadedCheckpoint {
  ParamStore<T> params;
  std::string tag;
  nlohmann::json meta;
};

/// Loads a checkpoint; `expected_tag` empty accepts any tag.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& prefix, const std::string& expected_tag = "") {
  auto paths = checkpoint_paths(prefix);
  std::ifstream js(paths.manifest);
  if (!js) throw DataError("cannot open checkpoint manifest " + paths.manifest.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest " + paths.manifest.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) throw DataError("not an infocal checkpoint: " + paths.manifest.string());
  const std::string tag = manifest.value("tag", "");
  if (!expected_tag.empty() && tag != expected_tag)
    throw DataError("checkpoint tag '" + tag + "' does not match expected '" + expected_tag + "'");

  auto blob_path = paths.manifest.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw DataError("cannot open checkpoint blob " + blob_path.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  LoadedCheckpoint<T> out;
  out.tag = tag;
  out.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = shape_size(shape);
    if (offset + 4 * count > blob.size()) throw DataError("checkpoint blob too short for '" + name + "'");
    std::vector<T> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<T>(detail::get_f32_le(&blob[offset + 4 * i]));
    out.params.add(name, Tensor<T>(shape, std::move(data)), detail::group_from_name(entry.at("group")));
  }
  return out;
}

}  // namespace infocal::num
