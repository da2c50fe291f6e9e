/**
 * Copyright 2026 The ltuda Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ltuda/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace ltuda {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'T', 'U', 'D', 'A', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "archive payloads are written in native little-endian order");

template <typename T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw CheckpointError("truncated checkpoint: " + path.string());
  return value;
}

template <typename T>
void write_block(std::ofstream& out, const std::vector<T>& values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <typename T>
void read_block(std::ifstream& in, std::vector<T>& values, std::size_t count, const std::filesystem::path& path) {
  values.resize(count);
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(T)))) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
}

}  // namespace

void save_archive(const Archive& archive, const std::filesystem::path& path) {
  nlohmann::json directory = nlohmann::json::array();
  for (const auto& [name, v] : archive.f32) directory.push_back({{"name", name}, {"dtype", "f32"}, {"count", v.size()}});
  for (const auto& [name, v] : archive.f64) directory.push_back({{"name", name}, {"dtype", "f64"}, {"count", v.size()}});
  for (const auto& [name, v] : archive.u8) directory.push_back({{"name", name}, {"dtype", "u8"}, {"count", v.size()}});
  nlohmann::json header = {{"meta", archive.meta}, {"tensors", directory}};
  const std::string text = header.dump();

  // Write to a sibling file first so a crash never leaves a torn archive.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put(out, Archive::kVersion);
    put(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, v] : archive.f32) write_block(out, v);
    for (const auto& [name, v] : archive.f64) write_block(out, v);
    for (const auto& [name, v] : archive.u8) write_block(out, v);
    if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not an ltuda checkpoint: " + path.string());
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != Archive::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  const auto length = take<std::uint64_t>(in, path);
  if (length > (1ull << 30)) throw CheckpointError("corrupt checkpoint header: " + path.string());
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw CheckpointError("truncated checkpoint: " + path.string());
  const auto header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded() || !header.contains("meta") || !header.contains("tensors")) {
    throw CheckpointError("corrupt checkpoint header: " + path.string());
  }
  Archive archive;
  archive.meta = header["meta"];
  for (const auto& entry : header["tensors"]) {
    const auto name = entry.at("name").get<std::string>();
    const auto dtype = entry.at("dtype").get<std::string>();
    const auto count = entry.at("count").get<std::size_t>();
    if (dtype == "f32") {
      read_block(in, archive.f32[name], count, path);
    } else if (dtype == "f64") {
      read_block(in, archive.f64[name], count, path);
    } else if (dtype == "u8") {
      read_block(in, archive.u8[name], count, path);
    } else {
      throw CheckpointError("unknown tensor dtype '" + dtype + "' in " + path.string());
    }
  }
  return archive;
}

}  // namespace ltuda
