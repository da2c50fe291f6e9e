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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ltuda/grid.hpp"

namespace ltuda {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Versioned binary archive: an 8-byte magic, a format version, a JSON
/// metadata block (which lists every tensor), then raw little-endian
/// payloads in metadata order.
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, std::vector<float>> f32;
  std::map<std::string, std::vector<double>> f64;
  std::map<std::string, std::vector<std::uint8_t>> u8;

  friend bool operator==(const Archive&, const Archive&) = default;
};

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

}  // namespace ltuda
