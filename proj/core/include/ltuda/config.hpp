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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ltuda/augment.hpp"
#include "ltuda/backbone.hpp"
#include "ltuda/losses.hpp"
#include "ltuda/teacher.hpp"

namespace ltuda {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Which ablation row a run trains.
enum class Method { kBaseline, kCda, kFull };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
std::string to_string(ConflictRule rule);
ConflictRule conflict_from_string(const std::string& name);

struct TrainConfig {
  std::uint64_t seed = 0;
  double tau = 0.5;
  ConflictRule conflict = ConflictRule::kNextBest;

  WeakAugRanges weak{};
  int views = 2;
  std::string placement = "same";

  int proto_k = 5;
  double proto_momentum = 0.999;
  LossWeights loss{};
  double teacher_momentum = 0.999;

  double lr = 1e-3;
  double lr_power = 0.9;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;

  int batch_size = 4;
  int stage1_epochs = 40;
  int stage2_epochs = 40;
  int warmup_epochs = 1;
  Method method = Method::kFull;
  /// Steps between checkpoints inside a stage; 0 writes only stage ends.
  int checkpoint_every = 0;
  /// Threads for weak augmentation; results do not depend on it.
  int workers = 1;

  int depth = 4;
  int base_width = 16;
  int embed_dim = 64;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
  BackboneConfig backbone(int num_classes) const;
};

nlohmann::json to_json(const TrainConfig& config);

/// Fills defaults, rejects unknown keys and ill-typed values, then
/// applies "dotted.key=value" overrides (which win over `doc`).
TrainConfig parse_config(const nlohmann::json& doc, const std::vector<std::string>& overrides = {});
TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// An empty path means "defaults only".
TrainConfig load_config_or_default(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
void save_config(const TrainConfig& config, const std::filesystem::path& path);

}  // namespace ltuda
