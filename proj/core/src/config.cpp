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

#include "ltuda/config.hpp"

#include <fstream>

namespace ltuda {

using nlohmann::json;

namespace {

// Overlays `user` onto `base`, refusing keys `base` does not know.
void merge_known(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + path);
    if (base[key].is_object()) {
      merge_known(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + text);
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key: " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("override targets a section, not a value: " + key);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare strings like method=full
  *node = value;
}

template <typename T>
T get(const json& doc, const char* section, const char* key) {
  const json& node = section ? doc.at(section) : doc;
  try {
    return node.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for ") + (section ? std::string(section) + "." : "") + key);
  }
}

TrainConfig from_resolved(const json& d) {
  TrainConfig c;
  c.seed = get<std::uint64_t>(d, nullptr, "seed");
  c.tau = get<double>(d, nullptr, "tau");
  c.conflict = conflict_from_string(get<std::string>(d, "pseudo", "conflict"));
  const json& aug = d.at("aug");
  c.weak.max_angle = get<double>(aug, "weak", "max_angle");
  const auto range = get<std::vector<double>>(aug, "weak", "scale_range");
  if (range.size() != 2) throw ConfigError("aug.weak.scale_range needs two numbers");
  c.weak.scale_lo = range[0];
  c.weak.scale_hi = range[1];
  c.views = get<int>(aug, "strong", "views");
  c.placement = get<std::string>(aug, "strong", "placement");
  c.proto_k = get<int>(d, "proto", "K");
  c.proto_momentum = get<double>(d, "proto", "momentum");
  c.loss.alpha = get<double>(d, "loss", "alpha");
  c.loss.lambda1 = get<double>(d, "loss", "lambda1");
  c.loss.lambda2 = get<double>(d, "loss", "lambda2");
  c.loss.w_lproto = get<double>(d, "loss", "w_lproto");
  c.loss.w_ulproto = get<double>(d, "loss", "w_ulproto");
  c.teacher_momentum = get<double>(d, "teacher", "momentum");
  c.lr = get<double>(d, "optim", "lr");
  c.lr_power = get<double>(d, "optim", "power");
  c.sgd_momentum = get<double>(d, "optim", "momentum");
  c.weight_decay = get<double>(d, "optim", "weight_decay");
  c.batch_size = get<int>(d, "train", "batch_size");
  c.stage1_epochs = get<int>(d, "train", "stage1_epochs");
  c.stage2_epochs = get<int>(d, "train", "stage2_epochs");
  c.warmup_epochs = get<int>(d, "train", "warmup_epochs");
  c.method = method_from_string(get<std::string>(d, "train", "method"));
  c.checkpoint_every = get<int>(d, "train", "checkpoint_every");
  c.workers = get<int>(d, "train", "workers");
  c.depth = get<int>(d, "model", "depth");
  c.base_width = get<int>(d, "model", "base_width");
  c.embed_dim = get<int>(d, "model", "embed_dim");
  return c;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kBaseline:
      return "baseline";
    case Method::kCda:
      return "cda";
    case Method::kFull:
      return "full";
  }
  return "full";
}

Method method_from_string(const std::string& name) {
  if (name == "baseline") return Method::kBaseline;
  if (name == "cda") return Method::kCda;
  if (name == "full") return Method::kFull;
  throw ConfigError("train.method must be baseline, cda or full, got '" + name + "'");
}

std::string to_string(ConflictRule rule) { return rule == ConflictRule::kBackground ? "background" : "nextbest"; }

ConflictRule conflict_from_string(const std::string& name) {
  if (name == "nextbest") return ConflictRule::kNextBest;
  if (name == "background") return ConflictRule::kBackground;
  throw ConfigError("pseudo.conflict must be nextbest or background, got '" + name + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
  require(weak.max_angle >= 0.0 && weak.max_angle <= 180.0, "aug.weak.max_angle must lie in [0,180]");
  require(weak.scale_lo > 0.0 && weak.scale_lo <= weak.scale_hi, "aug.weak.scale_range must satisfy 0 < lo <= hi");
  require(views >= 1, "aug.strong.views must be >= 1");
  require(placement == "same", "aug.strong.placement: only 'same' is implemented");
  require(proto_k >= 1, "proto.K must be >= 1");
  require(proto_momentum >= 0.0 && proto_momentum <= 1.0, "proto.momentum must lie in [0,1]");
  require(teacher_momentum >= 0.0 && teacher_momentum <= 1.0, "teacher.momentum must lie in [0,1]");
  try {
    loss.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  require(lr > 0.0, "optim.lr must be positive");
  require(lr_power > 0.0, "optim.power must be positive");
  require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "optim.momentum must lie in [0,1)");
  require(weight_decay >= 0.0, "optim.weight_decay must be non-negative");
  require(batch_size >= 2, "train.batch_size must be >= 2");
  require(stage1_epochs >= 1 && stage2_epochs >= 1, "train.stage*_epochs must be >= 1");
  require(warmup_epochs >= 0, "train.warmup_epochs must be >= 0");
  require(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  require(workers >= 1, "train.workers must be >= 1");
  require(depth >= 1 && depth <= 6, "model.depth must lie in [1,6]");
  require(base_width >= 1 && embed_dim >= 1, "model widths must be positive");
}

BackboneConfig TrainConfig::backbone(int num_classes) const {
  BackboneConfig b;
  b.num_classes = num_classes;
  b.depth = depth;
  b.base_width = base_width;
  b.embed_dim = embed_dim;
  return b;
}

json to_json(const TrainConfig& c) {
  return json{
      {"seed", c.seed},
      {"tau", c.tau},
      {"pseudo", {{"conflict", to_string(c.conflict)}}},
      {"aug",
       {{"weak", {{"max_angle", c.weak.max_angle}, {"scale_range", {c.weak.scale_lo, c.weak.scale_hi}}}},
        {"strong", {{"views", c.views}, {"placement", c.placement}}}}},
      {"proto", {{"K", c.proto_k}, {"momentum", c.proto_momentum}}},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"lambda1", c.loss.lambda1},
        {"lambda2", c.loss.lambda2},
        {"w_lproto", c.loss.w_lproto},
        {"w_ulproto", c.loss.w_ulproto}}},
      {"teacher", {{"momentum", c.teacher_momentum}}},
      {"optim",
       {{"lr", c.lr}, {"power", c.lr_power}, {"momentum", c.sgd_momentum}, {"weight_decay", c.weight_decay}}},
      {"train",
       {{"batch_size", c.batch_size},
        {"stage1_epochs", c.stage1_epochs},
        {"stage2_epochs", c.stage2_epochs},
        {"warmup_epochs", c.warmup_epochs},
        {"method", to_string(c.method)},
        {"checkpoint_every", c.checkpoint_every},
        {"workers", c.workers}}},
      {"model", {{"depth", c.depth}, {"base_width", c.base_width}, {"embed_dim", c.embed_dim}}},
  };
}

TrainConfig parse_config(const json& doc, const std::vector<std::string>& overrides) {
  json resolved = to_json(TrainConfig{});
  if (!doc.is_null()) merge_known(resolved, doc, "");
  for (const auto& o : overrides) apply_override(resolved, o);
  TrainConfig config = from_resolved(resolved);
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc;
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  }
  return parse_config(doc, overrides);
}

TrainConfig load_config_or_default(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config(json{}, overrides);
  return load_config(path, overrides);
}

void save_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace ltuda
