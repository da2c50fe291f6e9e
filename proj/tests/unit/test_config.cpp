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

#include <gtest/gtest.h>

#include <fstream>

#include "ltuda/config.hpp"
#include "test_support.hpp"

namespace ltuda {
namespace {

using testing::TempDir;

std::filesystem::path write(const TempDir& dir, const std::string& name, const std::string& text) {
  const auto p = dir.path() / name;
  std::ofstream(p) << text;
  return p;
}

TEST(Config, EmptyObjectGivesPaperDefaults) {
  const auto c = parse_config(nlohmann::json::object());
  EXPECT_EQ(c.tau, 0.5);
  EXPECT_EQ(c.views, 2);
  EXPECT_EQ(c.proto_k, 5);
  EXPECT_EQ(c.proto_momentum, 0.999);
  EXPECT_EQ(c.loss.alpha, 0.1);
  EXPECT_EQ(c.loss.lambda1, 0.001);
  EXPECT_EQ(c.loss.lambda2, 0.01);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.lr_power, 0.9);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.embed_dim, 64);
  EXPECT_EQ(c.method, Method::kFull);
  EXPECT_EQ(c.conflict, ConflictRule::kNextBest);
}

TEST(Config, EmptyFileAndEmptyPathUseDefaults) {
  TempDir dir("cfg_empty");
  const auto p = write(dir, "c.json", "{}");
  EXPECT_EQ(to_json(load_config(p)), to_json(TrainConfig{}));
  EXPECT_EQ(to_json(load_config_or_default("")), to_json(TrainConfig{}));
}

TEST(Config, OutOfRangeTauRejected) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"tau": 1.5})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::object(), {"tau=0"}), ConfigError);
}

TEST(Config, UnknownAndIllTypedKeysRejected) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"taux": 0.4})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"proto": {"KK": 3}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"proto": {"K": "three"}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::object(), {"proto.nope=1"}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::object(), {"proto=1"}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::object(), {"novalue"}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::object(), {"aug.strong.placement=prior"}), ConfigError);
}

TEST(Config, OverrideBeatsFile) {
  TempDir dir("cfg_override");
  const auto p = write(dir, "c.json", R"({"aug": {"strong": {"views": 4}}, "train": {"method": "cda"}})");
  EXPECT_EQ(load_config(p).views, 4);
  const auto c = load_config(p, {"aug.strong.views=3", "pseudo.conflict=background"});
  EXPECT_EQ(c.views, 3);
  EXPECT_EQ(c.method, Method::kCda);
  EXPECT_EQ(c.conflict, ConflictRule::kBackground);
}

TEST(Config, RoundTripIsVerbatim) {
  TempDir dir("cfg_rt");
  auto c = parse_config(nlohmann::json::object(), {"seed=42", "optim.lr=0.02", "aug.weak.scale_range=[0.8,1.2]",
                                                    "train.method=baseline", "model.depth=3"});
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.weak.scale_lo, 0.8);
  EXPECT_EQ(c.weak.scale_hi, 1.2);
  save_config(c, dir.path() / "config.json");
  EXPECT_EQ(to_json(load_config(dir.path() / "config.json")), to_json(c));
}

TEST(Config, NamesRoundTrip) {
  for (auto m : {Method::kBaseline, Method::kCda, Method::kFull}) EXPECT_EQ(method_from_string(to_string(m)), m);
  for (auto r : {ConflictRule::kNextBest, ConflictRule::kBackground})
    EXPECT_EQ(conflict_from_string(to_string(r)), r);
  EXPECT_THROW(method_from_string("pda"), ConfigError);
}

TEST(Config, MalformedFile) {
  TempDir dir("cfg_bad");
  EXPECT_THROW(load_config(write(dir, "c.json", "{ not json")), ConfigError);
  EXPECT_THROW(load_config(dir.path() / "missing.json"), ConfigError);
}

}  // namespace
}  // namespace ltuda
