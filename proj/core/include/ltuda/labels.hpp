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
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ltuda/grid.hpp"

namespace ltuda {

class DatasetError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// One training or test image. `full_label` is ground truth for evaluation
/// and never reaches the training losses.
struct SampleRecord {
  ImageGrid image;
  PartialLabelMap partial;
  int subset_id = 0;
  std::optional<LabelGrid> full_label;

  Size2 size() const { return image.size(); }
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Relative paths of a sample's tensors inside a dataset directory.
struct SampleFiles {
  std::string image;
  std::string partial_label;
  std::string known_negative;
  std::string full_label;

  friend bool operator==(const SampleFiles&, const SampleFiles&) = default;
};

struct SubsetEntry {
  int subset_id = 0;
  int labeled_class = 1;
  std::vector<SampleFiles> samples;

  friend bool operator==(const SubsetEntry&, const SubsetEntry&) = default;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  int num_classes = 0;
  Size2 image_size{};
  std::uint64_t seed = 0;
  std::vector<SubsetEntry> subsets;
  /// Fully-labelled held-out images (subset_id -1 in the loaded records).
  std::vector<SampleFiles> test_samples;
  /// Directory the relative sample paths resolve against; not serialized.
  std::filesystem::path root;

  std::size_t train_size() const;
  bool operator==(const DatasetManifest& other) const;
};

/// Manifest plus the decoded records.
struct Dataset {
  DatasetManifest manifest;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

struct SyntheticOptions {
  int num_classes = 4;
  int per_subset = 10;
  Size2 size{64, 64};
  std::uint64_t seed = 7;
  int test_count = 10;
  int max_placement_retries = 200;
};

/// Draws the synthetic partially-labelled dataset in memory. Subset i
/// annotates class i+1 only. Deterministic in `options.seed`.
Dataset generate_synthetic_dataset(const SyntheticOptions& options);

/// Generates the dataset and writes it under `out_dir`.
DatasetManifest generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out_dir);

/// Writes manifest.json and every tensor under `out_dir`, assigning file names.
DatasetManifest save_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Parses manifest.json and validates every referenced tensor (existence,
/// byte size, label range).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads manifest and records; accepts either a directory or a manifest path.
Dataset load_dataset(const std::filesystem::path& path);

/// Checks the record invariants against a class count; throws DatasetError.
void validate_record(const SampleRecord& record, int num_classes);

/// Uniformly samples `batch_size` indices (with replacement) over the union
/// of all training samples.
std::vector<std::size_t> sample_indices(std::size_t pool_size, int batch_size, Rng& rng);

std::vector<SampleRecord> sample_batch(const Dataset& dataset, int batch_size, Rng& rng);

// Raw little-endian tensor I/O.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
void write_i16(const std::filesystem::path& path, std::span<const std::int16_t> values);
void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> values);
ImageGrid read_f32_grid(const std::filesystem::path& path, Size2 size);
LabelGrid read_i16_grid(const std::filesystem::path& path, Size2 size);
MaskGrid read_u8_grid(const std::filesystem::path& path, Size2 size);

}  // namespace ltuda
