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

#include "ltuda/labels.hpp"

#include <algorithm>
#include <iomanip>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ltuda {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian; big-endian hosts unsupported");

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum class ShapeKind { kEllipse, kRectangle, kAnnulus, kCrescent };

struct Shape {
  ShapeKind kind = ShapeKind::kEllipse;
  double cy = 0, cx = 0;
  double radius = 0;
  double minor = 1.0;  // secondary extent as a fraction of radius
  double angle = 0;
  double hole = 0.5;  // annulus inner radius / crescent bite radius fraction
  double phi = 0;     // crescent bite direction

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    switch (kind) {
      case ShapeKind::kEllipse: {
        const double a = radius;
        const double b = radius * minor;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      }
      case ShapeKind::kRectangle:
        return std::abs(u) <= radius && std::abs(v) <= radius * minor;
      case ShapeKind::kAnnulus: {
        const double r2 = dx * dx + dy * dy;
        return r2 <= radius * radius && r2 >= (radius * hole) * (radius * hole);
      }
      case ShapeKind::kCrescent: {
        if (dx * dx + dy * dy > radius * radius) return false;
        const double by = cy + 0.55 * radius * std::sin(phi);
        const double bx = cx + 0.55 * radius * std::cos(phi);
        const double br = radius * hole;
        return (y - by) * (y - by) + (x - bx) * (x - bx) > br * br;
      }
    }
    return false;
  }
};

/// Per-subset acquisition style; emulates scanner/institution shift. Kept
/// mild, as CT intensities are calibrated: a shifted organ never takes on
/// another organ's intensity.
struct AcquisitionStyle {
  double gain = 1.0;
  double offset = 0.0;
  double noise = 0.05;
};

constexpr std::array<double, 4> kClassIntensity{0.55, 0.15, 0.85, -0.22};
constexpr std::array<double, 4> kClassScale{1.35, 0.95, 0.8, 0.85};
constexpr std::array<ShapeKind, 4> kClassShape{ShapeKind::kEllipse, ShapeKind::kRectangle, ShapeKind::kAnnulus,
                                               ShapeKind::kCrescent};
constexpr double kBackgroundIntensity = -0.45;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

AcquisitionStyle draw_style(Rng& rng) {
  AcquisitionStyle style;
  style.gain = uniform(rng, 0.9, 1.1);
  style.offset = uniform(rng, -0.08, 0.08);
  style.noise = uniform(rng, 0.04, 0.10);
  return style;
}

Shape draw_shape(int cls, Size2 size, Rng& rng) {
  const auto slot = static_cast<std::size_t>((cls - 1) % 4);
  Shape shape;
  shape.kind = kClassShape[slot];
  shape.radius = uniform(rng, 0.09, 0.14) * std::min(size.height, size.width) * kClassScale[slot];
  shape.angle = uniform(rng, 0.0, std::numbers::pi);
  switch (shape.kind) {
    case ShapeKind::kEllipse:
      shape.minor = uniform(rng, 0.6, 1.0);
      break;
    case ShapeKind::kRectangle:
      shape.radius *= uniform(rng, 0.7, 1.0);
      shape.minor = uniform(rng, 0.55, 0.9);
      break;
    case ShapeKind::kAnnulus:
      shape.hole = uniform(rng, 0.4, 0.6);
      break;
    case ShapeKind::kCrescent:
      shape.hole = 0.85;
      shape.phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      break;
  }
  const double margin = shape.radius + 2.0;
  shape.cy = uniform(rng, margin, std::max(margin, size.height - 1 - margin));
  shape.cx = uniform(rng, margin, std::max(margin, size.width - 1 - margin));
  return shape;
}

/// Rasterizes `shape`; returns false if it leaves the canvas or comes
/// within one pixel of an already placed shape.
bool try_place(const Shape& shape, int cls, LabelGrid& labels) {
  const int y0 = static_cast<int>(std::floor(shape.cy - shape.radius)) - 1;
  const int y1 = static_cast<int>(std::ceil(shape.cy + shape.radius)) + 1;
  const int x0 = static_cast<int>(std::floor(shape.cx - shape.radius)) - 1;
  const int x1 = static_cast<int>(std::ceil(shape.cx + shape.radius)) + 1;
  std::vector<std::pair<int, int>> pixels;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!shape.contains(y, x)) continue;
      if (!labels.contains(y, x)) return false;
      for (int ny = y - 1; ny <= y + 1; ++ny) {
        for (int nx = x - 1; nx <= x + 1; ++nx) {
          if (labels.contains(ny, nx) && labels(ny, nx) != kBackground) return false;
        }
      }
      pixels.emplace_back(y, x);
    }
  }
  if (pixels.size() < 4) return false;
  for (auto [y, x] : pixels) labels(y, x) = static_cast<std::int16_t>(cls);
  return true;
}

double class_intensity(int cls) {
  const auto slot = static_cast<std::size_t>((cls - 1) % 4);
  return kClassIntensity[slot] - 0.07 * ((cls - 1) / 4);
}

std::pair<ImageGrid, LabelGrid> draw_image(const SyntheticOptions& options, const AcquisitionStyle& style,
                                           Rng& rng) {
  const Size2 size = options.size;
  LabelGrid labels(size, kBackground);
  for (int cls = 1; cls <= options.num_classes; ++cls) {
    bool placed = false;
    for (int attempt = 0; attempt < options.max_placement_retries && !placed; ++attempt) {
      placed = try_place(draw_shape(cls, size, rng), cls, labels);
    }
    if (!placed) {
      throw GenerationError("could not place class " + std::to_string(cls) + " without overlap after " +
                            std::to_string(options.max_placement_retries) + " retries (" +
                            std::to_string(size.height) + "x" + std::to_string(size.width) + ", C=" +
                            std::to_string(options.num_classes) + ")");
    }
  }

  std::vector<double> jitter(static_cast<std::size_t>(options.num_classes) + 1);
  for (auto& j : jitter) j = uniform(rng, -0.08, 0.08);
  const double grad_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double grad_amp = uniform(rng, 0.0, 0.12);
  std::normal_distribution<double> noise(0.0, style.noise);

  ImageGrid image(size);
  const double cy = 0.5 * (size.height - 1);
  const double cx = 0.5 * (size.width - 1);
  const double norm = 1.0 / std::max(1, std::max(size.height, size.width));
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const int cls = labels(y, x);
      double v = cls == kBackground ? kBackgroundIntensity : class_intensity(cls);
      v += jitter[static_cast<std::size_t>(cls)];
      v += grad_amp * ((x - cx) * std::cos(grad_angle) + (y - cy) * std::sin(grad_angle)) * norm;
      v = style.gain * v + style.offset + noise(rng);
      image(y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  return {std::move(image), std::move(labels)};
}

SampleRecord make_partial_record(ImageGrid image, LabelGrid full, int subset_id, int labeled_class) {
  SampleRecord record;
  record.subset_id = subset_id;
  record.partial.labeled_class = labeled_class;
  record.partial.classes = LabelGrid(full.size(), kUnknown);
  record.partial.known_negative = MaskGrid(full.size(), 0);
  for (std::size_t i = 0; i < full.area(); ++i) {
    if (full[i] == labeled_class) {
      record.partial.classes[i] = static_cast<std::int16_t>(labeled_class);
    } else {
      record.partial.known_negative[i] = 1;
    }
  }
  record.image = std::move(image);
  record.full_label = std::move(full);
  return record;
}

template <typename T>
void write_raw(const fs::path& path, std::span<const T> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw DatasetError("write failed: " + path.string());
}

template <typename T>
Grid<T> read_raw(const fs::path& path, Size2 size) {
  if (!fs::exists(path)) throw DatasetError("missing tensor file: " + path.string());
  const auto bytes = fs::file_size(path);
  const auto expected = size.area() * sizeof(T);
  if (bytes != expected) {
    throw DatasetError("shape mismatch in " + path.string() + ": " + std::to_string(bytes) + " bytes, expected " +
                       std::to_string(expected) + " for " + std::to_string(size.height) + "x" +
                       std::to_string(size.width));
  }
  Grid<T> grid(size);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(grid.storage().data()), static_cast<std::streamsize>(expected));
  if (!in) throw DatasetError("read failed: " + path.string());
  return grid;
}

json files_to_json(const SampleFiles& files) {
  return json{{"image", files.image},
              {"partial_label", files.partial_label},
              {"known_negative", files.known_negative},
              {"full_label", files.full_label}};
}

SampleFiles files_from_json(const json& j) {
  SampleFiles files;
  files.image = j.at("image").get<std::string>();
  files.partial_label = j.value("partial_label", std::string{});
  files.known_negative = j.value("known_negative", std::string{});
  files.full_label = j.value("full_label", std::string{});
  if (files.image.empty()) throw DatasetError("sample entry without image path");
  return files;
}

SampleRecord read_record(const DatasetManifest& manifest, const SampleFiles& files, int subset_id,
                         int labeled_class) {
  const Size2 size = manifest.image_size;
  SampleRecord record;
  record.subset_id = subset_id;
  record.image = read_f32_grid(manifest.root / files.image, size);
  record.partial.labeled_class = labeled_class;
  record.partial.classes =
      files.partial_label.empty() ? LabelGrid(size, kUnknown) : read_i16_grid(manifest.root / files.partial_label, size);
  if (!files.known_negative.empty()) {
    record.partial.known_negative = read_u8_grid(manifest.root / files.known_negative, size);
  }
  if (!files.full_label.empty()) record.full_label = read_i16_grid(manifest.root / files.full_label, size);
  try {
    validate_record(record, manifest.num_classes);
  } catch (const DatasetError& e) {
    throw DatasetError(std::string(e.what()) + " [" + (manifest.root / files.image).string() + "]");
  }
  return record;
}

fs::path manifest_path_for(const fs::path& path) {
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

}  // namespace

std::size_t DatasetManifest::train_size() const {
  std::size_t n = 0;
  for (const auto& s : subsets) n += s.samples.size();
  return n;
}

bool DatasetManifest::operator==(const DatasetManifest& other) const {
  return version == other.version && num_classes == other.num_classes && image_size == other.image_size &&
         seed == other.seed && subsets == other.subsets && test_samples == other.test_samples;
}

void write_f32(const fs::path& path, std::span<const float> values) { write_raw(path, values); }
void write_i16(const fs::path& path, std::span<const std::int16_t> values) { write_raw(path, values); }
void write_u8(const fs::path& path, std::span<const std::uint8_t> values) { write_raw(path, values); }
ImageGrid read_f32_grid(const fs::path& path, Size2 size) { return read_raw<float>(path, size); }
LabelGrid read_i16_grid(const fs::path& path, Size2 size) { return read_raw<std::int16_t>(path, size); }
MaskGrid read_u8_grid(const fs::path& path, Size2 size) { return read_raw<std::uint8_t>(path, size); }

void validate_record(const SampleRecord& record, int num_classes) {
  const Size2 size = record.image.size();
  if (record.partial.classes.size() != size) throw DatasetError("partial label size differs from image");
  if (record.partial.labeled_class < 1 || record.partial.labeled_class > num_classes) {
    throw DatasetError("labeled_class " + std::to_string(record.partial.labeled_class) + " outside 1.." +
                       std::to_string(num_classes));
  }
  for (float v : record.image.values()) {
    if (!(v >= -1.0f && v <= 1.0f)) throw DatasetError("image value outside [-1, 1]");
  }
  for (std::int16_t v : record.partial.classes.values()) {
    if (v < kUnknown || v > num_classes) {
      throw DatasetError("partial label value " + std::to_string(v) + " outside {-1,0.." + std::to_string(num_classes) +
                         "}");
    }
    if (v != kUnknown && v != record.partial.labeled_class) {
      throw DatasetError("partial label value " + std::to_string(v) + " differs from labeled_class " +
                         std::to_string(record.partial.labeled_class));
    }
  }
  const auto& negatives = record.partial.known_negative;
  if (!negatives.empty()) {
    if (negatives.size() != size) throw DatasetError("known_negative size differs from image");
    for (std::size_t i = 0; i < negatives.area(); ++i) {
      if (negatives[i] > 1) throw DatasetError("known_negative value outside {0,1}");
      if (negatives[i] == 1 && record.partial.classes[i] == record.partial.labeled_class) {
        throw DatasetError("pixel is both labeled and a known negative");
      }
    }
  }
  if (record.full_label) {
    const auto& full = *record.full_label;
    if (full.size() != size) throw DatasetError("full label size differs from image");
    for (std::size_t i = 0; i < full.area(); ++i) {
      if (full[i] < 0 || full[i] > num_classes) {
        throw DatasetError("full label value " + std::to_string(full[i]) + " outside {0.." +
                           std::to_string(num_classes) + "}");
      }
      const auto p = record.partial.classes[i];
      if (p != kUnknown && p != full[i]) throw DatasetError("partial label disagrees with full label");
      if (!negatives.empty() && negatives[i] == 1 && full[i] == record.partial.labeled_class) {
        throw DatasetError("known negative covers a labeled-class pixel");
      }
    }
  }
}

Dataset generate_synthetic_dataset(const SyntheticOptions& options) {
  if (options.num_classes < 2) throw GenerationError("need at least 2 classes");
  if (options.per_subset < 1) throw GenerationError("need at least 1 sample per subset");
  if (options.size.height < 32 || options.size.width < 32) throw GenerationError("image size must be at least 32x32");
  if (options.test_count < 0) throw GenerationError("negative test count");

  Rng rng(options.seed);
  std::vector<AcquisitionStyle> styles;
  for (int s = 0; s < options.num_classes; ++s) styles.push_back(draw_style(rng));

  Dataset dataset;
  auto& m = dataset.manifest;
  m.num_classes = options.num_classes;
  m.image_size = options.size;
  m.seed = options.seed;
  for (int s = 0; s < options.num_classes; ++s) {
    SubsetEntry entry;
    entry.subset_id = s;
    entry.labeled_class = s + 1;
    entry.samples.resize(static_cast<std::size_t>(options.per_subset));
    m.subsets.push_back(std::move(entry));
    for (int i = 0; i < options.per_subset; ++i) {
      auto [image, full] = draw_image(options, styles[static_cast<std::size_t>(s)], rng);
      dataset.train.push_back(make_partial_record(std::move(image), std::move(full), s, s + 1));
    }
  }
  std::uniform_int_distribution<int> pick_style(0, options.num_classes - 1);
  for (int i = 0; i < options.test_count; ++i) {
    const int s = pick_style(rng);
    auto [image, full] = draw_image(options, styles[static_cast<std::size_t>(s)], rng);
    SampleRecord record;
    record.subset_id = -1;
    record.partial.labeled_class = 1;
    record.partial.classes = LabelGrid(options.size, kUnknown);
    record.image = std::move(image);
    record.full_label = std::move(full);
    dataset.test.push_back(std::move(record));
  }
  m.test_samples.resize(dataset.test.size());
  return dataset;
}

DatasetManifest save_dataset(const Dataset& dataset, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest m = dataset.manifest;
  m.root = out_dir;
  std::size_t cursor = 0;
  auto name = [](const std::string& dir, std::size_t i, const char* suffix) {
    std::ostringstream os;
    os << dir << "/" << std::setw(4) << std::setfill('0') << i << suffix;
    return os.str();
  };
  for (auto& subset : m.subsets) {
    const std::string dir = "subset" + std::to_string(subset.subset_id);
    fs::create_directories(out_dir / dir);
    for (std::size_t i = 0; i < subset.samples.size(); ++i, ++cursor) {
      if (cursor >= dataset.train.size()) throw DatasetError("manifest lists more samples than records");
      const auto& r = dataset.train[cursor];
      SampleFiles files;
      files.image = name(dir, i, ".image.f32");
      files.partial_label = name(dir, i, ".partial.i16");
      write_f32(out_dir / files.image, r.image.values());
      write_i16(out_dir / files.partial_label, r.partial.classes.values());
      if (!r.partial.known_negative.empty()) {
        files.known_negative = name(dir, i, ".knownneg.u8");
        write_u8(out_dir / files.known_negative, r.partial.known_negative.values());
      }
      if (r.full_label) {
        files.full_label = name(dir, i, ".full.i16");
        write_i16(out_dir / files.full_label, r.full_label->values());
      }
      subset.samples[i] = files;
    }
  }
  m.test_samples.clear();
  if (!dataset.test.empty()) fs::create_directories(out_dir / "test");
  for (std::size_t i = 0; i < dataset.test.size(); ++i) {
    const auto& r = dataset.test[i];
    SampleFiles files;
    files.image = name("test", i, ".image.f32");
    write_f32(out_dir / files.image, r.image.values());
    if (r.full_label) {
      files.full_label = name("test", i, ".full.i16");
      write_i16(out_dir / files.full_label, r.full_label->values());
    }
    m.test_samples.push_back(files);
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

DatasetManifest generate_synthetic(const SyntheticOptions& options, const fs::path& out_dir) {
  return save_dataset(generate_synthetic_dataset(options), out_dir);
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json j;
  j["version"] = manifest.version;
  j["C"] = manifest.num_classes;
  j["image_size"] = {manifest.image_size.height, manifest.image_size.width};
  j["seed"] = manifest.seed;
  j["subsets"] = json::array();
  for (const auto& s : manifest.subsets) {
    json entry{{"subset_id", s.subset_id}, {"labeled_class", s.labeled_class}, {"samples", json::array()}};
    for (const auto& f : s.samples) entry["samples"].push_back(files_to_json(f));
    j["subsets"].push_back(std::move(entry));
  }
  j["test_samples"] = json::array();
  for (const auto& f : manifest.test_samples) j["test_samples"].push_back(files_to_json(f));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

namespace {

DatasetManifest parse_manifest(const fs::path& path) {
  const fs::path file = manifest_path_for(path);
  std::ifstream in(file);
  if (!in) throw DatasetError("missing manifest: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + file.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != DatasetManifest::kVersion) {
      throw DatasetError("unsupported manifest version " + std::to_string(m.version));
    }
    m.num_classes = j.at("C").get<int>();
    const auto size = j.at("image_size");
    m.image_size = Size2{size.at(0).get<int>(), size.at(1).get<int>()};
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("subsets")) {
      SubsetEntry entry;
      entry.subset_id = s.at("subset_id").get<int>();
      entry.labeled_class = s.at("labeled_class").get<int>();
      for (const auto& f : s.at("samples")) entry.samples.push_back(files_from_json(f));
      m.subsets.push_back(std::move(entry));
    }
    if (j.contains("test_samples")) {
      for (const auto& f : j.at("test_samples")) m.test_samples.push_back(files_from_json(f));
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + file.string() + ": " + e.what());
  }
  m.root = file.parent_path();

  if (m.num_classes < 1) throw DatasetError("manifest C must be positive");
  if (m.image_size.height < 1 || m.image_size.width < 1) throw DatasetError("manifest image_size must be positive");
  std::set<int> covered;
  for (const auto& s : m.subsets) {
    if (s.labeled_class < 1 || s.labeled_class > m.num_classes) {
      throw DatasetError("subset " + std::to_string(s.subset_id) + " labeled_class out of range");
    }
    covered.insert(s.labeled_class);
  }
  for (int c = 1; c <= m.num_classes; ++c) {
    if (!covered.contains(c)) throw DatasetError("class " + std::to_string(c) + " is not labeled by any subset");
  }
  return m;
}

}  // namespace

Dataset load_dataset(const fs::path& path) {
  Dataset dataset;
  dataset.manifest = parse_manifest(path);
  const auto& m = dataset.manifest;
  for (const auto& s : m.subsets) {
    for (const auto& f : s.samples) dataset.train.push_back(read_record(m, f, s.subset_id, s.labeled_class));
  }
  for (const auto& f : m.test_samples) {
    auto record = read_record(m, f, -1, 1);
    if (!record.full_label) throw DatasetError("test sample without full label: " + (m.root / f.image).string());
    dataset.test.push_back(std::move(record));
  }
  return dataset;
}

DatasetManifest load_manifest(const fs::path& path) { return load_dataset(path).manifest; }

std::vector<std::size_t> sample_indices(std::size_t pool_size, int batch_size, Rng& rng) {
  if (pool_size == 0) throw DatasetError("cannot sample from an empty dataset");
  if (batch_size < 2) throw DatasetError("batch_size must be at least 2");
  std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
  std::vector<std::size_t> out(static_cast<std::size_t>(batch_size));
  for (auto& i : out) i = pick(rng);
  return out;
}

std::vector<SampleRecord> sample_batch(const Dataset& dataset, int batch_size, Rng& rng) {
  std::vector<SampleRecord> batch;
  for (std::size_t i : sample_indices(dataset.train.size(), batch_size, rng)) batch.push_back(dataset.train[i]);
  return batch;
}

}  // namespace ltuda
