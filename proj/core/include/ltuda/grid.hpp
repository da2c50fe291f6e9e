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

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltuda {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

struct Size2 {
  int height = 0;
  int width = 0;

  std::size_t area() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  friend bool operator==(const Size2&, const Size2&) = default;
};

/// Dense row-major H x W grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(Size2 size, T fill = T{}) : size_(size), data_(size.area(), fill) {}
  Grid(int height, int width, T fill = T{}) : Grid(Size2{height, width}, fill) {}

  int height() const { return size_.height; }
  int width() const { return size_.width; }
  Size2 size() const { return size_; }
  std::size_t area() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(size_.width) + static_cast<std::size_t>(x);
  }
  bool contains(int y, int x) const { return y >= 0 && x >= 0 && y < size_.height && x < size_.width; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Size2 size_{};
  std::vector<T> data_;
};

using ImageGrid = Grid<float>;
using LabelGrid = Grid<std::int16_t>;
using MaskGrid = Grid<std::uint8_t>;

/// Sentinel for "class unknown" in partial annotations.
inline constexpr std::int16_t kUnknown = -1;
inline constexpr std::int16_t kBackground = 0;

/// Per-pixel annotation of a partially-labelled subset: every pixel is either
/// `labeled_class` or kUnknown. `known_negative` marks pixels annotated as
/// "not labeled_class" (the binary-map zeros); it may be empty.
struct PartialLabelMap {
  LabelGrid classes;
  int labeled_class = 1;
  MaskGrid known_negative;

  friend bool operator==(const PartialLabelMap&, const PartialLabelMap&) = default;
};

/// Multi-class hard label map with values in {0..C}.
struct HardLabelMap {
  LabelGrid classes;

  int height() const { return classes.height(); }
  int width() const { return classes.width(); }
  friend bool operator==(const HardLabelMap&, const HardLabelMap&) = default;
};

/// Class-major C x H x W stack of per-class sigmoid probabilities.
struct ForegroundProbMaps {
  int num_classes = 0;
  Size2 size{};
  std::vector<double> probs;

  ForegroundProbMaps() = default;
  ForegroundProbMaps(int classes, Size2 s, double fill = 0.5)
      : num_classes(classes), size(s), probs(static_cast<std::size_t>(classes) * s.area(), fill) {}

  /// `cls` is 1-based.
  double& at(int cls, std::size_t pixel) { return probs[static_cast<std::size_t>(cls - 1) * size.area() + pixel]; }
  double at(int cls, std::size_t pixel) const {
    return probs[static_cast<std::size_t>(cls - 1) * size.area() + pixel];
  }
};

/// Channel-major D x H x W embedding map.
struct EmbeddingMap {
  int dim = 0;
  Size2 size{};
  std::vector<double> values;

  EmbeddingMap() = default;
  EmbeddingMap(int d, Size2 s, double fill = 0.0)
      : dim(d), size(s), values(static_cast<std::size_t>(d) * s.area(), fill) {}

  std::size_t pixels() const { return size.area(); }
  double& at(int channel, std::size_t pixel) { return values[static_cast<std::size_t>(channel) * size.area() + pixel]; }
  double at(int channel, std::size_t pixel) const {
    return values[static_cast<std::size_t>(channel) * size.area() + pixel];
  }
  std::vector<double> pixel(std::size_t p) const;
};

/// Per-pixel distribution over {0..C}; class-major (C+1) x H x W.
struct ClassDistribution {
  int num_classes = 0;  // C + 1
  Size2 size{};
  std::vector<double> probs;

  ClassDistribution() = default;
  ClassDistribution(int classes_with_bg, Size2 s, double fill = 0.0)
      : num_classes(classes_with_bg), size(s), probs(static_cast<std::size_t>(classes_with_bg) * s.area(), fill) {}

  double& at(int cls, std::size_t pixel) { return probs[static_cast<std::size_t>(cls) * size.area() + pixel]; }
  double at(int cls, std::size_t pixel) const { return probs[static_cast<std::size_t>(cls) * size.area() + pixel]; }
};

/// Per-class binary targets y_c in {-1, 0, 1}; class-major C x H x W.
struct BinaryTargets {
  int num_classes = 0;
  Size2 size{};
  std::vector<std::int8_t> y;

  BinaryTargets() = default;
  BinaryTargets(int classes, Size2 s, std::int8_t fill = -1)
      : num_classes(classes), size(s), y(static_cast<std::size_t>(classes) * s.area(), fill) {}

  std::int8_t& at(int cls, std::size_t pixel) { return y[static_cast<std::size_t>(cls - 1) * size.area() + pixel]; }
  std::int8_t at(int cls, std::size_t pixel) const {
    return y[static_cast<std::size_t>(cls - 1) * size.area() + pixel];
  }
};

/// Binary view of a partial label: labeled_class pixels give y=1, known
/// negatives give y=0 for labeled_class, everything else is -1.
BinaryTargets binary_view(const PartialLabelMap& partial, int num_classes);

/// One-vs-rest view of a fully specified hard label map.
BinaryTargets one_vs_rest(const HardLabelMap& labels, int num_classes);

void require_same_size(Size2 a, Size2 b, const std::string& what);

}  // namespace ltuda
