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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ltuda/backbone.hpp"
#include "ltuda/labels.hpp"

namespace ltuda {

/// 2|A n B| / (|A| + |B|) for class `cls`; 1 when both masks are empty.
double dice(const HardLabelMap& pred, const HardLabelMap& gt, int cls);

/// Pixels of class `cls` with a 4-neighbour outside the class (the canvas
/// edge counts as outside), as (y, x) pairs in row-major order.
std::vector<std::pair<int, int>> boundary_pixels(const LabelGrid& labels, int cls);

/// Symmetric Hausdorff distance in pixels between the boundary sets of
/// class `cls`; NaN when either set is empty.
double hausdorff(const HardLabelMap& pred, const HardLabelMap& gt, int cls);

struct FeatureVariance {
  /// Per class 0..C; NaN for classes with no pixels.
  std::vector<double> intra;
  double inter = 0.0;
  double ratio = 0.0;
};

inline constexpr double kVarianceRatioCap = 1e9;

/// Intra/inter-class spread of L2-normalized embeddings. Classes without
/// pixels are skipped. The ratio is inter over the mean intra, capped.
FeatureVariance feature_variance(std::span<const EmbeddingMap> embeddings, std::span<const HardLabelMap> labels,
                                 int num_classes_with_bg);

struct ClassMetrics {
  int cls = 0;
  double dice = 0.0;
  double hd = 0.0;  // NaN when no image had a defined HD
  int n_images = 0;
};

/// C foreground rows plus a final "mean" row (cls = -1).
struct MetricReport {
  std::vector<ClassMetrics> rows;

  const ClassMetrics& mean() const { return rows.back(); }
  std::string to_csv() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& json_path) const;  // also writes the .csv sibling
};

MetricReport evaluate_predictions(std::span<const HardLabelMap> preds, std::span<const LabelGrid> gts, int num_classes);

/// Thresholded predictions of `model` (eval mode) on fully-labelled samples.
std::vector<HardLabelMap> predict(UNet<float>& model, const std::vector<SampleRecord>& samples, double tau,
                                  std::vector<EmbeddingMap>* embeddings = nullptr);

MetricReport evaluate_model(UNet<float>& model, const std::vector<SampleRecord>& samples, double tau);

/// Test-set feature spread of `model` using the full labels.
FeatureVariance evaluate_variance(UNet<float>& model, const std::vector<SampleRecord>& samples);

}  // namespace ltuda
