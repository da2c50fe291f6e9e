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

#include <memory>
#include <vector>

#include "ltuda/labels.hpp"

namespace ltuda {

/// Rotation in degrees about the image centre (positive turns content clockwise
/// on screen, rows growing downward) and isotropic scale.
struct WeakAugSpec {
  double angle = 0.0;
  double scale = 1.0;
};

struct WeakAugRanges {
  double max_angle = 20.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

WeakAugSpec sample_weak_spec(const WeakAugRanges& ranges, Rng& rng);

/// Rotates/scales the image (bilinear) and every label grid (nearest).
/// Pixels mapped from outside the canvas get the mean border intensity,
/// partial label -1, no known negative, and full label 0.
SampleRecord weak_augment(const SampleRecord& record, const WeakAugSpec& spec);

struct Box {
  int x = 0, y = 0, width = 0, height = 0;  // unclipped r_x, r_y, r_w, r_h
  friend bool operator==(const Box&, const Box&) = default;
};

/// One CutMix draw: box B, ratio lambda, and the clipped binary mask M.
struct MixSpec {
  Box box;
  double lam = 1.0;
  MaskGrid mask;
  int partner_index = -1;

  /// Fraction of the canvas the unclipped box would cover.
  double unclipped_fraction() const;
};

/// Builds the spec for given lambda and starting corner:
/// r_w = round(W sqrt(1-lambda)), r_h = round(H sqrt(1-lambda)).
MixSpec make_mixspec(Size2 size, double lam, int rx, int ry);

/// lambda ~ U(0,1), r_x ~ U{0..W-1}, r_y ~ U{0..H-1}.
MixSpec sample_mixspec(Size2 size, Rng& rng);

/// A weakly augmented sample together with its masked pseudo-label.
struct PseudoSample {
  ImageGrid image;
  HardLabelMap pseudo;
  /// Partial ground truth in {-1} u {1..C}.
  LabelGrid partial;
};

/// Strong view: x_s = (1-M) x_a + M x_b, y_s likewise, partial mixed by the
/// same mask (same-position placement).
PseudoSample cutmix(const PseudoSample& a, const PseudoSample& b, const MixSpec& spec);

/// Region mixer hook; only CutMix ships.
class Mixer {
 public:
  virtual ~Mixer() = default;
  virtual MixSpec sample(Size2 size, Rng& rng) const = 0;
  virtual PseudoSample mix(const PseudoSample& a, const PseudoSample& b, const MixSpec& spec) const = 0;
};

class CutMixMixer final : public Mixer {
 public:
  MixSpec sample(Size2 size, Rng& rng) const override { return sample_mixspec(size, rng); }
  PseudoSample mix(const PseudoSample& a, const PseudoSample& b, const MixSpec& spec) const override {
    return cutmix(a, b, spec);
  }
};

/// Random permutation with no fixed points; n >= 2.
std::vector<int> random_derangement(int n, Rng& rng);

struct MixedBatch {
  std::vector<PseudoSample> samples;
  std::vector<MixSpec> specs;  // specs[i].partner_index names x_b for sample i
};

/// M independent cross-set views of `batch` (fresh pairing and box per view).
std::vector<MixedBatch> strong_views(const std::vector<PseudoSample>& batch, int num_views, Rng& rng,
                                     const Mixer& mixer = CutMixMixer{});

}  // namespace ltuda
