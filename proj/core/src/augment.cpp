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

#include "ltuda/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ltuda {

namespace {

float border_mean(const ImageGrid& image) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int x = 0; x < image.width(); ++x) {
    sum += image(0, x) + image(image.height() - 1, x);
    n += 2;
  }
  for (int y = 1; y + 1 < image.height(); ++y) {
    sum += image(y, 0) + image(y, image.width() - 1);
    n += 2;
  }
  return n ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;
}

// Maps an output pixel to its source coordinate: inverse rotation then
// inverse scale about the centre.
struct InverseMap {
  double cy, cx, cos_t, sin_t, inv_scale;

  void operator()(int y, int x, double& sy, double& sx) const {
    const double dy = y - cy;
    const double dx = x - cx;
    // R(-theta) applied to (dx, dy)
    const double ux = cos_t * dx + sin_t * dy;
    const double uy = -sin_t * dx + cos_t * dy;
    sx = cx + ux * inv_scale;
    sy = cy + uy * inv_scale;
  }
};

template <typename T>
Grid<T> warp_nearest(const Grid<T>& src, const InverseMap& map, T fill) {
  Grid<T> out(src.size(), fill);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      double sy, sx;
      map(y, x, sy, sx);
      const auto iy = static_cast<int>(std::lround(sy));
      const auto ix = static_cast<int>(std::lround(sx));
      if (src.contains(iy, ix)) out(y, x) = src(iy, ix);
    }
  }
  return out;
}

ImageGrid warp_bilinear(const ImageGrid& src, const InverseMap& map, float fill) {
  ImageGrid out(src.size(), fill);
  constexpr double kSnap = 1e-9;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      double sy, sx;
      map(y, x, sy, sx);
      // Absorb trig round-off so exact grid hits stay exact.
      if (std::abs(sy - std::round(sy)) < kSnap) sy = std::round(sy);
      if (std::abs(sx - std::round(sx)) < kSnap) sx = std::round(sx);
      if (sy < -0.5 || sx < -0.5 || sy > src.height() - 0.5 || sx > src.width() - 0.5) continue;
      sy = std::clamp(sy, 0.0, static_cast<double>(src.height() - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(src.width() - 1));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, src.height() - 1);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double fy = sy - y0;
      const double fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                       fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

WeakAugSpec sample_weak_spec(const WeakAugRanges& ranges, Rng& rng) {
  WeakAugSpec spec;
  spec.angle = std::uniform_real_distribution<double>(-ranges.max_angle, ranges.max_angle)(rng);
  spec.scale = std::uniform_real_distribution<double>(ranges.scale_lo, ranges.scale_hi)(rng);
  return spec;
}

SampleRecord weak_augment(const SampleRecord& record, const WeakAugSpec& spec) {
  if (spec.angle == 0.0 && spec.scale == 1.0) return record;
  const double theta = spec.angle * std::numbers::pi / 180.0;
  const InverseMap map{0.5 * (record.image.height() - 1), 0.5 * (record.image.width() - 1), std::cos(theta),
                       std::sin(theta), 1.0 / spec.scale};
  SampleRecord out;
  out.subset_id = record.subset_id;
  out.image = warp_bilinear(record.image, map, border_mean(record.image));
  out.partial.labeled_class = record.partial.labeled_class;
  out.partial.classes = warp_nearest(record.partial.classes, map, kUnknown);
  if (!record.partial.known_negative.empty()) {
    out.partial.known_negative = warp_nearest(record.partial.known_negative, map, std::uint8_t{0});
  }
  if (record.full_label) out.full_label = warp_nearest(*record.full_label, map, kBackground);
  return out;
}

double MixSpec::unclipped_fraction() const {
  const double area = static_cast<double>(mask.area());
  return area > 0 ? static_cast<double>(box.width) * static_cast<double>(box.height) / area : 0.0;
}

MixSpec make_mixspec(Size2 size, double lam, int rx, int ry) {
  MixSpec spec;
  spec.lam = std::clamp(lam, 0.0, 1.0);
  const double cut = std::sqrt(1.0 - spec.lam);
  spec.box = Box{rx, ry, static_cast<int>(std::lround(size.width * cut)),
                 static_cast<int>(std::lround(size.height * cut))};
  spec.mask = MaskGrid(size, 0);
  const int y0 = std::clamp(ry, 0, size.height);
  const int x0 = std::clamp(rx, 0, size.width);
  const int y1 = std::clamp(ry + spec.box.height, 0, size.height);
  const int x1 = std::clamp(rx + spec.box.width, 0, size.width);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) spec.mask(y, x) = 1;
  }
  return spec;
}

MixSpec sample_mixspec(Size2 size, Rng& rng) {
  const double lam = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const int rx = std::uniform_int_distribution<int>(0, std::max(0, size.width - 1))(rng);
  const int ry = std::uniform_int_distribution<int>(0, std::max(0, size.height - 1))(rng);
  return make_mixspec(size, lam, rx, ry);
}

PseudoSample cutmix(const PseudoSample& a, const PseudoSample& b, const MixSpec& spec) {
  const Size2 size = a.image.size();
  require_same_size(size, b.image.size(), "cutmix images");
  require_same_size(size, spec.mask.size(), "cutmix mask");
  require_same_size(size, a.pseudo.classes.size(), "cutmix pseudo-label a");
  require_same_size(size, b.pseudo.classes.size(), "cutmix pseudo-label b");
  require_same_size(size, a.partial.size(), "cutmix partial a");
  require_same_size(size, b.partial.size(), "cutmix partial b");
  PseudoSample out = a;
  for (std::size_t i = 0; i < size.area(); ++i) {
    if (spec.mask[i]) {
      out.image[i] = b.image[i];
      out.pseudo.classes[i] = b.pseudo.classes[i];
      out.partial[i] = b.partial[i];
    }
  }
  return out;
}

std::vector<int> random_derangement(int n, Rng& rng) {
  if (n < 2) throw ShapeError("a derangement needs at least 2 elements");
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (;;) {
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed = false;
    for (int i = 0; i < n && !fixed; ++i) fixed = perm[static_cast<std::size_t>(i)] == i;
    if (!fixed) return perm;
  }
}

std::vector<MixedBatch> strong_views(const std::vector<PseudoSample>& batch, int num_views, Rng& rng,
                                     const Mixer& mixer) {
  if (num_views < 1) throw ShapeError("need at least one strong view");
  if (batch.size() < 2) throw ShapeError("strong views need a batch of at least 2");
  std::vector<MixedBatch> views(static_cast<std::size_t>(num_views));
  for (auto& view : views) {
    const auto partners = random_derangement(static_cast<int>(batch.size()), rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      MixSpec spec = mixer.sample(batch[i].image.size(), rng);
      spec.partner_index = partners[i];
      view.samples.push_back(mixer.mix(batch[i], batch[static_cast<std::size_t>(partners[i])], spec));
      view.specs.push_back(std::move(spec));
    }
  }
  return views;
}

}  // namespace ltuda
