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

#include "ltuda/teacher.hpp"

#include "ltuda/inference.hpp"

namespace ltuda {

HardLabelMap make_masked_pseudo(const ForegroundProbMaps& teacher_probs, const PartialLabelMap& partial, double tau,
                                ConflictRule rule) {
  const Size2 size = teacher_probs.size;
  require_same_size(size, partial.classes.size(), "masked pseudo-label");
  const bool has_negatives = !partial.known_negative.empty();
  if (has_negatives) require_same_size(size, partial.known_negative.size(), "known_negative");
  const int labeled = partial.labeled_class;

  HardLabelMap out = threshold_classify(teacher_probs, tau);
  for (std::size_t i = 0; i < size.area(); ++i) {
    if (partial.classes[i] == labeled) {
      out.classes[i] = static_cast<std::int16_t>(labeled);
      continue;
    }
    if (!has_negatives || partial.known_negative[i] == 0 || out.classes[i] != labeled) continue;
    int replacement = kBackground;
    if (rule == ConflictRule::kNextBest) {
      double best = -1.0;
      for (int c = 1; c <= teacher_probs.num_classes; ++c) {
        if (c == labeled) continue;
        const double p = teacher_probs.at(c, i);
        if (p > best) {
          best = p;
          replacement = c;
        }
      }
      if (best < tau) replacement = kBackground;
    }
    out.classes[i] = static_cast<std::int16_t>(replacement);
  }
  return out;
}

std::vector<HardLabelMap> teacher_step(UNet<float>& teacher, const std::vector<SampleRecord>& weak_batch, double tau,
                                       ConflictRule rule) {
  std::vector<const ImageGrid*> images;
  for (const auto& r : weak_batch) images.push_back(&r.image);
  const auto& out = teacher.forward(stack_images(images), Mode::kEval);
  std::vector<HardLabelMap> pseudo;
  pseudo.reserve(weak_batch.size());
  for (std::size_t i = 0; i < weak_batch.size(); ++i) {
    pseudo.push_back(make_masked_pseudo(probs_of(out.probs, static_cast<int>(i)), weak_batch[i].partial, tau, rule));
  }
  return pseudo;
}

}  // namespace ltuda
