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

#include "ltuda/inference.hpp"

#include <vector>

namespace ltuda {

int threshold_pixel(std::span<const double> probs, double tau) {
  int best = 0;
  double best_p = -1.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > best_p) {
      best_p = probs[c];
      best = static_cast<int>(c) + 1;
    }
  }
  return best_p >= tau ? best : 0;
}

HardLabelMap threshold_classify(const ForegroundProbMaps& probs, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("tau must lie in (0, 1]");
  HardLabelMap out{LabelGrid(probs.size, kBackground)};
  const std::size_t area = probs.size.area();
  std::vector<double> pixel(static_cast<std::size_t>(probs.num_classes));
  for (std::size_t i = 0; i < area; ++i) {
    for (int c = 1; c <= probs.num_classes; ++c) pixel[static_cast<std::size_t>(c - 1)] = probs.at(c, i);
    out.classes[i] = static_cast<std::int16_t>(threshold_pixel(pixel, tau));
  }
  return out;
}

}  // namespace ltuda
