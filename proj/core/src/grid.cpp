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

#include "ltuda/grid.hpp"

namespace ltuda {

std::vector<double> EmbeddingMap::pixel(std::size_t p) const {
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) out[static_cast<std::size_t>(d)] = at(d, p);
  return out;
}

BinaryTargets binary_view(const PartialLabelMap& partial, int num_classes) {
  const Size2 size = partial.classes.size();
  BinaryTargets out(num_classes, size, -1);
  const bool has_negatives = !partial.known_negative.empty();
  if (has_negatives) require_same_size(size, partial.known_negative.size(), "known_negative");
  for (std::size_t i = 0; i < size.area(); ++i) {
    if (partial.classes[i] == partial.labeled_class) {
      out.at(partial.labeled_class, i) = 1;
    } else if (has_negatives && partial.known_negative[i] != 0) {
      out.at(partial.labeled_class, i) = 0;
    }
  }
  return out;
}

BinaryTargets one_vs_rest(const HardLabelMap& labels, int num_classes) {
  const Size2 size = labels.classes.size();
  BinaryTargets out(num_classes, size, 0);
  for (std::size_t i = 0; i < size.area(); ++i) {
    const int cls = labels.classes[i];
    if (cls >= 1 && cls <= num_classes) out.at(cls, i) = 1;
  }
  return out;
}

void require_same_size(Size2 a, Size2 b, const std::string& what) {
  if (a != b) {
    throw ShapeError(what + ": size mismatch (" + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

}  // namespace ltuda
