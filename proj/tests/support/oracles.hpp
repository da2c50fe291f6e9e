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

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Written from the definitions, not from the library code.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ltuda/grid.hpp"

namespace ltuda::oracle {

/// argmax over p_1..p_C (lowest index on ties) if the max reaches tau, else 0.
inline int threshold(const std::vector<double>& p, double tau) {
  int best = 0;
  double best_p = -1.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > best_p) {
      best_p = p[c];
      best = static_cast<int>(c) + 1;
    }
  }
  return best_p >= tau ? best : 0;
}

inline double dice(const LabelGrid& a, const LabelGrid& b, int cls) {
  double na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.area(); ++i) {
    const bool x = a[i] == cls, y = b[i] == cls;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * both / (na + nb);
}

/// Class pixels touching a non-class 4-neighbour or the canvas edge.
inline std::vector<std::pair<int, int>> edge(const LabelGrid& g, int cls) {
  std::vector<std::pair<int, int>> out;
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (g(y, x) != cls) continue;
      bool on_edge = false;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || nx < 0 || ny >= g.height() || nx >= g.width() || g(ny, nx) != cls) on_edge = true;
      }
      if (on_edge) out.emplace_back(y, x);
    }
  }
  return out;
}

/// O(n^2) symmetric Hausdorff distance between boundary sets.
inline double hausdorff(const LabelGrid& a, const LabelGrid& b, int cls) {
  const auto pa = edge(a, cls), pb = edge(b, cls);
  if (pa.empty() || pb.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto directed = [](const auto& from, const auto& to) {
    double worst = 0.0;
    for (const auto& [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [v, u] : to) best = std::min(best, std::sqrt(double((y - v) * (y - v) + (x - u) * (x - u))));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

}  // namespace ltuda::oracle
