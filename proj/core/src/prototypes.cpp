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

#include "ltuda/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltuda {

namespace {

constexpr int kSeedCandidates = 2048;
constexpr int kLloydIterations = 5;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool normalize(std::span<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 1e-12)) return false;
  for (auto& x : v) x /= n;
  return true;
}

// Flat list of unit embeddings for one class.
struct ClassPoints {
  int dim = 0;
  std::vector<double> data;

  std::size_t count() const { return dim ? data.size() / static_cast<std::size_t>(dim) : 0; }
  std::span<const double> at(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

void seed_class(PrototypeBank& bank, int cls, const ClassPoints& points, Rng& rng) {
  const std::size_t n = points.count();
  if (n == 0) return;
  // Candidate subset keeps seeding cost bounded.
  std::vector<std::size_t> candidates(n);
  for (std::size_t i = 0; i < n; ++i) candidates[i] = i;
  if (n > static_cast<std::size_t>(kSeedCandidates)) {
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(kSeedCandidates);
    std::sort(candidates.begin(), candidates.end());
  }

  const int k_total = bank.per_class;
  std::vector<int> fresh;
  for (int k = 0; k < k_total; ++k) {
    if (!bank.is_initialized(cls, k)) fresh.push_back(k);
  }
  const bool whole_class = static_cast<int>(fresh.size()) == k_total;

  // k-means++: squared chord distance 2 - 2cos to the nearest chosen centre.
  std::vector<double> d2(candidates.size(), std::numeric_limits<double>::infinity());
  auto refresh = [&](std::span<const double> centre) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      d2[j] = std::min(d2[j], std::max(0.0, 2.0 - 2.0 * dot(points.at(candidates[j]), centre)));
    }
  };
  for (int k = 0; k < k_total; ++k) {
    if (bank.is_initialized(cls, k)) refresh(bank.proto(cls, k));
  }
  std::vector<int> seeded;
  for (int k : fresh) {
    double total = 0.0;
    for (double v : d2) total += std::isinf(v) ? 1.0 : v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < candidates.size(); ++pick) {
        r -= std::isinf(d2[pick]) ? 1.0 : d2[pick];
        if (r <= 0.0) break;
      }
    } else {
      // every candidate coincides with an existing centre
      if (!whole_class || !seeded.empty()) break;
      pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
    }
    auto dst = bank.proto(cls, k);
    const auto src = points.at(candidates[pick]);
    std::copy(src.begin(), src.end(), dst.begin());
    bank.initialized[bank.slot(cls, k)] = 1;
    seeded.push_back(k);
    refresh(dst);
  }

  if (!whole_class || seeded.size() < 2) return;
  // Lloyd refinement of the freshly seeded class on the candidate set.
  const auto dim = static_cast<std::size_t>(bank.dim);
  for (int it = 0; it < kLloydIterations; ++it) {
    std::vector<double> sums(seeded.size() * dim, 0.0);
    std::vector<std::size_t> counts(seeded.size(), 0);
    for (std::size_t j : candidates) {
      const auto p = points.at(j);
      std::size_t best = 0;
      double best_s = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < seeded.size(); ++s) {
        const double sim = dot(p, bank.proto(cls, seeded[s]));
        if (sim > best_s) {
          best_s = sim;
          best = s;
        }
      }
      ++counts[best];
      for (std::size_t d = 0; d < dim; ++d) sums[best * dim + d] += p[d];
    }
    for (std::size_t s = 0; s < seeded.size(); ++s) {
      if (counts[s] == 0) continue;
      std::span<double> mean(sums.data() + s * dim, dim);
      if (normalize(mean)) std::copy(mean.begin(), mean.end(), bank.proto(cls, seeded[s]).begin());
    }
  }
}

}  // namespace

PrototypeBank::PrototypeBank(int foreground_classes, int k, int d, double mu)
    : num_classes(foreground_classes + 1), per_class(k), dim(d), momentum(mu) {
  if (foreground_classes < 1 || k < 1 || d < 1) throw PrototypeError("prototype bank dimensions must be positive");
  if (!(mu >= 0.0 && mu <= 1.0)) throw PrototypeError("prototype momentum must lie in [0, 1]");
  protos.assign(static_cast<std::size_t>(num_classes) * k * d, 0.0);
  initialized.assign(static_cast<std::size_t>(num_classes) * k, 0);
}

std::span<double> PrototypeBank::proto(int cls, int k) {
  return {protos.data() + slot(cls, k) * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
}

std::span<const double> PrototypeBank::proto(int cls, int k) const {
  return {protos.data() + slot(cls, k) * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
}

bool PrototypeBank::is_initialized(int cls, int k) const { return initialized[slot(cls, k)] != 0; }

bool PrototypeBank::fully_initialized() const {
  return !initialized.empty() && std::all_of(initialized.begin(), initialized.end(), [](auto f) { return f != 0; });
}

EmbeddingMap l2_normalize(const EmbeddingMap& embeddings) {
  EmbeddingMap out = embeddings;
  const std::size_t pixels = embeddings.pixels();
  for (std::size_t p = 0; p < pixels; ++p) {
    double n2 = 0.0;
    for (int d = 0; d < embeddings.dim; ++d) n2 += embeddings.at(d, p) * embeddings.at(d, p);
    const double n = std::sqrt(n2);
    if (!(n > 1e-12)) continue;
    for (int d = 0; d < embeddings.dim; ++d) out.at(d, p) = embeddings.at(d, p) / n;
  }
  return out;
}

int nearest_in_class(const PrototypeBank& bank, std::span<const double> unit, int cls) {
  int best = -1;
  double best_s = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < bank.per_class; ++k) {
    if (!bank.is_initialized(cls, k)) continue;
    const double s = dot(unit, bank.proto(cls, k));
    if (s > best_s) {
      best_s = s;
      best = k;
    }
  }
  return best;
}

ClassDistribution proto_predict(const EmbeddingMap& embeddings, const PrototypeBank& bank) {
  if (!bank.fully_initialized()) throw PrototypeError("proto_predict on a bank with uninitialized prototypes");
  if (embeddings.dim != bank.dim) throw ShapeError("embedding width differs from prototype width");
  const EmbeddingMap unit = l2_normalize(embeddings);
  ClassDistribution out(bank.num_classes, embeddings.size);
  std::vector<double> pixel(static_cast<std::size_t>(bank.dim));
  std::vector<double> logits(static_cast<std::size_t>(bank.num_classes));
  for (std::size_t p = 0; p < unit.pixels(); ++p) {
    for (int d = 0; d < bank.dim; ++d) pixel[static_cast<std::size_t>(d)] = unit.at(d, p);
    double zmax = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < bank.num_classes; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < bank.per_class; ++k) best = std::max(best, dot(pixel, bank.proto(c, k)));
      logits[static_cast<std::size_t>(c)] = best;
      zmax = std::max(zmax, best);
    }
    double total = 0.0;
    for (auto& z : logits) {
      z = std::exp(z - zmax);
      total += z;
    }
    for (int c = 0; c < bank.num_classes; ++c) out.at(c, p) = logits[static_cast<std::size_t>(c)] / total;
  }
  return out;
}

void update_bank(PrototypeBank& bank, std::span<const EmbeddingMap> embeddings, std::span<const BankLabels> labels,
                 Rng& rng) {
  if (embeddings.size() != labels.size()) throw ShapeError("update_bank: embeddings/labels count mismatch");
  const auto dim = static_cast<std::size_t>(bank.dim);
  std::vector<ClassPoints> points(static_cast<std::size_t>(bank.num_classes));
  for (auto& p : points) p.dim = bank.dim;
  std::vector<double> unit(dim);
  for (std::size_t b = 0; b < embeddings.size(); ++b) {
    const auto& emb = embeddings[b];
    if (emb.dim != bank.dim) throw ShapeError("embedding width differs from prototype width");
    require_same_size(emb.size, labels[b].size(), "update_bank labels");
    for (std::size_t px = 0; px < emb.pixels(); ++px) {
      const int cls = labels[b][px];
      if (cls < 0) continue;
      if (cls >= bank.num_classes) throw ShapeError("bank label outside {0..C}");
      for (std::size_t d = 0; d < dim; ++d) unit[d] = emb.at(static_cast<int>(d), px);
      if (!normalize(unit)) continue;
      auto& dst = points[static_cast<std::size_t>(cls)].data;
      dst.insert(dst.end(), unit.begin(), unit.end());
    }
  }

  for (int cls = 0; cls < bank.num_classes; ++cls) {
    const auto& pts = points[static_cast<std::size_t>(cls)];
    if (pts.count() == 0) continue;
    bool missing = false;
    for (int k = 0; k < bank.per_class; ++k) missing = missing || !bank.is_initialized(cls, k);
    if (missing) seed_class(bank, cls, pts, rng);
    if (bank.momentum == 1.0) continue;

    std::vector<double> sums(static_cast<std::size_t>(bank.per_class) * dim, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(bank.per_class), 0);
    for (std::size_t j = 0; j < pts.count(); ++j) {
      const auto p = pts.at(j);
      const int k = nearest_in_class(bank, p, cls);
      if (k < 0) continue;
      ++counts[static_cast<std::size_t>(k)];
      for (std::size_t d = 0; d < dim; ++d) sums[static_cast<std::size_t>(k) * dim + d] += p[d];
    }
    for (int k = 0; k < bank.per_class; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0) continue;
      std::span<double> fresh(sums.data() + static_cast<std::size_t>(k) * dim, dim);
      if (!normalize(fresh)) continue;
      auto proto = bank.proto(cls, k);
      std::vector<double> blended(dim);
      for (std::size_t d = 0; d < dim; ++d) blended[d] = bank.momentum * proto[d] + (1.0 - bank.momentum) * fresh[d];
      if (normalize(blended)) std::copy(blended.begin(), blended.end(), proto.begin());
    }
  }
}

BankLabels build_labeled_bank_inputs(const LabelGrid& partial, const HardLabelMap& pseudo) {
  require_same_size(partial.size(), pseudo.classes.size(), "labeled bank inputs");
  BankLabels out(partial.size(), kUnknown);
  for (std::size_t i = 0; i < partial.area(); ++i) {
    if (partial[i] >= 1) out[i] = partial[i];
  }
  return out;
}

BankLabels build_unlabeled_bank_inputs(const LabelGrid& partial, const HardLabelMap& pseudo) {
  require_same_size(partial.size(), pseudo.classes.size(), "unlabeled bank inputs");
  BankLabels out(partial.size(), kUnknown);
  for (std::size_t i = 0; i < partial.area(); ++i) {
    if (partial[i] == kUnknown) out[i] = pseudo.classes[i];
  }
  return out;
}

void copy_background(const PrototypeBank& unlabeled, PrototypeBank& labeled) {
  if (unlabeled.dim != labeled.dim || unlabeled.per_class != labeled.per_class) {
    throw ShapeError("copy_background: bank shapes differ");
  }
  const std::size_t n = static_cast<std::size_t>(labeled.per_class) * static_cast<std::size_t>(labeled.dim);
  std::copy(unlabeled.protos.begin(), unlabeled.protos.begin() + static_cast<std::ptrdiff_t>(n),
            labeled.protos.begin());
  std::copy(unlabeled.initialized.begin(), unlabeled.initialized.begin() + labeled.per_class,
            labeled.initialized.begin());
}

}  // namespace ltuda
