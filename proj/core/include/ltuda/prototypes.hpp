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

#include <span>
#include <vector>

#include "ltuda/grid.hpp"
#include "ltuda/labels.hpp"

namespace ltuda {

/// (C+1) x K unit-norm prototypes of width D, momentum-updated.
struct PrototypeBank {
  int num_classes = 0;  // C + 1, including background
  int per_class = 1;    // K
  int dim = 0;          // D
  double momentum = 0.999;
  std::vector<double> protos;
  std::vector<std::uint8_t> initialized;

  PrototypeBank() = default;
  /// `foreground_classes` is C; the bank holds C+1 classes.
  PrototypeBank(int foreground_classes, int k, int d, double mu);

  std::span<double> proto(int cls, int k);
  std::span<const double> proto(int cls, int k) const;
  bool is_initialized(int cls, int k) const;
  bool fully_initialized() const;
  std::size_t slot(int cls, int k) const { return static_cast<std::size_t>(cls) * per_class + k; }

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;
};

class PrototypeError : public Error {
 public:
  using Error::Error;
};

/// Embeddings divided by their L2 norm (zero vectors stay zero).
EmbeddingMap l2_normalize(const EmbeddingMap& embeddings);

/// Nearest-prototype softmax: p(c|i) = softmax_c(max_k i^T p_c^k) with i
/// L2-normalized. Requires a fully initialized bank.
ClassDistribution proto_predict(const EmbeddingMap& embeddings, const PrototypeBank& bank);

/// Index k of the most similar initialized class-`cls` prototype to the
/// unit vector `unit`, or -1 when none is initialized.
int nearest_in_class(const PrototypeBank& bank, std::span<const double> unit, int cls);

/// Per-pixel labels steering a bank update: class id in {0..C}, or -1 to
/// leave the pixel out.
using BankLabels = LabelGrid;

/// Momentum online clustering. For each class present: seed uninitialized
/// slots (k-means++ plus Lloyd refinement on this batch), assign pixels to
/// their nearest same-class prototype, and blend the normalized mean of
/// the assignment into each touched prototype.
void update_bank(PrototypeBank& bank, std::span<const EmbeddingMap> embeddings, std::span<const BankLabels> labels,
                 Rng& rng);

/// Labeled-bank inputs: foreground classes from partial ground truth only.
/// Background is never taken from this map (see copy_background).
BankLabels build_labeled_bank_inputs(const LabelGrid& partial, const HardLabelMap& pseudo);

/// Unlabeled-bank inputs: pseudo-labels (all classes, incl. background) on
/// pixels without partial ground truth.
BankLabels build_unlabeled_bank_inputs(const LabelGrid& partial, const HardLabelMap& pseudo);

/// Copy rule: labeled background prototypes := unlabeled background prototypes.
void copy_background(const PrototypeBank& unlabeled, PrototypeBank& labeled);

}  // namespace ltuda
