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
#include "ltuda/prototypes.hpp"

namespace ltuda {

inline constexpr double kLogEps = 1e-7;

struct LossWeights {
  double lambda1 = 0.001;  // PPD
  double lambda2 = 0.01;   // PPC
  double alpha = 0.1;      // PPC temperature
  double w_lproto = 1.0;
  double w_ulproto = 1.0;

  void validate() const;
};

/// Which quantity a probability-map gradient is taken with respect to.
enum class ProbGrad { kProbs, kLogits };

/// Partial BCE pooled over a batch: the sum over (pixel, class) with
/// y_c != -1 of BCE(y_c, p_c), divided by the number of pixels with at
/// least one supervised class. Entries with y_c = -1 get exactly zero
/// gradient. With kLogits the gradient is (p - y)/n.
double partial_bce(std::span<const ForegroundProbMaps> probs, std::span<const BinaryTargets> targets,
                   std::vector<ForegroundProbMaps>* grad = nullptr, ProbGrad wrt = ProbGrad::kProbs);

double partial_bce(const ForegroundProbMaps& probs, const BinaryTargets& targets,
                   ForegroundProbMaps* grad = nullptr, ProbGrad wrt = ProbGrad::kProbs);

/// Mean of -log pred[target] over pixels.
double hard_ce_multiclass(const ClassDistribution& pred, const HardLabelMap& target,
                          ClassDistribution* grad = nullptr);

/// Per-pixel prototype slot (cls * K + k) nearest within the target class,
/// or -1 when that class has no initialized prototype.
std::vector<int> assign_prototypes(const EmbeddingMap& embeddings, const PrototypeBank& bank,
                                   const HardLabelMap& target);

/// Mean over assigned pixels of (1 - i^T p)^2, i the normalized embedding.
double ppd(const EmbeddingMap& embeddings, const PrototypeBank& bank, std::span<const int> assigned,
           EmbeddingMap* grad = nullptr);

/// Mean InfoNCE over assigned pixels: positive = assigned prototype,
/// negatives = every other initialized prototype, logits i^T p / alpha.
double ppc(const EmbeddingMap& embeddings, const PrototypeBank& bank, std::span<const int> assigned, double alpha,
           EmbeddingMap* grad = nullptr);

struct ProtoLossTerms {
  double ce = 0.0;
  double ppd = 0.0;
  double ppc = 0.0;
  double total = 0.0;  // ce + lambda1 * ppd + lambda2 * ppc
};

/// Prototype-classifier loss CE + lambda1 PPD + lambda2 PPC pooled over a
/// batch; gradient is with respect to the raw (unnormalized) embeddings.
/// Only seeded slots take part. Pixels whose target class has none are
/// skipped and the mean runs over the remaining pixels.
ProtoLossTerms proto_loss(std::span<const EmbeddingMap> embeddings, const PrototypeBank& bank,
                          std::span<const HardLabelMap> targets, const LossWeights& weights,
                          std::vector<EmbeddingMap>* grad = nullptr);

/// One strong view of a batch as seen by the student.
struct StrongViewInput {
  std::span<const ForegroundProbMaps> probs;
  std::span<const EmbeddingMap> embeddings;
  std::span<const HardLabelMap> targets;
};

struct StrongViewGrads {
  std::vector<ForegroundProbMaps> probs;
  std::vector<EmbeddingMap> embeddings;
};

struct StrongViewLoss {
  double linear = 0.0;
  double lproto = 0.0;
  double ulproto = 0.0;
  double ppd = 0.0;  // unweighted, summed over both banks
  double ppc = 0.0;
  double total = 0.0;
};

/// Mean over views of pBCE(linear, y_s) + w_l L_proto(labeled bank) +
/// w_ul L_proto(unlabeled bank). Null banks drop the prototype branches.
StrongViewLoss strong_view_loss(std::span<const StrongViewInput> views, const PrototypeBank* labeled_bank,
                                const PrototypeBank* unlabeled_bank, const LossWeights& weights,
                                std::vector<StrongViewGrads>* grads = nullptr, ProbGrad wrt = ProbGrad::kProbs);

struct LossBreakdown {
  double pbce_weak = 0.0;
  double linear_s = 0.0;
  double lproto = 0.0;
  double ulproto = 0.0;
  double ppd = 0.0;
  double ppc = 0.0;
  double total = 0.0;
};

/// L = pBCE(X_w, Y^l) + L(X_s, Y_s).
LossBreakdown total_loss(double pbce_weak, const StrongViewLoss& strong);

}  // namespace ltuda
