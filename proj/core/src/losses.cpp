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

#include "ltuda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltuda {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Unit vector and norm of pixel p.
double unit_pixel(const EmbeddingMap& emb, std::size_t p, std::vector<double>& unit) {
  unit.resize(static_cast<std::size_t>(emb.dim));
  double n2 = 0.0;
  for (int d = 0; d < emb.dim; ++d) {
    const double v = emb.at(d, p);
    unit[static_cast<std::size_t>(d)] = v;
    n2 += v * v;
  }
  const double n = std::sqrt(n2);
  if (n > 1e-12) {
    for (auto& v : unit) v /= n;
  }
  return n;
}

// Chain rule through i = e / |e|: dL/de = (g - i (i.g)) / |e|.
void add_normalized_grad(EmbeddingMap& grad, std::size_t p, std::span<const double> unit, std::span<const double> g,
                         double norm) {
  if (!(norm > 1e-12)) return;
  const double ig = dot(unit, g);
  for (int d = 0; d < grad.dim; ++d) {
    const auto k = static_cast<std::size_t>(d);
    grad.at(d, p) += (g[k] - unit[k] * ig) / norm;
  }
}

void require_bank_width(const EmbeddingMap& e, const PrototypeBank& bank) {
  if (e.dim != bank.dim) throw ShapeError("embedding width differs from prototype width");
}

}  // namespace

void LossWeights::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || w_lproto < 0 || w_ulproto < 0) throw Error("loss weights must be non-negative");
  if (!(alpha > 0)) throw Error("PPC temperature alpha must be positive");
}

double partial_bce(std::span<const ForegroundProbMaps> probs, std::span<const BinaryTargets> targets,
                   std::vector<ForegroundProbMaps>* grad, ProbGrad wrt) {
  if (probs.size() != targets.size()) throw ShapeError("partial_bce: batch size mismatch");
  double sum = 0.0;
  std::size_t contributing = 0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    const auto& p = probs[b];
    const auto& t = targets[b];
    require_same_size(p.size, t.size, "partial_bce");
    if (p.num_classes != t.num_classes) throw ShapeError("partial_bce: class count mismatch");
    for (std::size_t i = 0; i < p.size.area(); ++i) {
      bool any = false;
      for (int c = 1; c <= p.num_classes; ++c) {
        const int y = t.at(c, i);
        if (y == -1) continue;
        any = true;
        const double pc = p.at(c, i);
        sum += y == 1 ? -std::log(std::max(pc, kLogEps)) : -std::log(std::max(1.0 - pc, kLogEps));
      }
      if (any) ++contributing;
    }
  }
  if (grad) {
    grad->clear();
    for (const auto& p : probs) grad->emplace_back(p.num_classes, p.size, 0.0);
  }
  if (contributing == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(contributing);
  if (grad) {
    for (std::size_t b = 0; b < probs.size(); ++b) {
      const auto& p = probs[b];
      const auto& t = targets[b];
      auto& g = (*grad)[b];
      for (int c = 1; c <= p.num_classes; ++c) {
        for (std::size_t i = 0; i < p.size.area(); ++i) {
          const int y = t.at(c, i);
          if (y == -1) continue;
          const double pc = p.at(c, i);
          double d = 0.0;
          if (wrt == ProbGrad::kLogits) {
            d = pc - y;
          } else if (y == 1) {
            d = pc > kLogEps ? -1.0 / pc : 0.0;
          } else {
            d = 1.0 - pc > kLogEps ? 1.0 / (1.0 - pc) : 0.0;
          }
          g.at(c, i) = d * inv;
        }
      }
    }
  }
  return sum * inv;
}

double partial_bce(const ForegroundProbMaps& probs, const BinaryTargets& targets, ForegroundProbMaps* grad,
                   ProbGrad wrt) {
  std::vector<ForegroundProbMaps> grads;
  const double v = partial_bce(std::span(&probs, 1), std::span(&targets, 1), grad ? &grads : nullptr, wrt);
  if (grad) *grad = std::move(grads.front());
  return v;
}

double hard_ce_multiclass(const ClassDistribution& pred, const HardLabelMap& target, ClassDistribution* grad) {
  require_same_size(pred.size, target.classes.size(), "hard_ce_multiclass");
  const std::size_t n = pred.size.area();
  if (grad) *grad = ClassDistribution(pred.num_classes, pred.size, 0.0);
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = target.classes[i];
    if (t < 0 || t >= pred.num_classes) throw ShapeError("hard_ce_multiclass: target outside {0..C}");
    const double p = pred.at(t, i);
    sum += -std::log(std::max(p, kLogEps));
    if (grad && p > kLogEps) grad->at(t, i) = -1.0 / (p * static_cast<double>(n));
  }
  return sum / static_cast<double>(n);
}

std::vector<int> assign_prototypes(const EmbeddingMap& embeddings, const PrototypeBank& bank,
                                   const HardLabelMap& target) {
  require_bank_width(embeddings, bank);
  require_same_size(embeddings.size, target.classes.size(), "assign_prototypes");
  std::vector<int> out(embeddings.pixels(), -1);
  std::vector<double> unit;
  for (std::size_t p = 0; p < embeddings.pixels(); ++p) {
    const int cls = target.classes[p];
    if (cls < 0 || cls >= bank.num_classes) continue;
    unit_pixel(embeddings, p, unit);
    const int k = nearest_in_class(bank, unit, cls);
    if (k >= 0) out[p] = static_cast<int>(bank.slot(cls, k));
  }
  return out;
}

double ppd(const EmbeddingMap& embeddings, const PrototypeBank& bank, std::span<const int> assigned,
           EmbeddingMap* grad) {
  require_bank_width(embeddings, bank);
  if (assigned.size() != embeddings.pixels()) throw ShapeError("ppd: assignment size mismatch");
  if (grad) *grad = EmbeddingMap(embeddings.dim, embeddings.size, 0.0);
  const auto count = static_cast<std::size_t>(std::count_if(assigned.begin(), assigned.end(), [](int a) { return a >= 0; }));
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double sum = 0.0;
  std::vector<double> unit, g(static_cast<std::size_t>(embeddings.dim));
  for (std::size_t p = 0; p < embeddings.pixels(); ++p) {
    const int a = assigned[p];
    if (a < 0) continue;
    const double norm = unit_pixel(embeddings, p, unit);
    const auto proto = bank.proto(a / bank.per_class, a % bank.per_class);
    const double gap = 1.0 - dot(unit, proto);
    sum += gap * gap;
    if (grad) {
      for (std::size_t d = 0; d < g.size(); ++d) g[d] = -2.0 * gap * proto[d] * inv;
      add_normalized_grad(*grad, p, unit, g, norm);
    }
  }
  return sum * inv;
}

double ppc(const EmbeddingMap& embeddings, const PrototypeBank& bank, std::span<const int> assigned, double alpha,
           EmbeddingMap* grad) {
  require_bank_width(embeddings, bank);
  if (assigned.size() != embeddings.pixels()) throw ShapeError("ppc: assignment size mismatch");
  if (!(alpha > 0)) throw Error("ppc: alpha must be positive");
  if (grad) *grad = EmbeddingMap(embeddings.dim, embeddings.size, 0.0);
  const auto count = static_cast<std::size_t>(std::count_if(assigned.begin(), assigned.end(), [](int a) { return a >= 0; }));
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);

  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < bank.initialized.size(); ++s) {
    if (bank.initialized[s]) active.push_back(s);
  }
  auto proto_at = [&](std::size_t slot) {
    return std::span<const double>(bank.protos.data() + slot * static_cast<std::size_t>(bank.dim),
                                   static_cast<std::size_t>(bank.dim));
  };

  double sum = 0.0;
  std::vector<double> unit, logits(active.size()), g(static_cast<std::size_t>(embeddings.dim));
  for (std::size_t p = 0; p < embeddings.pixels(); ++p) {
    const int a = assigned[p];
    if (a < 0) continue;
    const double norm = unit_pixel(embeddings, p, unit);
    double zmax = -std::numeric_limits<double>::infinity();
    double za = 0.0;
    for (std::size_t j = 0; j < active.size(); ++j) {
      logits[j] = dot(unit, proto_at(active[j])) / alpha;
      zmax = std::max(zmax, logits[j]);
      if (active[j] == static_cast<std::size_t>(a)) za = logits[j];
    }
    double total = 0.0;
    for (auto& z : logits) {
      z = std::exp(z - zmax);
      total += z;
    }
    sum += -(za - zmax) + std::log(total);
    if (grad) {
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t j = 0; j < active.size(); ++j) {
        const double w = logits[j] / total;
        const auto proto = proto_at(active[j]);
        for (std::size_t d = 0; d < g.size(); ++d) g[d] += w * proto[d];
      }
      const auto pos = proto_at(static_cast<std::size_t>(a));
      for (std::size_t d = 0; d < g.size(); ++d) g[d] = (g[d] - pos[d]) / alpha * inv;
      add_normalized_grad(*grad, p, unit, g, norm);
    }
  }
  return sum * inv;
}

ProtoLossTerms proto_loss(std::span<const EmbeddingMap> embeddings, const PrototypeBank& bank,
                          std::span<const HardLabelMap> targets, const LossWeights& weights,
                          std::vector<EmbeddingMap>* grad) {
  if (embeddings.size() != targets.size()) throw ShapeError("proto_loss: batch size mismatch");
  weights.validate();
  std::size_t pixels = 0;
  for (const auto& e : embeddings) {
    require_bank_width(e, bank);
    pixels += e.pixels();
  }
  if (grad) {
    grad->clear();
    for (const auto& e : embeddings) grad->emplace_back(e.dim, e.size, 0.0);
  }
  ProtoLossTerms terms;
  const int classes = bank.num_classes;
  const int per_class = bank.per_class;
  const auto dim = static_cast<std::size_t>(bank.dim);
  const std::size_t slots = bank.initialized.size();

  // Unseeded slots take no part; a class with none left drops out of the
  // softmax and its pixels are skipped.
  std::vector<std::size_t> active;
  std::vector<std::vector<int>> seeded(static_cast<std::size_t>(classes));
  for (std::size_t s = 0; s < slots; ++s) {
    if (!bank.initialized[s]) continue;
    active.push_back(s);
    seeded[s / static_cast<std::size_t>(per_class)].push_back(static_cast<int>(s) % per_class);
  }
  std::size_t counted = 0;
  for (const auto& target : targets) {
    for (const auto t : target.classes.values()) {
      if (t < 0 || t >= classes) throw ShapeError("proto_loss: target outside {0..C}");
      if (!seeded[static_cast<std::size_t>(t)].empty()) ++counted;
    }
  }
  if (pixels == 0 || counted == 0) return terms;
  const double inv = 1.0 / static_cast<double>(counted);

  std::vector<double> unit, sims(slots), class_logit(static_cast<std::size_t>(classes)), soft(slots), g(dim);
  std::vector<int> class_best(static_cast<std::size_t>(classes), -1);
  for (std::size_t b = 0; b < embeddings.size(); ++b) {
    const auto& emb = embeddings[b];
    const auto& target = targets[b];
    require_same_size(emb.size, target.classes.size(), "proto_loss");
    for (std::size_t p = 0; p < emb.pixels(); ++p) {
      const int t = target.classes[p];
      if (seeded[static_cast<std::size_t>(t)].empty()) continue;
      const double norm = unit_pixel(emb, p, unit);
      for (const auto s : active) sims[s] = dot(unit, bank.proto(static_cast<int>(s) / per_class, static_cast<int>(s) % per_class));

      // nearest-prototype softmax
      double zmax = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < classes; ++c) {
        const auto& ks = seeded[static_cast<std::size_t>(c)];
        if (ks.empty()) continue;
        int best = ks.front();
        for (const int k : ks) {
          if (sims[bank.slot(c, k)] > sims[bank.slot(c, best)]) best = k;
        }
        class_best[static_cast<std::size_t>(c)] = best;
        class_logit[static_cast<std::size_t>(c)] = sims[bank.slot(c, best)];
        zmax = std::max(zmax, class_logit[static_cast<std::size_t>(c)]);
      }
      double total = 0.0;
      for (int c = 0; c < classes; ++c) {
        if (class_best[static_cast<std::size_t>(c)] >= 0) total += std::exp(class_logit[static_cast<std::size_t>(c)] - zmax);
      }
      const double pt = std::exp(class_logit[static_cast<std::size_t>(t)] - zmax) / total;
      terms.ce += -std::log(std::max(pt, kLogEps));

      const std::size_t assigned = bank.slot(t, class_best[static_cast<std::size_t>(t)]);
      const double gap = 1.0 - sims[assigned];
      terms.ppd += gap * gap;

      double smax = -std::numeric_limits<double>::infinity();
      for (const auto s : active) smax = std::max(smax, sims[s] / weights.alpha);
      double stotal = 0.0;
      for (const auto s : active) {
        soft[s] = std::exp(sims[s] / weights.alpha - smax);
        stotal += soft[s];
      }
      terms.ppc += -(sims[assigned] / weights.alpha - smax) + std::log(stotal);

      if (!grad) continue;
      std::fill(g.begin(), g.end(), 0.0);
      for (int c = 0; c < classes; ++c) {
        if (class_best[static_cast<std::size_t>(c)] < 0) continue;
        const double pc = std::exp(class_logit[static_cast<std::size_t>(c)] - zmax) / total;
        const double coeff = (pc - (c == t ? 1.0 : 0.0)) * inv;
        const auto proto = bank.proto(c, class_best[static_cast<std::size_t>(c)]);
        for (std::size_t d = 0; d < dim; ++d) g[d] += coeff * proto[d];
      }
      const auto pos = bank.proto(t, class_best[static_cast<std::size_t>(t)]);
      for (std::size_t d = 0; d < dim; ++d) g[d] += weights.lambda1 * (-2.0 * gap * pos[d]) * inv;
      for (const auto s : active) {
        const double w = weights.lambda2 * (soft[s] / stotal) / weights.alpha * inv;
        const auto proto = bank.proto(static_cast<int>(s) / per_class, static_cast<int>(s) % per_class);
        for (std::size_t d = 0; d < dim; ++d) g[d] += w * proto[d];
      }
      for (std::size_t d = 0; d < dim; ++d) g[d] -= weights.lambda2 / weights.alpha * pos[d] * inv;
      add_normalized_grad((*grad)[b], p, unit, g, norm);
    }
  }
  terms.ce *= inv;
  terms.ppd *= inv;
  terms.ppc *= inv;
  terms.total = terms.ce + weights.lambda1 * terms.ppd + weights.lambda2 * terms.ppc;
  return terms;
}

StrongViewLoss strong_view_loss(std::span<const StrongViewInput> views, const PrototypeBank* labeled_bank,
                                const PrototypeBank* unlabeled_bank, const LossWeights& weights,
                                std::vector<StrongViewGrads>* grads, ProbGrad wrt) {
  weights.validate();
  StrongViewLoss out;
  if (views.empty()) return out;
  const double scale = 1.0 / static_cast<double>(views.size());
  if (grads) grads->assign(views.size(), {});
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    if (view.probs.size() != view.targets.size()) throw ShapeError("strong view: probs/targets count mismatch");
    std::vector<BinaryTargets> binary;
    for (std::size_t b = 0; b < view.targets.size(); ++b) {
      binary.push_back(one_vs_rest(view.targets[b], view.probs[b].num_classes));
    }
    std::vector<ForegroundProbMaps>* gp = grads ? &(*grads)[v].probs : nullptr;
    const double linear = partial_bce(view.probs, binary, gp, wrt);
    if (gp) {
      for (auto& g : *gp) {
        for (auto& x : g.probs) x *= scale;
      }
    }
    out.linear += linear * scale;

    auto branch = [&](const PrototypeBank* bank, double w, double& slot) {
      if (!bank || w == 0.0) return;
      if (view.embeddings.size() != view.targets.size()) {
        throw ShapeError("strong view: embeddings/targets count mismatch");
      }
      std::vector<EmbeddingMap> ge;
      const auto terms = proto_loss(view.embeddings, *bank, view.targets, weights, grads ? &ge : nullptr);
      slot += terms.total * scale;
      out.ppd += terms.ppd * scale;
      out.ppc += terms.ppc * scale;
      if (!grads) return;
      auto& dst = (*grads)[v].embeddings;
      if (dst.empty()) {
        for (const auto& e : view.embeddings) dst.emplace_back(e.dim, e.size, 0.0);
      }
      for (std::size_t b = 0; b < ge.size(); ++b) {
        for (std::size_t i = 0; i < ge[b].values.size(); ++i) dst[b].values[i] += w * scale * ge[b].values[i];
      }
    };
    branch(labeled_bank, weights.w_lproto, out.lproto);
    branch(unlabeled_bank, weights.w_ulproto, out.ulproto);
  }
  out.total = out.linear + weights.w_lproto * out.lproto + weights.w_ulproto * out.ulproto;
  return out;
}

LossBreakdown total_loss(double pbce_weak, const StrongViewLoss& strong) {
  LossBreakdown out;
  out.pbce_weak = pbce_weak;
  out.linear_s = strong.linear;
  out.lproto = strong.lproto;
  out.ulproto = strong.ulproto;
  out.ppd = strong.ppd;
  out.ppc = strong.ppc;
  out.total = pbce_weak + strong.total;
  return out;
}

}  // namespace ltuda
