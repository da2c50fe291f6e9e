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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ltuda/losses.hpp"
#include "test_support.hpp"

namespace ltuda {
namespace {

using testing::central_difference;
using testing::close;
using testing::random_unit;

constexpr double kRtol = 1e-3;

ForegroundProbMaps random_probs(int c, Size2 s, std::mt19937_64& rng) {
  ForegroundProbMaps m(c, s);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (auto& p : m.probs) p = u(rng);
  return m;
}

BinaryTargets random_targets(int c, Size2 s, std::mt19937_64& rng) {
  BinaryTargets t(c, s);
  std::uniform_int_distribution<int> u(-1, 1);
  for (auto& y : t.y) y = static_cast<std::int8_t>(u(rng));
  return t;
}

EmbeddingMap random_embeddings(int d, Size2 s, std::mt19937_64& rng) {
  EmbeddingMap e(d, s);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : e.values) v = n(rng);
  return e;
}

PrototypeBank random_bank(int c, int k, int d, std::mt19937_64& rng) {
  PrototypeBank bank(c, k, d, 0.999);
  for (int cls = 0; cls <= c; ++cls) {
    for (int j = 0; j < k; ++j) {
      const auto v = random_unit(d, rng);
      std::copy(v.begin(), v.end(), bank.proto(cls, j).begin());
      bank.initialized[bank.slot(cls, j)] = 1;
    }
  }
  return bank;
}

HardLabelMap random_hard(int c, Size2 s, std::mt19937_64& rng) {
  HardLabelMap h{LabelGrid(s)};
  std::uniform_int_distribution<int> u(0, c);
  for (auto& v : h.classes.values()) v = static_cast<std::int16_t>(u(rng));
  return h;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TEST(PartialBce, Examples) {
  ForegroundProbMaps p(4, Size2{1, 1}, 0.5);
  BinaryTargets t(4, Size2{1, 1});
  ForegroundProbMaps g;
  EXPECT_EQ(partial_bce(p, t, &g), 0.0);
  for (double v : g.probs) EXPECT_EQ(v, 0.0);
  t.at(2, 0) = 1;
  EXPECT_NEAR(partial_bce(p, t), 0.693147, 1e-6);
  p.at(2, 0) = 1.0 - 1e-9;
  EXPECT_NEAR(partial_bce(p, t), 0.0, 1e-6);
}

TEST(PartialBce, UnsupervisedEntriesGetZeroGradient) {
  std::mt19937_64 rng(1);
  for (auto wrt : {ProbGrad::kProbs, ProbGrad::kLogits}) {
    const auto p = random_probs(3, Size2{4, 4}, rng);
    const auto t = random_targets(3, Size2{4, 4}, rng);
    ForegroundProbMaps g;
    partial_bce(p, t, &g, wrt);
    for (std::size_t i = 0; i < t.y.size(); ++i) {
      if (t.y[i] == -1) EXPECT_EQ(g.probs[i], 0.0);
    }
  }
}

TEST(PartialBce, AveragesOverSupervisedPixels) {
  // Two pixels: one supervised on two classes, one unsupervised.
  ForegroundProbMaps p(2, Size2{1, 2}, 0.5);
  BinaryTargets t(2, Size2{1, 2});
  t.at(1, 0) = 1;
  t.at(2, 0) = 0;
  EXPECT_NEAR(partial_bce(p, t), 2.0 * std::log(2.0), 1e-12);
}

TEST(PartialBce, GradientMatchesCentralDifferencesInProbs) {
  std::mt19937_64 rng(2);
  std::vector<ForegroundProbMaps> p = {random_probs(3, Size2{2, 4}, rng), random_probs(3, Size2{2, 4}, rng)};
  const std::vector<BinaryTargets> t = {random_targets(3, Size2{2, 4}, rng), random_targets(3, Size2{2, 4}, rng)};
  std::vector<ForegroundProbMaps> g;
  partial_bce(p, t, &g);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < p[b].probs.size(); ++i) {
      const double num = central_difference([&] { return partial_bce(p, t); }, p[b].probs[i]);
      EXPECT_TRUE(close(g[b].probs[i], num, kRtol, 1e-8)) << g[b].probs[i] << " vs " << num;
    }
  }
}

TEST(PartialBce, GradientMatchesCentralDifferencesInLogits) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<double> z(3 * 16);
  for (auto& v : z) v = n(rng);
  const auto t = random_targets(3, Size2{4, 4}, rng);
  auto eval = [&] {
    ForegroundProbMaps p(3, Size2{4, 4});
    for (std::size_t i = 0; i < z.size(); ++i) p.probs[i] = sigmoid(z[i]);
    return p;
  };
  ForegroundProbMaps g;
  partial_bce(eval(), t, &g, ProbGrad::kLogits);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double num = central_difference([&] { return partial_bce(eval(), t); }, z[i]);
    EXPECT_TRUE(close(g.probs[i], num, kRtol, 1e-8)) << g.probs[i] << " vs " << num;
  }
}

TEST(HardCe, Examples) {
  ClassDistribution onehot(5, Size2{1, 2}, 0.0);
  onehot.at(3, 0) = 1.0;
  onehot.at(0, 1) = 1.0;
  HardLabelMap target{LabelGrid(1, 2, 0)};
  target.classes[0] = 3;
  EXPECT_NEAR(hard_ce_multiclass(onehot, target), 0.0, 1e-12);
  ClassDistribution uniform(5, Size2{1, 2}, 0.2);
  EXPECT_NEAR(hard_ce_multiclass(uniform, target), std::log(5.0), 1e-12);
}

TEST(HardCe, PermutationInvariantAndGradient) {
  std::mt19937_64 rng(4);
  ClassDistribution pred(4, Size2{1, 6});
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (std::size_t p = 0; p < 6; ++p) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += pred.at(c, p) = u(rng);
    for (int c = 0; c < 4; ++c) pred.at(c, p) /= s;
  }
  const auto target = random_hard(3, Size2{1, 6}, rng);
  ClassDistribution g;
  const double v = hard_ce_multiclass(pred, target, &g);
  for (std::size_t i = 0; i < pred.probs.size(); ++i) {
    const double num = central_difference([&] { return hard_ce_multiclass(pred, target); }, pred.probs[i]);
    EXPECT_TRUE(close(g.probs[i], num, kRtol, 1e-8));
  }
  // reverse pixel order
  ClassDistribution rp(4, Size2{1, 6});
  HardLabelMap rt{LabelGrid(1, 6)};
  for (std::size_t p = 0; p < 6; ++p) {
    for (int c = 0; c < 4; ++c) rp.at(c, 5 - p) = pred.at(c, p);
    rt.classes[5 - p] = target.classes[p];
  }
  EXPECT_NEAR(hard_ce_multiclass(rp, rt), v, 1e-12);
}

TEST(Ppd, Geometry) {
  PrototypeBank bank(1, 1, 2, 0.9);
  const double protos[] = {1, 0, 0, 1};
  std::copy(std::begin(protos), std::end(protos), bank.protos.begin());
  bank.initialized = {1, 1};
  EmbeddingMap e(2, Size2{1, 3});
  e.at(0, 0) = 2.0;   // equal direction to slot 0
  e.at(1, 1) = 1.0;   // orthogonal to slot 0
  e.at(0, 2) = -1.0;  // antipodal to slot 0
  const std::vector<int> a0 = {0, -1, -1}, a1 = {-1, 0, -1}, a2 = {-1, -1, 0};
  EXPECT_NEAR(ppd(e, bank, a0), 0.0, 1e-12);
  EXPECT_NEAR(ppd(e, bank, a1), 1.0, 1e-12);
  EXPECT_NEAR(ppd(e, bank, a2), 4.0, 1e-12);
}

TEST(Ppc, Examples) {
  PrototypeBank lone(1, 1, 2, 0.9);
  lone.protos = {1, 0, 0, 1};
  lone.initialized = {0, 1};  // only one prototype exists: no negatives
  EmbeddingMap e(2, Size2{1, 1});
  e.at(1, 0) = 1.0;
  const std::vector<int> a = {1};
  EXPECT_NEAR(ppc(e, lone, a, 0.1), 0.0, 1e-12);

  PrototypeBank bank(2, 1, 2, 0.9);
  bank.protos = {-1, 0, 1, 0, -1, 0};
  bank.initialized = {1, 1, 1};
  e.at(0, 0) = 1.0;
  e.at(1, 0) = 0.0;
  const double expect = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0 * std::exp(-10.0)));
  EXPECT_NEAR(ppc(e, bank, a, 0.1), expect, 1e-12);
  EXPECT_LT(expect, 1e-8);
}

TEST(Ppc, RaisingANegativeRaisesTheLoss) {
  std::mt19937_64 rng(5);
  auto bank = random_bank(2, 2, 4, rng);
  const auto e = random_embeddings(4, Size2{1, 1}, rng);
  const std::vector<int> a = {2};
  const double before = ppc(e, bank, a, 0.1);
  // rotate negative slot 0 onto the embedding direction
  auto unit = e.pixel(0);
  const double n = std::sqrt(std::inner_product(unit.begin(), unit.end(), unit.begin(), 0.0));
  for (auto& v : unit) v /= n;
  std::copy(unit.begin(), unit.end(), bank.proto(0, 0).begin());
  EXPECT_GT(ppc(e, bank, a, 0.1), before);
}

TEST(PrototypeTerms, GradientsMatchCentralDifferences) {
  std::mt19937_64 rng(6);
  const auto bank = random_bank(3, 2, 5, rng);
  auto e = random_embeddings(5, Size2{2, 3}, rng);
  const auto target = random_hard(3, Size2{2, 3}, rng);
  const auto assigned = assign_prototypes(e, bank, target);
  EmbeddingMap g_ppd, g_ppc;
  ppd(e, bank, assigned, &g_ppd);
  ppc(e, bank, assigned, 0.1, &g_ppc);
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    const double n1 = central_difference([&] { return ppd(e, bank, assigned); }, e.values[i]);
    const double n2 = central_difference([&] { return ppc(e, bank, assigned, 0.1); }, e.values[i]);
    EXPECT_TRUE(close(g_ppd.values[i], n1, kRtol, 1e-8)) << "ppd " << g_ppd.values[i] << " vs " << n1;
    EXPECT_TRUE(close(g_ppc.values[i], n2, kRtol, 1e-8)) << "ppc " << g_ppc.values[i] << " vs " << n2;
  }
}

TEST(PrototypeTerms, AssignmentIsNearestWithinTargetClass) {
  std::mt19937_64 rng(7);
  const auto bank = random_bank(2, 3, 4, rng);
  const auto e = random_embeddings(4, Size2{3, 3}, rng);
  const auto target = random_hard(2, Size2{3, 3}, rng);
  const auto a = assign_prototypes(e, bank, target);
  for (std::size_t p = 0; p < 9; ++p) {
    const int t = target.classes[p];
    const auto v = e.pixel(p);
    int best = -1;
    double best_s = -1e300;
    for (int k = 0; k < 3; ++k) {
      const auto q = bank.proto(t, k);
      const double s = std::inner_product(v.begin(), v.end(), q.begin(), 0.0);
      if (s > best_s) best_s = s, best = k;
    }
    EXPECT_EQ(a[p], t * 3 + best);
  }
}

TEST(ProtoLoss, ComponentsAndGradient) {
  std::mt19937_64 rng(8);
  const auto bank = random_bank(2, 2, 4, rng);
  std::vector<EmbeddingMap> e = {random_embeddings(4, Size2{2, 2}, rng), random_embeddings(4, Size2{2, 2}, rng)};
  const std::vector<HardLabelMap> t = {random_hard(2, Size2{2, 2}, rng), random_hard(2, Size2{2, 2}, rng)};
  LossWeights w;
  w.lambda1 = 0.3;  // larger than default so every term shows in the check
  w.lambda2 = 0.2;
  std::vector<EmbeddingMap> g;
  const auto terms = proto_loss(e, bank, t, w, &g);
  EXPECT_NEAR(terms.total, terms.ce + 0.3 * terms.ppd + 0.2 * terms.ppc, 1e-12);

  // CE against proto_predict and PPD/PPC against the standalone forms
  double ce = 0, pd = 0, pc = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    ce += hard_ce_multiclass(proto_predict(e[b], bank), t[b]) * 4;
    const auto a = assign_prototypes(e[b], bank, t[b]);
    pd += ppd(e[b], bank, a) * 4;
    pc += ppc(e[b], bank, a, w.alpha) * 4;
  }
  EXPECT_NEAR(terms.ce, ce / 8, 1e-12);
  EXPECT_NEAR(terms.ppd, pd / 8, 1e-12);
  EXPECT_NEAR(terms.ppc, pc / 8, 1e-12);

  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < e[b].values.size(); ++i) {
      const double num = central_difference([&] { return proto_loss(e, bank, t, w).total; }, e[b].values[i]);
      EXPECT_TRUE(close(g[b].values[i], num, kRtol, 1e-8)) << g[b].values[i] << " vs " << num;
    }
  }
}

TEST(ProtoLoss, EmptyBankGivesZero) {
  PrototypeBank bank(2, 1, 3, 0.9);
  const std::vector<EmbeddingMap> e = {EmbeddingMap(3, Size2{1, 1}, 1.0)};
  const std::vector<HardLabelMap> t = {HardLabelMap{LabelGrid(1, 1, 0)}};
  std::vector<EmbeddingMap> g;
  EXPECT_EQ(proto_loss(e, bank, t, LossWeights{}, &g).total, 0.0);
  for (double v : g[0].values) EXPECT_EQ(v, 0.0);
}

// Removing the unseeded slot must give the same numbers as a bank that never
// had it: class 2 is dropped and its pixels are skipped.
TEST(ProtoLoss, UnseededClassMatchesSmallerBank) {
  const LossWeights w;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> d;
  PrototypeBank big(2, 2, 4, 0.9), small(1, 2, 4, 0.9);
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k < 2; ++k) {
      std::vector<double> v(4);
      double n = 0.0;
      for (auto& x : v) n += (x = d(rng)) * x;
      for (auto& x : v) x /= std::sqrt(n);
      std::copy(v.begin(), v.end(), big.proto(c, k).begin());
      std::copy(v.begin(), v.end(), small.proto(c, k).begin());
      big.initialized[big.slot(c, k)] = 1;
      small.initialized[small.slot(c, k)] = 1;
    }
  }
  std::vector<EmbeddingMap> e = {EmbeddingMap(4, Size2{2, 3})};
  for (auto& x : e[0].values) x = d(rng);
  std::vector<HardLabelMap> t = {HardLabelMap{LabelGrid(2, 3, 0)}};
  t[0].classes(0, 1) = 1;
  t[0].classes(1, 2) = 2;  // pixel 5, class without prototypes

  // pixels 0..4 alone, against a bank that never had class 2
  std::vector<EmbeddingMap> e5 = {EmbeddingMap(4, Size2{1, 5})};
  std::vector<HardLabelMap> t5 = {HardLabelMap{LabelGrid(1, 5, 0)}};
  for (std::size_t p = 0; p < 5; ++p) {
    for (int ch = 0; ch < 4; ++ch) e5[0].at(ch, p) = e[0].at(ch, p);
    t5[0].classes[p] = t[0].classes[p];
  }
  std::vector<EmbeddingMap> g, g5;
  const auto a = proto_loss(e, big, t, w, &g);
  const auto b = proto_loss(e5, small, t5, w, &g5);
  EXPECT_NEAR(a.ce, b.ce, 1e-12);
  EXPECT_NEAR(a.ppd, b.ppd, 1e-12);
  EXPECT_NEAR(a.ppc, b.ppc, 1e-12);
  for (std::size_t p = 0; p < 5; ++p) {
    for (int ch = 0; ch < 4; ++ch) EXPECT_NEAR(g[0].at(ch, p), g5[0].at(ch, p), 1e-12);
  }
  for (int ch = 0; ch < 4; ++ch) EXPECT_EQ(g[0].at(ch, 5), 0.0);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.alpha = 0.0;
  EXPECT_ANY_THROW(w.validate());
  w = LossWeights{};
  w.lambda1 = -1;
  EXPECT_ANY_THROW(w.validate());
}

struct StrongFixture {
  std::vector<std::vector<ForegroundProbMaps>> probs;
  std::vector<std::vector<EmbeddingMap>> emb;
  std::vector<std::vector<HardLabelMap>> targets;
  PrototypeBank lab, unl;

  explicit StrongFixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    lab = random_bank(3, 2, 4, rng);
    unl = random_bank(3, 2, 4, rng);
    for (int v = 0; v < 2; ++v) {
      probs.emplace_back();
      emb.emplace_back();
      targets.emplace_back();
      for (int b = 0; b < 2; ++b) {
        probs.back().push_back(random_probs(3, Size2{2, 2}, rng));
        emb.back().push_back(random_embeddings(4, Size2{2, 2}, rng));
        targets.back().push_back(random_hard(3, Size2{2, 2}, rng));
      }
    }
  }
  std::vector<StrongViewInput> views() const {
    std::vector<StrongViewInput> out;
    for (std::size_t v = 0; v < probs.size(); ++v) out.push_back({probs[v], emb[v], targets[v]});
    return out;
  }
};

TEST(StrongViewLoss, RecomposesFromBranches) {
  const StrongFixture f(9);
  LossWeights w;
  w.w_lproto = 0.7;
  w.w_ulproto = 1.3;
  const auto s = strong_view_loss(f.views(), &f.lab, &f.unl, w);
  double linear = 0, lp = 0, up = 0;
  for (std::size_t v = 0; v < 2; ++v) {
    std::vector<BinaryTargets> bt;
    for (const auto& t : f.targets[v]) bt.push_back(one_vs_rest(t, 3));
    linear += partial_bce(f.probs[v], bt) / 2;
    lp += proto_loss(f.emb[v], f.lab, f.targets[v], w).total / 2;
    up += proto_loss(f.emb[v], f.unl, f.targets[v], w).total / 2;
  }
  EXPECT_NEAR(s.linear, linear, 1e-12);
  EXPECT_NEAR(s.lproto, lp, 1e-12);
  EXPECT_NEAR(s.ulproto, up, 1e-12);
  EXPECT_NEAR(s.total, linear + 0.7 * lp + 1.3 * up, 1e-12);

  w.w_lproto = 0;
  w.w_ulproto = 0;
  EXPECT_NEAR(strong_view_loss(f.views(), &f.lab, &f.unl, w).total, linear, 1e-12);
  EXPECT_NEAR(strong_view_loss(f.views(), nullptr, nullptr, LossWeights{}).total, linear, 1e-12);
}

TEST(StrongViewLoss, GradientsMatchCentralDifferences) {
  StrongFixture f(10);
  LossWeights w;
  w.lambda1 = 0.2;
  w.lambda2 = 0.1;
  w.w_ulproto = 0.5;
  std::vector<StrongViewGrads> g;
  strong_view_loss(f.views(), &f.lab, &f.unl, w, &g);
  auto value = [&] { return strong_view_loss(f.views(), &f.lab, &f.unl, w).total; };
  for (std::size_t v = 0; v < 2; ++v) {
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < f.probs[v][b].probs.size(); ++i) {
        const double num = central_difference(value, f.probs[v][b].probs[i]);
        EXPECT_TRUE(close(g[v].probs[b].probs[i], num, kRtol, 1e-8));
      }
      for (std::size_t i = 0; i < f.emb[v][b].values.size(); ++i) {
        const double num = central_difference(value, f.emb[v][b].values[i]);
        EXPECT_TRUE(close(g[v].embeddings[b].values[i], num, kRtol, 1e-8))
            << g[v].embeddings[b].values[i] << " vs " << num;
      }
    }
  }
}

TEST(TotalLoss, SumsComponents) {
  StrongViewLoss s;
  s.linear = 0.5;
  s.lproto = 0.25;
  s.ulproto = 0.125;
  s.total = 0.875;
  const auto t = total_loss(1.0, s);
  EXPECT_NEAR(t.total, t.pbce_weak + t.linear_s + t.lproto + t.ulproto, 1e-12);
  EXPECT_EQ(total_loss(1.0, StrongViewLoss{}).total, 1.0);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    StrongFixture f(100 + static_cast<std::uint64_t>(t));
    const auto s = strong_view_loss(f.views(), &f.lab, &f.unl, LossWeights{});
    EXPECT_GE(s.linear, 0);
    EXPECT_GE(s.lproto, 0);
    EXPECT_GE(s.ulproto, 0);
    EXPECT_GE(s.ppd, 0);
    EXPECT_GE(s.ppc, 0);
  }
}

}  // namespace
}  // namespace ltuda
