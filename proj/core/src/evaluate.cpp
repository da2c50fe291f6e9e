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

#include "ltuda/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ltuda/inference.hpp"

namespace ltuda {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher 1D squared distance transform. Missing seeds
// carry kFar, which stays far above any real squared distance.
constexpr double kFar = 1e20;

void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto at = [](const auto& a, int i) { return a[static_cast<std::size_t>(i)]; };
  auto cross = [&](int q, int p) {
    return ((at(f, q) + double(q) * q) - (at(f, p) + double(p) * p)) / (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = cross(q, at(v, k));
    while (s <= at(z, k)) {
      --k;
      s = cross(q, at(v, k));
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (at(z, k + 1) < q) ++k;
    const int p = at(v, k);
    d[static_cast<std::size_t>(q)] = double(q - p) * (q - p) + at(f, p);
  }
}

// Squared Euclidean distance from every pixel to the nearest seed.
std::vector<double> squared_edt(Size2 size, const std::vector<std::pair<int, int>>& seeds) {
  const int h = size.height, w = size.width;
  std::vector<double> grid(size.area(), kFar);
  for (const auto& [y, x] : seeds) grid[static_cast<std::size_t>(y) * w + x] = 0.0;
  const int n = std::max(h, w);
  std::vector<double> f, d;
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    edt_1d(f, d, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return grid;
}

double directed(const std::vector<std::pair<int, int>>& from, const std::vector<double>& dist_to, int width) {
  double worst = 0.0;
  for (const auto& [y, x] : from) worst = std::max(worst, dist_to[static_cast<std::size_t>(y) * width + x]);
  return worst;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

double dice(const HardLabelMap& pred, const HardLabelMap& gt, int cls) {
  require_same_size(pred.classes.size(), gt.classes.size(), "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.classes.area(); ++i) {
    const bool pa = pred.classes[i] == cls;
    const bool gb = gt.classes[i] == cls;
    a += pa;
    b += gb;
    both += pa && gb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelGrid& labels, int cls) {
  std::vector<std::pair<int, int>> out;
  auto outside = [&](int y, int x) { return !labels.contains(y, x) || labels(y, x) != cls; };
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      if (labels(y, x) != cls) continue;
      if (outside(y - 1, x) || outside(y + 1, x) || outside(y, x - 1) || outside(y, x + 1)) out.emplace_back(y, x);
    }
  }
  return out;
}

double hausdorff(const HardLabelMap& pred, const HardLabelMap& gt, int cls) {
  const Size2 size = pred.classes.size();
  require_same_size(size, gt.classes.size(), "hausdorff");
  const auto a = boundary_pixels(pred.classes, cls);
  const auto b = boundary_pixels(gt.classes, cls);
  if (a.empty() || b.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double ab = directed(a, squared_edt(size, b), size.width);
  const double ba = directed(b, squared_edt(size, a), size.width);
  return std::sqrt(std::max(ab, ba));
}

FeatureVariance feature_variance(std::span<const EmbeddingMap> embeddings, std::span<const HardLabelMap> labels,
                                 int num_classes_with_bg) {
  if (embeddings.size() != labels.size()) throw ShapeError("feature_variance: batch size mismatch");
  if (embeddings.empty()) throw ShapeError("feature_variance needs at least one map");
  const int dim = embeddings.front().dim;
  const auto nc = static_cast<std::size_t>(num_classes_with_bg);
  const auto d = static_cast<std::size_t>(dim);
  std::vector<double> sum(nc * d, 0.0), sq(nc, 0.0);
  std::vector<std::size_t> count(nc, 0);
  std::vector<double> unit(d);

  // Accumulate sum and sum of squared norms per class; intra follows from
  // E|i - m|^2 = E|i|^2 - |m|^2.
  for (std::size_t b = 0; b < embeddings.size(); ++b) {
    const auto& e = embeddings[b];
    if (e.dim != dim) throw ShapeError("feature_variance: embedding width mismatch");
    require_same_size(e.size, labels[b].classes.size(), "feature_variance");
    for (std::size_t p = 0; p < e.pixels(); ++p) {
      const int c = labels[b].classes[p];
      if (c < 0 || c >= num_classes_with_bg) continue;
      double n2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        unit[k] = e.at(static_cast<int>(k), p);
        n2 += unit[k] * unit[k];
      }
      const double n = std::sqrt(n2);
      if (n > 1e-12) {
        for (auto& u : unit) u /= n;
      }
      const auto cu = static_cast<std::size_t>(c);
      for (std::size_t k = 0; k < d; ++k) sum[cu * d + k] += unit[k];
      sq[cu] += n > 1e-12 ? 1.0 : 0.0;
      ++count[cu];
    }
  }

  FeatureVariance out;
  out.intra.assign(nc, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<double>> means;
  double intra_total = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (count[c] == 0) continue;
    std::vector<double> m(d);
    double m2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      m[k] = sum[c * d + k] / static_cast<double>(count[c]);
      m2 += m[k] * m[k];
    }
    out.intra[c] = std::max(0.0, sq[c] / static_cast<double>(count[c]) - m2);
    intra_total += out.intra[c];
    means.push_back(std::move(m));
  }
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) dist += (means[i][k] - means[j][k]) * (means[i][k] - means[j][k]);
      out.inter += dist;
      ++pairs;
    }
  }
  if (pairs) out.inter /= static_cast<double>(pairs);
  const double mean_intra = means.empty() ? 0.0 : intra_total / static_cast<double>(means.size());
  if (mean_intra <= 0.0) {
    out.ratio = out.inter > 0.0 ? kVarianceRatioCap : 0.0;
  } else {
    out.ratio = std::min(kVarianceRatioCap, out.inter / mean_intra);
  }
  return out;
}

std::string MetricReport::to_csv() const {
  std::ostringstream s;
  s << "class,dice,hd,n_images\n";
  for (const auto& r : rows) {
    s << (r.cls < 0 ? std::string("mean") : std::to_string(r.cls)) << ',' << fmt(r.dice) << ',' << fmt(r.hd) << ','
      << r.n_images << '\n';
  }
  return s.str();
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  for (const auto& r : rows) {
    if (r.cls < 0) continue;
    classes.push_back({{"class", r.cls}, {"dice", num(r.dice)}, {"hd", num(r.hd)}, {"n_images", r.n_images}});
  }
  return {{"classes", classes}, {"mean_dice", num(mean().dice)}, {"mean_hd", num(mean().hd)}};
}

void MetricReport::write(const std::filesystem::path& json_path) const {
  {
    std::ofstream out(json_path);
    if (!out) throw Error("cannot write " + json_path.string());
    out << to_json().dump(2) << '\n';
  }
  auto csv = json_path;
  csv.replace_extension(".csv");
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  out << to_csv();
}

MetricReport evaluate_predictions(std::span<const HardLabelMap> preds, std::span<const LabelGrid> gts,
                                  int num_classes) {
  if (preds.size() != gts.size()) throw ShapeError("evaluate: prediction/label count mismatch");
  MetricReport report;
  double dice_sum = 0.0, hd_sum = 0.0;
  int hd_classes = 0;
  for (int c = 1; c <= num_classes; ++c) {
    ClassMetrics row;
    row.cls = c;
    double ds = 0.0, hs = 0.0;
    int hn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const HardLabelMap gt{gts[i]};
      ds += dice(preds[i], gt, c);
      const double h = hausdorff(preds[i], gt, c);
      if (!std::isnan(h)) {
        hs += h;
        ++hn;
      }
    }
    row.n_images = static_cast<int>(preds.size());
    row.dice = preds.empty() ? std::numeric_limits<double>::quiet_NaN() : ds / static_cast<double>(preds.size());
    row.hd = hn ? hs / hn : std::numeric_limits<double>::quiet_NaN();
    dice_sum += row.dice;
    if (hn) {
      hd_sum += row.hd;
      ++hd_classes;
    }
    report.rows.push_back(row);
  }
  ClassMetrics mean;
  mean.cls = -1;
  mean.dice = num_classes > 0 ? dice_sum / num_classes : std::numeric_limits<double>::quiet_NaN();
  mean.hd = hd_classes ? hd_sum / hd_classes : std::numeric_limits<double>::quiet_NaN();
  mean.n_images = static_cast<int>(preds.size());
  report.rows.push_back(mean);
  return report;
}

std::vector<HardLabelMap> predict(UNet<float>& model, const std::vector<SampleRecord>& samples, double tau,
                                  std::vector<EmbeddingMap>* embeddings) {
  std::vector<HardLabelMap> out;
  if (embeddings) embeddings->clear();
  constexpr std::size_t kChunk = 4;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<const ImageGrid*> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(&samples[i].image);
    const auto& result = model.forward(stack_images(images), Mode::kEval);
    for (std::size_t i = start; i < end; ++i) {
      const int j = static_cast<int>(i - start);
      out.push_back(threshold_classify(probs_of(result.probs, j), tau));
      if (embeddings) embeddings->push_back(embeddings_of(result.embeddings, j));
    }
  }
  return out;
}

MetricReport evaluate_model(UNet<float>& model, const std::vector<SampleRecord>& samples, double tau) {
  std::vector<LabelGrid> gts;
  for (const auto& s : samples) {
    if (!s.full_label) throw DatasetError("evaluation needs fully-labelled samples");
    gts.push_back(*s.full_label);
  }
  const auto preds = predict(model, samples, tau);
  return evaluate_predictions(preds, gts, model.config().num_classes);
}

FeatureVariance evaluate_variance(UNet<float>& model, const std::vector<SampleRecord>& samples) {
  std::vector<EmbeddingMap> emb;
  predict(model, samples, 0.5, &emb);
  std::vector<HardLabelMap> labels;
  for (const auto& s : samples) {
    if (!s.full_label) throw DatasetError("feature variance needs fully-labelled samples");
    labels.push_back(HardLabelMap{*s.full_label});
  }
  return feature_variance(emb, labels, model.config().num_classes + 1);
}

}  // namespace ltuda
