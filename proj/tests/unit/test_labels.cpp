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

#include <fstream>
#include <map>

#include "ltuda/labels.hpp"
#include "test_support.hpp"

namespace ltuda {
namespace {

using testing::TempDir;

SyntheticOptions small(int per_subset = 1, int size = 64, std::uint64_t seed = 7) {
  SyntheticOptions o;
  o.per_subset = per_subset;
  o.size = {size, size};
  o.seed = seed;
  o.test_count = 2;
  return o;
}

TEST(Labels, GeneratorIsDeterministic) {
  const auto a = generate_synthetic_dataset(small());
  const auto b = generate_synthetic_dataset(small());
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  const auto c = generate_synthetic_dataset(small(1, 64, 8));
  EXPECT_NE(a.train.front().image, c.train.front().image);
}

TEST(Labels, PartialAgreesWithFullLabel) {
  const auto d = generate_synthetic_dataset(small(3));
  for (const auto& r : d.train) {
    ASSERT_TRUE(r.full_label.has_value());
    validate_record(r, d.manifest.num_classes);
    bool any = false;
    for (std::size_t i = 0; i < r.image.area(); ++i) {
      const int p = r.partial.classes[i];
      EXPECT_TRUE(p == kUnknown || p == r.partial.labeled_class);
      if (p != kUnknown) {
        EXPECT_EQ(p, (*r.full_label)[i]);
        any = true;
      }
      EXPECT_GE(r.image[i], -1.0f);
      EXPECT_LE(r.image[i], 1.0f);
    }
    EXPECT_TRUE(any) << "every sample shows its labeled organ";
  }
}

TEST(Labels, KnownNegativesCoverEverythingButTheLabeledOrgan) {
  const auto d = generate_synthetic_dataset(small());
  for (const auto& r : d.train) {
    ASSERT_EQ(r.partial.known_negative.size(), r.image.size());
    for (std::size_t i = 0; i < r.image.area(); ++i) {
      const bool organ = (*r.full_label)[i] == r.partial.labeled_class;
      EXPECT_EQ(r.partial.known_negative[i] != 0, !organ);
    }
  }
}

TEST(Labels, EveryClassLabeledInExactlyOneSubset) {
  auto o = small(10, 256, 1);
  o.test_count = 0;
  const auto d = generate_synthetic_dataset(o);
  ASSERT_EQ(d.manifest.subsets.size(), 4u);
  std::map<int, int> seen;
  for (const auto& s : d.manifest.subsets) {
    EXPECT_EQ(s.samples.size(), 10u);
    ++seen[s.labeled_class];
  }
  for (int c = 1; c <= 4; ++c) EXPECT_EQ(seen[c], 1);
  EXPECT_EQ(d.train.size(), 40u);
}

TEST(Labels, ShapesDoNotOverlapAndAllClassesPresent) {
  const auto d = generate_synthetic_dataset(small(2, 128));
  for (const auto& r : d.train) {
    std::map<int, int> counts;
    for (auto v : r.full_label->values()) ++counts[v];
    for (int c = 0; c <= 4; ++c) EXPECT_GT(counts[c], 0) << "class " << c;
  }
}

TEST(Labels, GeneratorPreconditions) {
  auto o = small();
  o.num_classes = 1;
  EXPECT_THROW(generate_synthetic_dataset(o), GenerationError);
  o = small();
  o.size = {16, 64};
  EXPECT_THROW(generate_synthetic_dataset(o), GenerationError);
  o = small();
  o.per_subset = 0;
  EXPECT_THROW(generate_synthetic_dataset(o), GenerationError);
}

TEST(Labels, CrowdedCanvasRaisesGenerationFailure) {
  auto o = small();
  o.num_classes = 30;
  o.size = {32, 32};
  o.max_placement_retries = 5;
  EXPECT_THROW(generate_synthetic_dataset(o), GenerationError);
}

TEST(Labels, DiskRoundTripIsExact) {
  TempDir dir("labels_rt");
  const auto d = generate_synthetic_dataset(small(2));
  const auto manifest = save_dataset(d, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.train, d.train);
  EXPECT_EQ(back.test, d.test);
  EXPECT_EQ(back.manifest, manifest);
  EXPECT_EQ(load_manifest(dir.path() / "manifest.json"), manifest);

  // save -> load -> save keeps the manifest structurally equal
  TempDir again("labels_rt2");
  save_manifest(back.manifest, again.path() / "manifest.json");
  std::ifstream a(dir.path() / "manifest.json"), b(again.path() / "manifest.json");
  const std::string ta((std::istreambuf_iterator<char>(a)), {}), tb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(ta, tb);
}

TEST(Labels, MissingFileNamesThePath) {
  TempDir dir("labels_missing");
  const auto manifest = generate_synthetic(small(), dir.path());
  const auto victim = dir.path() / manifest.subsets[1].samples[0].image;
  std::filesystem::remove(victim);
  try {
    load_dataset(dir.path());
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find(victim.filename().string()), std::string::npos) << e.what();
  }
}

TEST(Labels, OutOfRangeLabelRejected) {
  TempDir dir("labels_range");
  const auto manifest = generate_synthetic(small(), dir.path());
  const auto& f = manifest.subsets[0].samples[0];
  const auto full = read_i16_grid(dir.path() / f.full_label, manifest.image_size);
  auto bad = full;
  bad[0] = 5;  // C + 1
  write_i16(dir.path() / f.full_label, bad.values());
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);
}

TEST(Labels, TruncatedTensorRejected) {
  TempDir dir("labels_trunc");
  const auto manifest = generate_synthetic(small(), dir.path());
  const auto path = dir.path() / manifest.subsets[0].samples[0].image;
  std::vector<float> few(10, 0.0f);
  write_f32(path, few);
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);
}

TEST(Labels, ValidateRecordCatchesForeignClass) {
  auto r = generate_synthetic_dataset(small()).train.front();
  r.partial.classes[0] = static_cast<std::int16_t>(r.partial.labeled_class == 1 ? 2 : 1);
  EXPECT_THROW(validate_record(r, 4), DatasetError);
}

TEST(Labels, SampleIndicesUniformOverPool) {
  // 4 subsets of unequal size; frequencies follow pool shares.
  const std::vector<int> sizes = {5, 10, 15, 10};
  std::vector<int> owner;
  for (int s = 0; s < 4; ++s) owner.insert(owner.end(), static_cast<std::size_t>(sizes[s]), s);
  Rng rng(3);
  std::vector<double> counts(4, 0.0);
  const int draws = 10000;
  for (int t = 0; t < draws / 4; ++t) {
    for (auto i : sample_indices(owner.size(), 4, rng)) counts[static_cast<std::size_t>(owner[i])] += 1;
  }
  double chi2 = 0.0;
  for (int s = 0; s < 4; ++s) {
    const double expected = draws * sizes[static_cast<std::size_t>(s)] / 40.0;
    chi2 += (counts[static_cast<std::size_t>(s)] - expected) * (counts[static_cast<std::size_t>(s)] - expected) /
            expected;
  }
  EXPECT_LT(chi2, 16.27);  // chi-square, 3 dof, p = 0.001
}

TEST(Labels, SampleBatchContract) {
  const auto d = generate_synthetic_dataset(small(2));
  Rng a(11), b(11);
  const auto x = sample_batch(d, 2, a);
  EXPECT_EQ(x.size(), 2u);
  EXPECT_EQ(x, sample_batch(d, 2, b));
  Rng c(1);
  EXPECT_THROW(sample_batch(d, 1, c), DatasetError);
  Dataset empty;
  EXPECT_THROW(sample_batch(empty, 2, c), DatasetError);
}

TEST(Labels, BinaryViewEncoding) {
  PartialLabelMap p;
  p.labeled_class = 2;
  p.classes = LabelGrid(1, 3, kUnknown);
  p.classes[0] = 2;
  p.known_negative = MaskGrid(1, 3, 0);
  p.known_negative[1] = 1;
  const auto t = binary_view(p, 3);
  EXPECT_EQ(t.at(2, 0), 1);
  EXPECT_EQ(t.at(1, 0), -1);
  EXPECT_EQ(t.at(3, 0), -1);
  EXPECT_EQ(t.at(2, 1), 0);
  EXPECT_EQ(t.at(1, 1), -1);
  for (int c = 1; c <= 3; ++c) EXPECT_EQ(t.at(c, 2), -1);
}

TEST(Labels, OneVsRestEncoding) {
  HardLabelMap h{LabelGrid(1, 3, 0)};
  h.classes[1] = 1;
  h.classes[2] = 3;
  const auto t = one_vs_rest(h, 3);
  for (int c = 1; c <= 3; ++c) EXPECT_EQ(t.at(c, 0), 0);
  EXPECT_EQ(t.at(1, 1), 1);
  EXPECT_EQ(t.at(2, 1), 0);
  EXPECT_EQ(t.at(3, 2), 1);
}

}  // namespace
}  // namespace ltuda
