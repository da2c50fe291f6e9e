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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ltuda/checkpoint.hpp"
#include "ltuda/config.hpp"
#include "ltuda/evaluate.hpp"
#include "ltuda/prototypes.hpp"

namespace ltuda {

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// lr0 * (1 - t/T)^power.
double poly_lr(double lr0, long step, long total, double power);

/// SGD with momentum and L2 weight decay: v <- m v + (g + wd w); w <- w - lr v.
class Sgd {
 public:
  Sgd() = default;
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::vector<Parameter<float>>& params, double lr);
  void reset() { velocity_.clear(); }
  std::vector<std::vector<float>>& velocity() { return velocity_; }
  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 1e-4;
  std::vector<std::vector<float>> velocity_;
};

struct StepRecord {
  long step = 0;  // global step, counted from 0
  int stage = 1;
  double lr = 0.0;
  LossBreakdown loss;
};

/// Header and row formatting of metrics.csv.
std::string metrics_header();
std::string metrics_row(const StepRecord& record);

/// Two-stage teacher-student trainer. Holds the dataset by reference.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const Dataset& data);

  const TrainConfig& config() const { return config_; }
  /// Switches the ablation row; only allowed during Stage 1, whose
  /// dynamics do not depend on the method beyond the baseline.
  void set_method(Method method);
  int stage() const { return stage_; }
  long step_in_stage() const { return step_in_stage_; }
  long global_step() const { return global_step_; }
  long steps_per_epoch() const;
  long stage_steps(int stage) const;
  bool stage_done() const { return step_in_stage_ >= stage_steps(stage_); }
  /// Learning rate the next step() will use.
  double current_lr() const;
  /// Whether stage-2 prototype losses are active for the next step.
  bool prototypes_active() const;

  /// One optimisation step of the current stage.
  StepRecord step();
  /// Student and teacher restart from the current student; LR restarts;
  /// for the full method, banks are created and warmed.
  void begin_stage2();
  /// Update-only passes over the prototype banks (no parameter updates).
  void warmup_banks();

  UNet<float>& student() { return student_; }
  UNet<float>& teacher() { return teacher_; }
  const UNet<float>& student() const { return student_; }
  const UNet<float>& teacher() const { return teacher_; }
  const PrototypeBank& labeled_bank() const { return labeled_; }
  const PrototypeBank& unlabeled_bank() const { return unlabeled_; }
  const Sgd& optimizer() const { return sgd_; }
  const Rng& rng() const { return rng_; }

  /// Directory receiving batch dumps when a loss turns non-finite.
  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

  Archive to_archive() const;
  void save(const std::filesystem::path& path) const;
  /// Restores everything (weights, optimizer, banks, rng, counters).
  void restore(const Archive& archive);
  void load(const std::filesystem::path& path);

 private:
  std::vector<SampleRecord> weak_batch(Rng& rng);
  StepRecord baseline_step(const std::vector<SampleRecord>& weak, double lr);
  StepRecord cda_step(const std::vector<SampleRecord>& weak, double lr);
  void update_banks(const std::vector<MixedBatch>& views, const Tensor<float>& embeddings, int offset);
  void apply_update(double lr);
  [[noreturn]] void abort_non_finite(const std::vector<SampleRecord>& weak, const LossBreakdown& loss);

  TrainConfig config_;
  const Dataset* data_ = nullptr;
  UNet<float> student_;
  UNet<float> teacher_;
  Sgd sgd_;
  PrototypeBank labeled_;
  PrototypeBank unlabeled_;
  Rng rng_;
  Rng bank_rng_;  // prototype seeding and warm-up batches
  int stage_ = 1;
  long step_in_stage_ = 0;
  long global_step_ = 0;
  bool banks_ready_ = false;
  std::filesystem::path dump_dir_;
};

/// Where and how much of a run to execute.
struct RunOptions {
  std::filesystem::path out_dir;
  /// 1, 2, or 0 for both stages.
  int stages = 0;
  /// Resume from this checkpoint instead of starting fresh.
  std::filesystem::path resume;
  /// Optional per-step observer (progress output).
  std::function<void(const StepRecord&)> on_step;
};

/// Runs training into `out_dir`: config.json, metrics.csv, ckpt_stage1.bin,
/// ckpt_stage2.bin (plus ckpt_step*.bin when checkpoint_every is set).
/// Returns the path of the last checkpoint written.
std::filesystem::path run_training(const TrainConfig& config, const Dataset& data, const RunOptions& options);

/// Rebuilds the student network of a checkpoint.
UNet<float> load_student(const std::filesystem::path& ckpt, TrainConfig* config = nullptr);

MetricReport evaluate_run(const std::filesystem::path& ckpt, const Dataset& data, std::optional<double> tau = {});

struct AblationRow {
  Method method = Method::kBaseline;
  MetricReport report;
  FeatureVariance variance;
  double seconds = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  /// One row per method: method, dice_1..dice_C, hd_1..hd_C, mean_dice, mean_hd, variance_ratio.
  std::string to_csv() const;
};

/// Trains baseline, baseline+CDA and the full method on identical seeds
/// and data. CDA and full share their Stage-1 run. Reports on the test set.
AblationReport run_ablation(const TrainConfig& config, const Dataset& data,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace ltuda
