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

#include "ltuda/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "ltuda/inference.hpp"

namespace ltuda {

namespace {

constexpr std::uint64_t kRngSalt = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kBankRngSalt = 0xD1B54A32D192ED03ull;

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

void store_net(Archive& a, const std::string& prefix, const UNet<float>& net) {
  for (const auto& p : net.parameters()) a.f32[prefix + "/" + p.name] = p.value;
}

void restore_net(const Archive& a, const std::string& prefix, UNet<float>& net) {
  for (auto& p : net.parameters()) {
    const auto it = a.f32.find(prefix + "/" + p.name);
    if (it == a.f32.end()) throw CheckpointError("checkpoint lacks tensor " + prefix + "/" + p.name);
    if (it->second.size() != p.value.size()) throw CheckpointError("checkpoint tensor " + it->first + " has wrong size");
    p.value = it->second;
  }
}

void store_bank(Archive& a, const std::string& prefix, const PrototypeBank& bank) {
  a.meta[prefix] = {{"num_classes", bank.num_classes},
                    {"per_class", bank.per_class},
                    {"dim", bank.dim},
                    {"momentum", bank.momentum}};
  a.f64[prefix + "/protos"] = bank.protos;
  a.u8[prefix + "/initialized"] = bank.initialized;
}

PrototypeBank restore_bank(const Archive& a, const std::string& prefix) {
  const auto& m = a.meta.at(prefix);
  PrototypeBank bank(m.at("num_classes").get<int>() - 1, m.at("per_class").get<int>(), m.at("dim").get<int>(),
                     m.at("momentum").get<double>());
  bank.protos = a.f64.at(prefix + "/protos");
  bank.initialized = a.u8.at(prefix + "/initialized");
  if (bank.protos.size() != static_cast<std::size_t>(bank.num_classes) * bank.per_class * bank.dim ||
      bank.initialized.size() != static_cast<std::size_t>(bank.num_classes) * bank.per_class) {
    throw CheckpointError("prototype bank " + prefix + " has inconsistent sizes");
  }
  return bank;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double poly_lr(double lr0, long step, long total, double power) {
  if (total <= 0) return lr0;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return lr0 * std::pow(1.0 - frac, power);
}

void Sgd::step(std::vector<Parameter<float>>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
  }
  const auto m = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable || p.grad.empty()) continue;
    auto& v = velocity_[i];
    if (v.size() != p.value.size()) v.assign(p.value.size(), 0.0f);
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = m * v[j] + (p.grad[j] + wd * p.value[j]);
      p.value[j] -= rate * v[j];
    }
  }
}

std::string metrics_header() {
  return "step,L_pbce_weak,L_linear_s,L_lproto,L_ulproto,L_ppd,L_ppc,total,stage,lr";
}

std::string metrics_row(const StepRecord& r) {
  const auto& l = r.loss;
  return std::to_string(r.step) + ',' + num(l.pbce_weak) + ',' + num(l.linear_s) + ',' + num(l.lproto) + ',' +
         num(l.ulproto) + ',' + num(l.ppd) + ',' + num(l.ppc) + ',' + num(l.total) + ',' + std::to_string(r.stage) +
         ',' + num(r.lr);
}

Trainer::Trainer(const TrainConfig& config, const Dataset& data) : config_(config), data_(&data) {
  config_.validate();
  if (data.train.empty()) throw DatasetError("dataset has no training samples");
  const int c = data.manifest.num_classes;
  const int factor = 1 << config_.depth;
  const Size2 size = data.manifest.image_size;
  if (size.height % factor || size.width % factor) {
    throw ConfigError("image size " + std::to_string(size.height) + "x" + std::to_string(size.width) +
                      " is not divisible by 2^model.depth");
  }
  student_ = UNet<float>(config_.backbone(c), config_.seed);
  teacher_ = student_;
  teacher_.release_gradients();
  sgd_ = Sgd(config_.sgd_momentum, config_.weight_decay);
  rng_.seed(config_.seed ^ kRngSalt);
  bank_rng_.seed(config_.seed ^ kBankRngSalt);
}

void Trainer::set_method(Method method) {
  if (stage_ != 1) throw TrainingError("the method can only change during Stage 1");
  const bool from_baseline = config_.method == Method::kBaseline;
  const bool to_baseline = method == Method::kBaseline;
  if (from_baseline != to_baseline && step_in_stage_ > 0) {
    throw TrainingError("baseline and cross-set runs diverge in Stage 1");
  }
  config_.method = method;
}

long Trainer::steps_per_epoch() const {
  const auto n = static_cast<long>(data_->train.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

long Trainer::stage_steps(int stage) const {
  return steps_per_epoch() * (stage == 1 ? config_.stage1_epochs : config_.stage2_epochs);
}

double Trainer::current_lr() const {
  return poly_lr(config_.lr, step_in_stage_, stage_steps(stage_), config_.lr_power);
}

bool Trainer::prototypes_active() const { return stage_ == 2 && config_.method == Method::kFull && banks_ready_; }

std::vector<SampleRecord> Trainer::weak_batch(Rng& rng) {
  const auto idx = sample_indices(data_->train.size(), config_.batch_size, rng);
  std::vector<WeakAugSpec> specs;
  for (std::size_t i = 0; i < idx.size(); ++i) specs.push_back(sample_weak_spec(config_.weak, rng));
  std::vector<SampleRecord> out(idx.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < idx.size(); i += stride) out[i] = weak_augment(data_->train[idx[i]], specs[i]);
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config_.workers), idx.size());
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return out;
}

void Trainer::apply_update(double lr) {
  sgd_.step(student_.parameters(), lr);
  ema_copy(student_, teacher_, config_.teacher_momentum);
}

StepRecord Trainer::baseline_step(const std::vector<SampleRecord>& weak, double lr) {
  const int c = data_->manifest.num_classes;
  std::vector<const ImageGrid*> images;
  for (const auto& r : weak) images.push_back(&r.image);
  const auto& out = student_.forward(stack_images(images), Mode::kTrain);

  std::vector<ForegroundProbMaps> probs;
  std::vector<BinaryTargets> targets;
  for (std::size_t i = 0; i < weak.size(); ++i) {
    probs.push_back(probs_of(out.probs, static_cast<int>(i)));
    targets.push_back(binary_view(weak[i].partial, c));
  }
  std::vector<ForegroundProbMaps> grads;
  const double loss = partial_bce(probs, targets, &grads, ProbGrad::kLogits);
  StepRecord rec;
  rec.loss = total_loss(loss, StrongViewLoss{});
  if (!std::isfinite(rec.loss.total)) abort_non_finite(weak, rec.loss);

  Tensor<float> grad_logits(out.logits.n, out.logits.c, out.logits.h, out.logits.w);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    std::copy(grads[i].probs.begin(), grads[i].probs.end(), grad_logits.sample(static_cast<int>(i)));
  }
  student_.zero_grad();
  student_.backward(grad_logits, nullptr);
  apply_update(lr);
  return rec;
}

StepRecord Trainer::cda_step(const std::vector<SampleRecord>& weak, double lr) {
  const int c = data_->manifest.num_classes;
  const auto b = static_cast<int>(weak.size());
  const auto pseudo = teacher_step(teacher_, weak, config_.tau, config_.conflict);
  std::vector<PseudoSample> mixed_in;
  for (int i = 0; i < b; ++i) {
    const auto u = static_cast<std::size_t>(i);
    mixed_in.push_back(PseudoSample{weak[u].image, pseudo[u], weak[u].partial.classes});
  }
  const auto views = strong_views(mixed_in, config_.views, rng_);

  std::vector<const ImageGrid*> images;
  for (const auto& r : weak) images.push_back(&r.image);
  for (const auto& v : views) {
    for (const auto& s : v.samples) images.push_back(&s.image);
  }
  const auto& out = student_.forward(stack_images(images), Mode::kTrain);
  const bool protos = prototypes_active();

  std::vector<ForegroundProbMaps> weak_probs;
  std::vector<BinaryTargets> weak_targets;
  for (int i = 0; i < b; ++i) {
    weak_probs.push_back(probs_of(out.probs, i));
    weak_targets.push_back(binary_view(weak[static_cast<std::size_t>(i)].partial, c));
  }
  std::vector<ForegroundProbMaps> weak_grads;
  const double weak_loss = partial_bce(weak_probs, weak_targets, &weak_grads, ProbGrad::kLogits);

  std::vector<std::vector<ForegroundProbMaps>> vprobs(views.size());
  std::vector<std::vector<EmbeddingMap>> vemb(views.size());
  std::vector<std::vector<HardLabelMap>> vtargets(views.size());
  std::vector<StrongViewInput> inputs;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (int i = 0; i < b; ++i) {
      const int n = b + static_cast<int>(v) * b + i;
      vprobs[v].push_back(probs_of(out.probs, n));
      if (protos) vemb[v].push_back(embeddings_of(out.embeddings, n));
      vtargets[v].push_back(views[v].samples[static_cast<std::size_t>(i)].pseudo);
    }
  }
  for (std::size_t v = 0; v < views.size(); ++v) inputs.push_back(StrongViewInput{vprobs[v], vemb[v], vtargets[v]});
  std::vector<StrongViewGrads> strong_grads;
  const auto strong = strong_view_loss(inputs, protos ? &labeled_ : nullptr, protos ? &unlabeled_ : nullptr,
                                       config_.loss, &strong_grads, ProbGrad::kLogits);
  StepRecord rec;
  rec.loss = total_loss(weak_loss, strong);
  if (!std::isfinite(rec.loss.total)) abort_non_finite(weak, rec.loss);

  Tensor<float> grad_logits(out.logits.n, out.logits.c, out.logits.h, out.logits.w);
  for (int i = 0; i < b; ++i) {
    const auto& g = weak_grads[static_cast<std::size_t>(i)].probs;
    std::copy(g.begin(), g.end(), grad_logits.sample(i));
  }
  Tensor<float> grad_emb;
  if (protos) grad_emb.resize(out.embeddings.n, out.embeddings.c, out.embeddings.h, out.embeddings.w);
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (int i = 0; i < b; ++i) {
      const int n = b + static_cast<int>(v) * b + i;
      const auto& g = strong_grads[v].probs[static_cast<std::size_t>(i)].probs;
      std::copy(g.begin(), g.end(), grad_logits.sample(n));
      if (protos && !strong_grads[v].embeddings.empty()) {
        const auto& e = strong_grads[v].embeddings[static_cast<std::size_t>(i)].values;
        std::copy(e.begin(), e.end(), grad_emb.sample(n));
      }
    }
  }
  student_.zero_grad();
  student_.backward(grad_logits, protos ? &grad_emb : nullptr);
  sgd_.step(student_.parameters(), lr);
  if (stage_ == 2 && config_.method == Method::kFull) update_banks(views, out.embeddings, b);
  ema_copy(student_, teacher_, config_.teacher_momentum);
  return rec;
}

void Trainer::update_banks(const std::vector<MixedBatch>& views, const Tensor<float>& embeddings, int offset) {
  std::vector<EmbeddingMap> emb;
  std::vector<BankLabels> lab, unl;
  const auto b = static_cast<int>(views.front().samples.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (int i = 0; i < b; ++i) {
      const auto& s = views[v].samples[static_cast<std::size_t>(i)];
      emb.push_back(embeddings_of(embeddings, offset + static_cast<int>(v) * b + i));
      lab.push_back(build_labeled_bank_inputs(s.partial, s.pseudo));
      unl.push_back(build_unlabeled_bank_inputs(s.partial, s.pseudo));
    }
  }
  update_bank(labeled_, emb, lab, bank_rng_);
  update_bank(unlabeled_, emb, unl, bank_rng_);
  copy_background(unlabeled_, labeled_);
}

void Trainer::warmup_banks() {
  if (config_.method != Method::kFull) return;
  const long planned = config_.warmup_epochs * steps_per_epoch();
  // Keep going (for at most one more epoch) until every slot is seeded.
  const long cap = planned + steps_per_epoch();
  // Warm-up draws from the bank stream and leaves BN running statistics as
  // they were, so it never perturbs the training trajectory itself.
  std::vector<std::vector<float>> buffers;
  for (const auto& p : student_.parameters()) {
    if (!p.trainable) buffers.push_back(p.value);
  }
  auto seeded = [this] { return labeled_.fully_initialized() && unlabeled_.fully_initialized(); };
  for (long s = 0; s < cap && (s < planned || !seeded()); ++s) {
    const auto weak = weak_batch(bank_rng_);
    const auto pseudo = teacher_step(teacher_, weak, config_.tau, config_.conflict);
    std::vector<PseudoSample> mixed_in;
    for (std::size_t i = 0; i < weak.size(); ++i) {
      mixed_in.push_back(PseudoSample{weak[i].image, pseudo[i], weak[i].partial.classes});
    }
    const auto views = strong_views(mixed_in, config_.views, bank_rng_);
    std::vector<const ImageGrid*> images;
    for (const auto& v : views) {
      for (const auto& x : v.samples) images.push_back(&x.image);
    }
    const auto& out = student_.forward(stack_images(images), Mode::kTrain);
    update_banks(views, out.embeddings, 0);
  }
  auto saved = buffers.begin();
  for (auto& p : student_.parameters()) {
    if (!p.trainable) p.value = std::move(*saved++);
  }
  // A class the teacher never predicts on unlabeled pixels leaves its slots
  // empty; the prototype losses skip those, so they start regardless.
  banks_ready_ = true;
}

void Trainer::begin_stage2() {
  if (stage_ != 1) throw TrainingError("already in Stage 2");
  stage_ = 2;
  step_in_stage_ = 0;
  ema_copy(student_, teacher_, 0.0);
  sgd_.reset();
  if (config_.method == Method::kFull) {
    const int c = data_->manifest.num_classes;
    labeled_ = PrototypeBank(c, config_.proto_k, config_.embed_dim, config_.proto_momentum);
    unlabeled_ = PrototypeBank(c, config_.proto_k, config_.embed_dim, config_.proto_momentum);
    banks_ready_ = false;
    warmup_banks();
  }
}

StepRecord Trainer::step() {
  if (stage_done()) throw TrainingError("stage " + std::to_string(stage_) + " is already complete");
  const double lr = current_lr();
  const auto weak = weak_batch(rng_);
  StepRecord rec = config_.method == Method::kBaseline ? baseline_step(weak, lr) : cda_step(weak, lr);
  rec.step = global_step_;
  rec.stage = stage_;
  rec.lr = lr;
  ++step_in_stage_;
  ++global_step_;
  return rec;
}

void Trainer::abort_non_finite(const std::vector<SampleRecord>& weak, const LossBreakdown& loss) {
  std::ostringstream msg;
  msg << "non-finite loss at step " << global_step_ << " (stage " << stage_ << "): pbce_weak=" << loss.pbce_weak
      << " linear_s=" << loss.linear_s << " lproto=" << loss.lproto << " ulproto=" << loss.ulproto;
  if (!dump_dir_.empty()) {
    std::filesystem::create_directories(dump_dir_);
    nlohmann::json info = {{"step", global_step_},
                           {"stage", stage_},
                           {"pbce_weak", num(loss.pbce_weak)},
                           {"linear_s", num(loss.linear_s)},
                           {"lproto", num(loss.lproto)},
                           {"ulproto", num(loss.ulproto)},
                           {"samples", weak.size()}};
    for (std::size_t i = 0; i < weak.size(); ++i) {
      const auto stem = dump_dir_ / ("batch" + std::to_string(i));
      write_f32(stem.string() + ".image.f32", weak[i].image.values());
      write_i16(stem.string() + ".partial.i16", weak[i].partial.classes.values());
    }
    std::ofstream(dump_dir_ / "info.json") << info.dump(2) << '\n';
    msg << "; batch dumped to " << dump_dir_.string();
  }
  throw TrainingError(msg.str());
}

Archive Trainer::to_archive() const {
  Archive a;
  a.meta["format"] = "ltuda-checkpoint";
  a.meta["config"] = to_json(config_);
  a.meta["num_classes"] = data_->manifest.num_classes;
  a.meta["stage"] = stage_;
  a.meta["step_in_stage"] = step_in_stage_;
  a.meta["global_step"] = global_step_;
  a.meta["banks_ready"] = banks_ready_;
  a.meta["rng"] = rng_state(rng_);
  a.meta["bank_rng"] = rng_state(bank_rng_);
  store_net(a, "student", student_);
  store_net(a, "teacher", teacher_);
  const auto& params = student_.parameters();
  const auto& vel = sgd_.velocity();
  for (std::size_t i = 0; i < vel.size(); ++i) {
    if (!vel[i].empty()) a.f32["sgd/" + params[i].name] = vel[i];
  }
  a.meta["has_banks"] = labeled_.num_classes > 0;
  if (labeled_.num_classes > 0) {
    store_bank(a, "bank_labeled", labeled_);
    store_bank(a, "bank_unlabeled", unlabeled_);
  }
  return a;
}

void Trainer::save(const std::filesystem::path& path) const { save_archive(to_archive(), path); }

void Trainer::restore(const Archive& a) {
  if (a.meta.value("format", "") != "ltuda-checkpoint") throw CheckpointError("archive is not a training checkpoint");
  if (a.meta.at("num_classes").get<int>() != data_->manifest.num_classes) {
    throw CheckpointError("checkpoint class count differs from the dataset");
  }
  TrainConfig config = parse_config(a.meta.at("config"));
  Trainer fresh(config, *data_);
  *this = std::move(fresh);
  restore_net(a, "student", student_);
  restore_net(a, "teacher", teacher_);
  auto& params = student_.parameters();
  auto& vel = sgd_.velocity();
  vel.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = a.f32.find("sgd/" + params[i].name);
    if (it != a.f32.end()) vel[i] = it->second;
  }
  if (a.meta.value("has_banks", false)) {
    labeled_ = restore_bank(a, "bank_labeled");
    unlabeled_ = restore_bank(a, "bank_unlabeled");
  }
  stage_ = a.meta.at("stage").get<int>();
  step_in_stage_ = a.meta.at("step_in_stage").get<long>();
  global_step_ = a.meta.at("global_step").get<long>();
  banks_ready_ = a.meta.at("banks_ready").get<bool>();
  std::istringstream in(a.meta.at("rng").get<std::string>());
  in >> rng_;
  std::istringstream bank_in(a.meta.at("bank_rng").get<std::string>());
  bank_in >> bank_rng_;
  if (!in || !bank_in) throw CheckpointError("corrupt rng state in checkpoint");
}

void Trainer::load(const std::filesystem::path& path) {
  const auto dump = dump_dir_;
  restore(load_archive(path));
  dump_dir_ = dump;
}

namespace {

// Rewrites metrics.csv keeping only rows before `step` (resume) or just the header.
void reset_metrics(const std::filesystem::path& path, long keep_before) {
  std::vector<std::string> keep;
  if (keep_before > 0) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      if (std::stol(line.substr(0, comma)) < keep_before) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << metrics_header() << '\n';
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

std::filesystem::path run_training(const TrainConfig& config, const Dataset& data, const RunOptions& options) {
  if (options.stages < 0 || options.stages > 2) throw ConfigError("stage must be 1, 2 or both");
  std::filesystem::create_directories(options.out_dir);
  Trainer trainer(config, data);
  trainer.set_dump_dir(options.out_dir / "nan_dump");
  if (!options.resume.empty()) trainer.load(options.resume);
  if (options.stages == 2 && options.resume.empty()) {
    throw ConfigError("--stage 2 needs a Stage-1 checkpoint to resume from");
  }
  save_config(trainer.config(), options.out_dir / "config.json");
  const auto metrics_path = options.out_dir / "metrics.csv";
  reset_metrics(metrics_path, trainer.global_step());
  std::ofstream metrics(metrics_path, std::ios::app);

  std::filesystem::path last;
  auto run_stage = [&](int stage) {
    while (!trainer.stage_done()) {
      const auto rec = trainer.step();
      metrics << metrics_row(rec) << '\n';
      metrics.flush();
      if (options.on_step) options.on_step(rec);
      const int every = trainer.config().checkpoint_every;
      if (every > 0 && trainer.step_in_stage() % every == 0 && !trainer.stage_done()) {
        last = options.out_dir / ("ckpt_step" + std::to_string(trainer.global_step()) + ".bin");
        trainer.save(last);
      }
    }
    last = options.out_dir / ("ckpt_stage" + std::to_string(stage) + ".bin");
    trainer.save(last);
  };

  if (options.stages != 2 && trainer.stage() == 1) run_stage(1);
  if (options.stages != 1) {
    if (trainer.stage() == 1) {
      if (!trainer.stage_done()) run_stage(1);
      trainer.begin_stage2();
    }
    run_stage(2);
  }
  return last;
}

UNet<float> load_student(const std::filesystem::path& ckpt, TrainConfig* config) {
  const Archive a = load_archive(ckpt);
  if (a.meta.value("format", "") != "ltuda-checkpoint") throw CheckpointError("archive is not a training checkpoint");
  const TrainConfig cfg = parse_config(a.meta.at("config"));
  UNet<float> net(cfg.backbone(a.meta.at("num_classes").get<int>()), 0);
  restore_net(a, "student", net);
  net.release_gradients();
  if (config) *config = cfg;
  return net;
}

MetricReport evaluate_run(const std::filesystem::path& ckpt, const Dataset& data, std::optional<double> tau) {
  TrainConfig cfg;
  auto net = load_student(ckpt, &cfg);
  if (net.config().num_classes != data.manifest.num_classes) {
    throw CheckpointError("checkpoint class count differs from the dataset");
  }
  if (data.test.empty()) throw DatasetError("dataset has no fully-labelled test samples");
  return evaluate_model(net, data.test, tau.value_or(cfg.tau));
}

std::string AblationReport::to_csv() const {
  std::ostringstream s;
  if (rows.empty()) return s.str();
  const int c = static_cast<int>(rows.front().report.rows.size()) - 1;
  s << "method";
  for (int k = 1; k <= c; ++k) s << ",dice_" << k;
  for (int k = 1; k <= c; ++k) s << ",hd_" << k;
  s << ",mean_dice,mean_hd,variance_ratio,seconds\n";
  for (const auto& r : rows) {
    s << to_string(r.method);
    for (int k = 0; k < c; ++k) s << ',' << num(r.report.rows[static_cast<std::size_t>(k)].dice);
    for (int k = 0; k < c; ++k) s << ',' << num(r.report.rows[static_cast<std::size_t>(k)].hd);
    s << ',' << num(r.report.mean().dice) << ',' << num(r.report.mean().hd) << ',' << num(r.variance.ratio) << ','
      << num(r.seconds) << '\n';
  }
  return s.str();
}

AblationReport run_ablation(const TrainConfig& config, const Dataset& data,
                            const std::function<void(const std::string&)>& log) {
  using Clock = std::chrono::steady_clock;
  if (data.test.empty()) throw DatasetError("ablation needs fully-labelled test samples");
  auto seconds_since = [](Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); };
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  auto finish = [&](Trainer& t, Method method, double seconds) {
    AblationRow row;
    row.method = method;
    row.report = evaluate_model(t.student(), data.test, config.tau);
    row.variance = evaluate_variance(t.student(), data.test);
    row.seconds = seconds;
    note(to_string(method) + ": mean dice " + num(row.report.mean().dice) + ", variance ratio " +
         num(row.variance.ratio) + ", " + num(seconds) + " s");
    return row;
  };
  auto run_stage = [](Trainer& t) {
    while (!t.stage_done()) t.step();
  };

  AblationReport report;
  {
    TrainConfig cfg = config;
    cfg.method = Method::kBaseline;
    const auto start = Clock::now();
    Trainer t(cfg, data);
    run_stage(t);
    t.begin_stage2();
    run_stage(t);
    report.rows.push_back(finish(t, Method::kBaseline, seconds_since(start)));
  }

  TrainConfig cfg = config;
  cfg.method = Method::kCda;
  auto start = Clock::now();
  Trainer shared(cfg, data);
  run_stage(shared);
  const double stage1_seconds = seconds_since(start);

  Trainer full = shared;
  full.set_method(Method::kFull);

  start = Clock::now();
  shared.begin_stage2();
  run_stage(shared);
  report.rows.push_back(finish(shared, Method::kCda, stage1_seconds + seconds_since(start)));

  start = Clock::now();
  full.begin_stage2();
  run_stage(full);
  report.rows.push_back(finish(full, Method::kFull, stage1_seconds + seconds_since(start)));
  return report;
}

}  // namespace ltuda
