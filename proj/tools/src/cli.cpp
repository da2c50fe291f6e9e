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

#include "ltuda/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltuda/checkpoint.hpp"
#include "ltuda/trainer.hpp"

namespace ltuda {

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct TrainArgs {
  std::string config, data, out, stage = "both", resume;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

std::optional<int> env_workers() {
  const char* raw = std::getenv("LTUDA_NUM_WORKERS");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 256) throw UsageError("LTUDA_NUM_WORKERS must be an integer in [1,256]");
  return static_cast<int>(v);
}

TrainConfig resolve_config(const std::string& path, std::vector<std::string> sets, std::optional<std::uint64_t> seed) {
  // Precedence: file < environment < --set < --seed.
  if (const auto w = env_workers()) sets.insert(sets.begin(), "train.workers=" + std::to_string(*w));
  if (seed) sets.push_back("seed=" + std::to_string(*seed));
  return load_config_or_default(path, sets);
}

void add_config_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file (defaults when omitted)");
  cmd->add_option("--data", a.data, "dataset directory or manifest")->required();
  cmd->add_option("--out", a.out, "output directory")->required();
  cmd->add_option("--set", a.sets, "dotted.key=value override (repeatable)");
  cmd->add_option("--seed", a.seed, "seed for every random stream");
  cmd->add_flag("--quiet", a.quiet, "no progress output");
}

int cmd_gen_data(const std::string& out_dir, const SyntheticOptions& options, std::ostream& out) {
  const auto manifest = generate_synthetic(options, out_dir);
  out << "wrote " << manifest.train_size() << " training and " << manifest.test_samples.size()
      << " test images to " << out_dir << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(a.config, a.sets, a.seed);
  RunOptions options;
  options.out_dir = a.out;
  options.resume = a.resume;
  if (a.stage == "1") {
    options.stages = 1;
  } else if (a.stage == "2") {
    options.stages = 2;
  } else if (a.stage == "both") {
    options.stages = 0;
  } else {
    throw UsageError("--stage must be 1, 2 or both");
  }
  const Dataset data = load_dataset(a.data);
  if (!a.quiet) {
    options.on_step = [&out](const StepRecord& r) {
      if (r.step % 20 == 0) {
        out << "step " << r.step << " stage " << r.stage << " lr " << r.lr << " loss " << r.loss.total << '\n';
      }
    };
  }
  const auto ckpt = run_training(config, data, options);
  out << "checkpoint " << ckpt.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(a.config, a.sets, a.seed);
  const Dataset data = load_dataset(a.data);
  std::filesystem::create_directories(a.out);
  save_config(config, std::filesystem::path(a.out) / "config.json");
  std::function<void(const std::string&)> log;
  if (!a.quiet) log = [&out](const std::string& m) { out << m << '\n'; };
  const auto report = run_ablation(config, data, log);
  const auto csv = std::filesystem::path(a.out) / "ablation.csv";
  std::ofstream(csv) << report.to_csv();
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : report.rows) {
    doc.push_back({{"method", to_string(r.method)},
                   {"report", r.report.to_json()},
                   {"variance_ratio", r.variance.ratio},
                   {"seconds", r.seconds}});
  }
  std::ofstream(std::filesystem::path(a.out) / "ablation.json") << doc.dump(2) << '\n';
  out << report.to_csv();
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report_path,
             std::optional<double> tau, std::ostream& out) {
  if (tau && !(*tau > 0.0 && *tau <= 1.0)) throw UsageError("--tau must lie in (0,1]");
  const Dataset data = load_dataset(data_dir);
  const auto report = evaluate_run(ckpt, data, tau);
  report.write(report_path);
  out << report.to_csv();
  return kExitOk;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& out_dir,
                std::optional<double> tau, std::ostream& out) {
  if (tau && !(*tau > 0.0 && *tau <= 1.0)) throw UsageError("--tau must lie in (0,1]");
  TrainConfig cfg;
  auto net = load_student(ckpt, &cfg);
  const Dataset data = load_dataset(input);
  if (net.config().num_classes != data.manifest.num_classes) {
    throw CheckpointError("checkpoint class count differs from the dataset");
  }
  const auto& samples = data.test.empty() ? data.train : data.test;
  const auto preds = predict(net, samples, tau.value_or(cfg.tau));
  std::filesystem::create_directories(out_dir);
  nlohmann::json index = {{"image_size", {data.manifest.image_size.height, data.manifest.image_size.width}},
                          {"num_classes", data.manifest.num_classes},
                          {"split", data.test.empty() ? "train" : "test"},
                          {"predictions", nlohmann::json::array()}};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << ".pred.i16";
    write_i16(std::filesystem::path(out_dir) / name.str(), preds[i].classes.values());
    index["predictions"].push_back(name.str());
  }
  std::ofstream(std::filesystem::path(out_dir) / "predictions.json") << index.dump(2) << '\n';
  out << "wrote " << preds.size() << " label maps to " << out_dir << '\n';
  return kExitOk;
}

void bank_csv(std::ostream& csv, const std::string& name, const PrototypeBank& bank) {
  const std::size_t slots = bank.initialized.size();
  for (std::size_t s = 0; s < slots; ++s) {
    const int cls = static_cast<int>(s) / bank.per_class;
    const int k = static_cast<int>(s) % bank.per_class;
    const auto p = bank.proto(cls, k);
    double n2 = 0.0;
    for (double v : p) n2 += v * v;
    csv << name << ',' << cls << ',' << k << ',' << int(bank.initialized[s]) << ',' << std::sqrt(n2);
    for (std::size_t t = 0; t < slots; ++t) {
      const auto q = bank.proto(static_cast<int>(t) / bank.per_class, static_cast<int>(t) % bank.per_class);
      double dot = 0.0, q2 = 0.0;
      for (std::size_t d = 0; d < p.size(); ++d) {
        dot += p[d] * q[d];
        q2 += q[d] * q[d];
      }
      const double denom = std::sqrt(n2 * q2);
      csv << ',' << (denom > 0 ? dot / denom : 0.0);
    }
    csv << '\n';
  }
}

int cmd_inspect(const std::string& ckpt, const std::string& out_path, std::ostream& out) {
  const Archive a = load_archive(ckpt);
  if (!a.meta.value("has_banks", false)) throw CheckpointError("checkpoint holds no prototype banks: " + ckpt);
  PrototypeBank banks[2];
  const char* names[2] = {"labeled", "unlabeled"};
  for (int b = 0; b < 2; ++b) {
    const std::string prefix = std::string("bank_") + names[b];
    const auto& m = a.meta.at(prefix);
    banks[b] = PrototypeBank(m.at("num_classes").get<int>() - 1, m.at("per_class").get<int>(),
                             m.at("dim").get<int>(), m.at("momentum").get<double>());
    banks[b].protos = a.f64.at(prefix + "/protos");
    banks[b].initialized = a.u8.at(prefix + "/initialized");
  }
  std::ostringstream csv;
  csv << "bank,class,k,initialized,norm";
  for (int c = 0; c < banks[0].num_classes; ++c) {
    for (int k = 0; k < banks[0].per_class; ++k) csv << ",cos_" << c << '_' << k;
  }
  csv << '\n';
  for (int b = 0; b < 2; ++b) bank_csv(csv, names[b], banks[b]);
  if (out_path.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw Error("cannot write " + out_path);
    f << csv.str();
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partially-supervised multi-organ segmentation with labeled-to-unlabeled distribution alignment",
               "ltuda"};
  app.require_subcommand(1);

  std::string gen_out;
  SyntheticOptions gen;
  int gen_size = 64;
  auto* gen_cmd = app.add_subcommand("gen-data", "write the synthetic partially-labelled benchmark");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--classes", gen.num_classes, "number of foreground classes")->check(CLI::Range(2, 32));
  gen_cmd->add_option("--per-subset", gen.per_subset, "images per partially-labelled subset")->check(CLI::Range(1, 100000));
  gen_cmd->add_option("--size", gen_size, "image height and width")->check(CLI::Range(32, 4096));
  gen_cmd->add_option("--test-count", gen.test_count, "fully-labelled held-out images")->check(CLI::Range(0, 100000));
  gen_cmd->add_option("--seed", gen.seed, "generator seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run Stage 1, Stage 2, or both");
  add_config_options(train_cmd, train);
  train_cmd->add_option("--stage", train.stage, "1, 2 or both");
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");

  TrainArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "train baseline, +CDA and full method and compare");
  add_config_options(ablate_cmd, ablate);

  std::string eval_ckpt, eval_data, eval_out;
  std::optional<double> eval_tau;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the fully-labelled test split");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory or manifest")->required();
  eval_cmd->add_option("--out", eval_out, "report.json path (a .csv sibling is written too)")->required();
  eval_cmd->add_option("--tau", eval_tau, "threshold (defaults to the checkpoint's)");

  std::string pred_ckpt, pred_in, pred_out;
  std::optional<double> pred_tau;
  auto* pred_cmd = app.add_subcommand("predict", "write label maps for a dataset's images");
  pred_cmd->add_option("--ckpt", pred_ckpt, "checkpoint file")->required();
  pred_cmd->add_option("--input", pred_in, "dataset directory or manifest")->required();
  pred_cmd->add_option("--out", pred_out, "output directory")->required();
  pred_cmd->add_option("--tau", pred_tau, "threshold (defaults to the checkpoint's)");

  std::string insp_ckpt, insp_out;
  auto* insp_cmd = app.add_subcommand("inspect-protos", "dump prototype norms and cosine similarities as CSV");
  insp_cmd->add_option("--ckpt", insp_ckpt, "Stage-2 checkpoint")->required();
  insp_cmd->add_option("--out", insp_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kExitOk;
    }
    err << "ltuda: " << e.what() << '\n';
    if (dynamic_cast<const CLI::ExtrasError*>(&e)) err << "run 'ltuda --help' for the list of subcommands\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.size = Size2{gen_size, gen_size};
      return cmd_gen_data(gen_out, gen, out);
    }
    if (*train_cmd) return cmd_train(train, out);
    if (*ablate_cmd) return cmd_ablate(ablate, out);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_tau, out);
    if (*pred_cmd) return cmd_predict(pred_ckpt, pred_in, pred_out, pred_tau, out);
    if (*insp_cmd) return cmd_inspect(insp_ckpt, insp_out, out);
  } catch (const UsageError& e) {
    err << "ltuda: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "ltuda: invalid configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "ltuda: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ltuda
