/*
 * Copyright 2026 The dbvqa Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dbvqa/dataset_io.hpp"
#include "dbvqa/errors.hpp"
#include "dbvqa/evaluator.hpp"
#include "dbvqa/kvconfig.hpp"
#include "dbvqa/manifest.hpp"
#include "dbvqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace dbvqa;
using ordered_json = nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void verify_dir_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  if (!fs::exists(path)) return;
  verify_manifest_artifacts(read_manifest(path.string()), path.string());
}

DatasetSplit load_split_from_dir(const std::string& dir, const std::string& stem) {
  return read_split((fs::path(dir) / (stem + ".jsonl")).string(),
                    (fs::path(dir) / (stem + ".header.json")).string());
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  int n_train = 4000;
  int n_test = 2000;
  double rho = 0.9;
  uint64_t seed = 0;
  bool verify = false;
};

int run_generate(const GenerateArgs& args) {
  Stopwatch watch;
  fs::create_directories(args.out);

  const uint64_t test_seed = mix64(args.seed, 0x7e57ul);
  std::cerr << "generating " << args.n_train << " biased training samples (rho=" << args.rho
            << ") and " << args.n_test << " balanced test samples\n";
  const DatasetSplit train_split =
      generate_split(args.n_train, SplitKind::train_biased, args.rho, args.seed);
  const DatasetSplit test_split =
      generate_split(args.n_test, SplitKind::test_balanced, args.rho, test_seed);

  const fs::path out(args.out);
  write_split(train_split, (out / "train.jsonl").string(), (out / "train.header.json").string());
  write_split(test_split, (out / "test.jsonl").string(), (out / "test.header.json").string());

  if (args.verify) {
    for (const auto* split : {&train_split, &test_split}) {
      const SplitCheck check = check_split(*split);
      if (!check.ok) {
        for (const std::string& f : check.failures) std::cerr << "verify: " << f << "\n";
        throw Error("generated split failed verification");
      }
    }
    std::cerr << "verify: bias/balance bands and image recount hold\n";
  }

  RunManifest manifest;
  manifest.command = "generate";
  manifest.config = {{"n_train", args.n_train},
                     {"n_test", args.n_test},
                     {"rho", args.rho},
                     {"seed", args.seed}};
  manifest.seeds = {{"data", args.seed}};
  for (const char* name : {"train.jsonl", "train.header.json", "test.jsonl", "test.header.json"})
    manifest.artifact_sha256[name] = sha256_file((out / name).string());
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, (out / "manifest.json").string());
  std::cerr << "wrote " << (out / "manifest.json").string() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_file;
  std::string profile = "desk";
  std::string mode;
  uint64_t seed = 0;
  bool seed_given = false;
};

int run_train(const TrainArgs& args) {
  Stopwatch watch;
  verify_dir_manifest(args.data);
  const DatasetSplit data = load_split_from_dir(args.data, "train");

  TrainConfig config =
      args.profile == "paper" ? TrainConfig::paper_profile() : TrainConfig::desk_profile();
  if (!args.config_file.empty())
    config = apply_train_config(config, parse_kv_file(args.config_file));
  if (!args.mode.empty()) config.mode = train_mode_from_name(args.mode);
  if (args.seed_given) config.seed = args.seed;

  const ModelConfig model_config = ModelConfig::desk_default();

  const fs::path parent = fs::path(args.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const std::string log_path = args.out + ".trainlog.jsonl";
  std::ofstream log_out(log_path, std::ios::trunc);
  if (!log_out) throw Error("cannot open train log: " + log_path);

  const TrainResult result =
      train(model_config, config, data, [&log_out](const EpochRecord& rec) {
        ordered_json j = {{"epoch", rec.epoch},   {"l1", rec.l1},     {"l_adv", rec.l_adv},
                          {"l2", rec.l2},         {"total", rec.total}, {"acc1", rec.acc1},
                          {"acc2", rec.acc2}};
        log_out << j.dump() << "\n";
        log_out.flush();
        std::cerr << "epoch " << rec.epoch << ": total=" << rec.total << " acc1=" << rec.acc1
                  << "\n";
      });
  log_out.close();
  save_checkpoint(result.params, args.out);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = {{"profile", args.profile},
                     {"epochs", config.epochs},
                     {"batch_size", config.batch_size},
                     {"learning_rate", config.learning_rate},
                     {"adam_beta1", config.adam_beta1},
                     {"adam_beta2", config.adam_beta2},
                     {"adam_eps", config.adam_eps},
                     {"lambda", config.effective_lambda()},
                     {"beta", config.effective_beta()},
                     {"alpha", config.alpha},
                     {"mode", train_mode_name(config.mode)},
                     {"kl_stop_grad_s1", config.kl_stop_grad_s1},
                     {"dataset_id", data.dataset_id()}};
  manifest.seeds = {{"train", config.seed}};
  manifest.inputs = {args.data};
  manifest.artifact_sha256[fs::path(args.out).filename().string()] = sha256_file(args.out);
  manifest.artifact_sha256[fs::path(log_path).filename().string()] = sha256_file(log_path);
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, args.out + ".manifest.json");
  std::cerr << "wrote " << args.out << " after " << manifest.wall_clock_sec << "s\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string report;
  uint64_t shuffle_seed = 0;
  bool verify = false;
};

int run_evaluate(const EvaluateArgs& args) {
  Stopwatch watch;
  verify_dir_manifest(args.data);
  const DatasetSplit data = load_split_from_dir(args.data, "test");
  const ModelParams params = load_checkpoint(args.checkpoint);
  const ModelConfig config = config_from_params(params);
  const std::string checkpoint_id = sha256_file(args.checkpoint);

  const MetricsReport report = evaluate_model(ModelPredictor(config, params), data,
                                              args.shuffle_seed, checkpoint_id);

  if (args.verify) {
    auto check_row = [](const char* label, const MetricsRow& row) {
      bool degenerate = false;
      const double expect = f_m_metric(row.f_a, row.f_q, &degenerate);
      if (std::abs(expect - row.f_m) > 1e-12 || degenerate != row.degenerate)
        throw Error(std::string("report row '") + label + "' violates the metric identity");
      if (!degenerate) {
        const double drop = row.f_a - row.f_q;
        const double harmonic = 2.0 * row.f_a * drop / (row.f_a + drop);
        if (std::abs(harmonic - row.f_m) > 1e-12)
          throw Error(std::string("report row '") + label + "' violates the harmonic identity");
      }
    };
    for (int t = 0; t < kQuestionTypeCount; ++t)
      check_row(question_type_name(static_cast<QuestionType>(t)),
                report.per_type[static_cast<size_t>(t)]);
    check_row("average", report.average);
    check_row("overall", report.overall);
    std::cerr << "verify: metric identities hold on every row\n";
  }

  const fs::path parent = fs::path(args.report).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_report_json(report, args.report);
  const std::string text = render_report_text(report);
  write_text_file_atomic(args.report + ".txt", text);
  std::cout << text;

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config = {{"shuffle_seed", args.shuffle_seed},
                     {"dataset_id", report.dataset_id},
                     {"checkpoint_id", checkpoint_id}};
  manifest.seeds = {{"shuffle", args.shuffle_seed}};
  manifest.inputs = {args.checkpoint, args.data};
  manifest.artifact_sha256[fs::path(args.report).filename().string()] =
      sha256_file(args.report);
  manifest.artifact_sha256[fs::path(args.report + ".txt").filename().string()] =
      sha256_file(args.report + ".txt");
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, args.report + ".manifest.json");
  return 0;
}

// ---- compare ----------------------------------------------------------------

struct CompareArgs {
  std::string a;
  std::string b;
  std::string out;
};

int run_compare(const CompareArgs& args) {
  Stopwatch watch;
  const MetricsReport ra = read_report_json(args.a);
  const MetricsReport rb = read_report_json(args.b);
  const RunComparison cmp = compare_runs(ra, rb);

  const fs::path parent = fs::path(args.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_comparison_json(cmp, args.out);
  const std::string text = render_comparison_text(cmp, "a", "b");
  write_text_file_atomic(args.out + ".txt", text);
  std::cout << text;

  RunManifest manifest;
  manifest.command = "compare";
  manifest.config = {{"a", args.a}, {"b", args.b}, {"dataset_id", cmp.dataset_id}};
  manifest.inputs = {args.a, args.b};
  manifest.artifact_sha256[fs::path(args.out).filename().string()] = sha256_file(args.out);
  manifest.artifact_sha256[fs::path(args.out + ".txt").filename().string()] =
      sha256_file(args.out + ".txt");
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, args.out + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dbvqa: bias-controlled synthetic VQA training and evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* c_gen =
      app.add_subcommand("generate", "generate a biased train / balanced test dataset");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--n-train", gen.n_train, "training samples")->check(CLI::PositiveNumber);
  c_gen->add_option("--n-test", gen.n_test, "test samples")->check(CLI::PositiveNumber);
  c_gen->add_option("--rho", gen.rho, "bias strength in [0.5, 1.0]")
      ->check(CLI::Range(0.5, 1.0));
  c_gen->add_option("--seed", gen.seed, "data seed");
  c_gen->add_flag("--verify", gen.verify, "re-check bias bands and answers after writing");

  TrainArgs tr;
  CLI::App* c_train = app.add_subcommand("train", "train a model on a generated dataset");
  c_train->add_option("--data", tr.data, "dataset directory")->required();
  c_train->add_option("--out", tr.out, "checkpoint output path")->required();
  c_train->add_option("--config", tr.config_file, "key = value config file");
  c_train->add_option("--profile", tr.profile, "hyperparameter profile")
      ->check(CLI::IsMember({"desk", "paper"}));
  c_train->add_option("--mode", tr.mode, "training mode")
      ->check(CLI::IsMember({"baseline", "debiased"}));
  CLI::Option* seed_opt = c_train->add_option("--seed", tr.seed, "training seed");
  c_train->callback([&tr, seed_opt] { tr.seed_given = seed_opt->count() > 0; });

  EvaluateArgs ev;
  CLI::App* c_eval = app.add_subcommand("evaluate", "run both evaluation protocols");
  c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  c_eval->add_option("--data", ev.data, "dataset directory")->required();
  c_eval->add_option("--shuffle-seed", ev.shuffle_seed, "random-image assignment seed");
  c_eval->add_option("--report", ev.report, "report JSON output path")->required();
  c_eval->add_flag("--verify", ev.verify, "check metric identities on the produced report");

  CompareArgs cp;
  CLI::App* c_cmp = app.add_subcommand("compare", "compare two metric reports");
  c_cmp->add_option("--a", cp.a, "first report")->required();
  c_cmp->add_option("--b", cp.b, "second report")->required();
  c_cmp->add_option("--out", cp.out, "comparison JSON output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) return run_generate(gen);
    if (*c_train) return run_train(tr);
    if (*c_eval) return run_evaluate(ev);
    if (*c_cmp) return run_compare(cp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
