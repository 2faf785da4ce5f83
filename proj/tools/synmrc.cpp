// Command-line front end: one subcommand per pipeline stage plus the
// experiment suites.
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "synmrc/config.hpp"
#include "synmrc/distillation.hpp"
#include "synmrc/evaluation.hpp"
#include "synmrc/generator.hpp"
#include "synmrc/harness.hpp"
#include "synmrc/reader.hpp"
#include "synmrc/report.hpp"
#include "synmrc/selection.hpp"
#include "synmrc/training.hpp"
#include "synmrc/world.hpp"

using namespace synmrc;
namespace fs = std::filesystem;

namespace {

World load_world(const fs::path& path) { return world_from_json(read_file(resolve(path))); }

std::shared_ptr<const Vocabulary> vocabulary_of(const World& world) {
  return std::make_shared<const Vocabulary>(world.make_vocabulary());
}

nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  return {{"split", m.split},
          {"overall_f1", m.overall_f1},
          {"answerable_f1", m.answerable_f1},
          {"unanswerable_accuracy", m.unanswerable_accuracy},
          {"threshold", std::isinf(m.threshold) ? nlohmann::ordered_json(m.threshold > 0 ? "+inf" : "-inf")
                                                : nlohmann::ordered_json(m.threshold)},
          {"n_examples", m.n_examples}};
}

void print_verdicts(const ComparisonReport& report) {
  for (const auto& v : report.verdicts) {
    std::printf("%-40s %-5s %+.4f (pooled std %.4f) %s vs %s\n", v.name.c_str(), v.split.c_str(), v.mean_difference,
                v.pooled_std, v.lhs.c_str(), v.rhs.c_str());
  }
  for (const auto& n : report.notes) std::printf("note: %s\n", n.c_str());
}

struct ScheduleFlags {
  int epochs = 20;
  int batch = 32;
  double lr = 0.05;
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs")->capture_default_str();
    app->add_option("--batch-size", batch, "mini-batch size")->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--seed", seed, "seed for initialization and shuffling")->capture_default_str();
  }
  TrainSchedule schedule() const { return {epochs, batch, lr, ShuffleMode::random, derive_seed(seed, "schedule")}; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic pre-training and distillation for extractive reading comprehension"};
  app.require_subcommand(1);

  // world
  auto* world_cmd = app.add_subcommand("world", "build a world and its gold dataset");
  std::optional<std::string> world_config;
  std::vector<std::string> world_sets;
  std::string world_out = "world";
  world_cmd->add_option("--config", world_config, "key = value config file");
  world_cmd->add_option("--set", world_sets, "override a config key (key=value)");
  world_cmd->add_option("--out", world_out, "output directory")->capture_default_str();

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "generate synthetic examples from a world's unlabeled documents");
  std::string gen_world, gen_out;
  GenConfig gen;
  gen_cmd->add_option("--world", gen_world, "world.json")->required();
  gen_cmd->add_option("--per-context", gen.examples_per_context)->capture_default_str();
  gen_cmd->add_option("--top-p", gen.top_p)->capture_default_str();
  gen_cmd->add_option("--top-k", gen.top_k)->capture_default_str();
  gen_cmd->add_option("--noise-rate", gen.noise_rate)->capture_default_str();
  gen_cmd->add_option("--unans-ratio", gen.unanswerable_ratio)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output JSONL")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "MLE training, optionally as pre-train then fine-tune");
  std::string train_world, train_data, train_capacity = "teacher", train_out = "checkpoints";
  std::optional<std::string> train_then, train_dev, train_test, train_init;
  int train_pretrain_epochs = 3;
  ScheduleFlags train_flags;
  train_cmd->add_option("--world", train_world, "world.json (vocabulary)")->required();
  train_cmd->add_option("--data", train_data, "training JSONL")->required();
  train_cmd->add_option("--then-gold", train_then, "fine-tune on this JSONL after --data");
  train_cmd->add_option("--pretrain-epochs", train_pretrain_epochs, "epochs on --data when --then-gold is given")
      ->capture_default_str();
  train_cmd->add_option("--capacity", train_capacity, "checker, teacher or student")->capture_default_str();
  train_cmd->add_option("--init", train_init, "start from this checkpoint");
  train_cmd->add_option("--dev", train_dev, "dev JSONL for threshold tuning");
  train_cmd->add_option("--test", train_test, "test JSONL");
  train_cmd->add_option("--out-dir", train_out, "checkpoint directory")->capture_default_str();
  train_flags.attach(train_cmd);

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "roundtrip-consistency filtering");
  std::string filter_data, filter_checker, filter_dev, filter_out;
  filter_cmd->add_option("--data", filter_data, "synthetic JSONL")->required();
  filter_cmd->add_option("--checker", filter_checker, "checker checkpoint")->required();
  filter_cmd->add_option("--dev", filter_dev, "gold dev JSONL, tunes the checker threshold")->required();
  filter_cmd->add_option("--out", filter_out, "kept JSONL; dropped goes to <out>.dropped")->required();

  // bin
  auto* bin_cmd = app.add_subcommand("bin", "score, sort and partition synthetic examples");
  std::string bin_data, bin_scorer, bin_out;
  int bin_size = 1000;
  std::uint64_t bin_seed = 0;
  bin_cmd->add_option("--data", bin_data, "synthetic JSONL")->required();
  bin_cmd->add_option("--scorer", bin_scorer, "gold-trained checkpoint")->required();
  bin_cmd->add_option("--bin-size", bin_size)->capture_default_str();
  bin_cmd->add_option("--seed", bin_seed)->capture_default_str();
  bin_cmd->add_option("--out", bin_out, "output directory")->required();

  // distill
  auto* distill_cmd = app.add_subcommand("distill", "distill a teacher into a student");
  std::string distill_teacher, distill_capacity = "student", distill_data, distill_out = "checkpoints";
  std::optional<std::string> distill_then, distill_dev, distill_test;
  double distill_lambda = 1.0;
  int distill_gold_epochs = 4;
  ScheduleFlags distill_flags;
  distill_flags.epochs = 1;
  distill_cmd->add_option("--teacher", distill_teacher, "teacher checkpoint")->required();
  distill_cmd->add_option("--student-capacity", distill_capacity)->capture_default_str();
  distill_cmd->add_option("--data", distill_data, "JSONL to distill on")->required();
  distill_cmd->add_option("--lambda", distill_lambda, "weight of the distillation term")->capture_default_str();
  distill_cmd->add_option("--then-gold", distill_then, "continue distilling on this gold JSONL");
  distill_cmd->add_option("--gold-epochs", distill_gold_epochs, "epochs of the --then-gold stage")->capture_default_str();
  distill_cmd->add_option("--dev", distill_dev);
  distill_cmd->add_option("--test", distill_test);
  distill_cmd->add_option("--out-dir", distill_out)->capture_default_str();
  distill_flags.attach(distill_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "F1 with the dev-tuned threshold applied to test");
  std::string eval_ckpt, eval_dev;
  std::optional<std::string> eval_test;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--dev", eval_dev)->required();
  eval_cmd->add_option("--test", eval_test);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment suite");
  std::string exp_name;
  std::optional<std::string> exp_config;
  std::vector<std::string> exp_sets;
  exp_cmd->add_option("name", exp_name, "bins, curriculum, distill_lambda, distill_rc_vs_raw, distill_scale, distill or all")
      ->required();
  exp_cmd->add_option("--config", exp_config, "key = value config file");
  exp_cmd->add_option("--set", exp_sets, "override a config key (key=value)");

  // report
  auto* report_cmd = app.add_subcommand("report", "rebuild an experiment's reports from its persisted runs");
  std::string report_dir;
  std::optional<std::string> report_runs;
  report_cmd->add_option("--dir", report_dir, "experiment directory holding report.json")->required();
  report_cmd->add_option("--runs", report_runs, "run record directory (default <dir>/../runs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*world_cmd) {
      auto config = load_experiment_config(world_config ? std::optional<fs::path>(*world_config) : std::nullopt, world_sets);
      Pipeline pipeline(config);
      const auto out = resolve(world_out);
      const auto world = build_world(config.world, derive_seed(config.seed, "world"));
      const auto& g = config.gold;
      const double total = g.train + g.dev + g.test;
      const auto gold = synthesize_gold_dataset(world, {g.train / total, g.dev / total, g.test / total},
                                                g.train + g.dev + g.test, g.unanswerable_ratio, derive_seed(config.seed, "gold"));
      write_file(out / "world.json", world_to_json(world));
      write_jsonl(out / "gold_train.jsonl", gold.train);
      write_jsonl(out / "gold_dev.jsonl", gold.dev);
      write_jsonl(out / "gold_test.jsonl", gold.test);
      std::printf("%zu documents, vocabulary %zu; gold %zu/%zu/%zu -> %s\n", world.documents.size(),
                  world.vocabulary.size(), gold.train.size(), gold.dev.size(), gold.test.size(), out.c_str());
    } else if (*gen_cmd) {
      const auto data = generate_corpus(load_world(gen_world), gen);
      write_jsonl(resolve(gen_out), data.examples);
      std::printf("%zu answerable, %zu unanswerable -> %s\n", data.answerable_count(), data.unanswerable_count(),
                  gen_out.c_str());
    } else if (*train_cmd) {
      const auto world = load_world(train_world);
      const auto data = read_jsonl(resolve(train_data));
      ReaderParams init = train_init ? load_checkpoint(resolve(*train_init)).params
                                     : init_params(capacity_from_string(train_capacity), vocabulary_of(world),
                                                   derive_seed(train_flags.seed, "init"));
      ReaderParams trained;
      std::vector<std::string> lineage;
      if (train_then) {
        const auto gold = read_jsonl(resolve(*train_then));
        auto schedules = TwoStageSchedules{train_flags.schedule(), train_flags.schedule()};
        schedules.pretrain.epochs = train_pretrain_epochs;
        auto r = pretrain_then_finetune(init, {train_data, data}, {*train_then, gold}, schedules, "train");
        trained = std::move(r.params);
        lineage = {train_data + ":mle", *train_then + ":mle"};
      } else {
        trained = train_mle(init, data, train_flags.schedule()).params;
        lineage = {train_data + ":mle"};
      }
      const auto path = save_checkpoint(resolve(train_out), trained, lineage);
      std::printf("checkpoint %s\n", path.c_str());
      if (train_dev) {
        const auto dev = read_jsonl(resolve(*train_dev));
        if (train_test) {
          const auto r = evaluate_dev_test(trained, dev, read_jsonl(resolve(*train_test)));
          std::printf("dev F1 %.4f, test F1 %.4f\n", r.dev.overall_f1, r.test.overall_f1);
        } else {
          std::printf("dev F1 %.4f\n", best_threshold(trained, dev).second.overall_f1);
        }
      }
    } else if (*filter_cmd) {
      const auto checker = load_checkpoint(resolve(filter_checker)).params;
      const auto [tau, dev] = best_threshold(checker, read_jsonl(resolve(filter_dev)));
      SyntheticDataset data;
      data.examples = read_jsonl(resolve(filter_data));
      data.provenance = filter_data;
      const auto result = roundtrip_filter(data, checker, tau);
      write_jsonl(resolve(filter_out), result.kept.examples);
      write_jsonl(resolve(filter_out + ".dropped"), result.dropped.examples);
      std::printf("checker dev F1 %.4f; kept %zu, dropped %zu\n", dev.overall_f1, result.kept.examples.size(),
                  result.dropped.examples.size());
    } else if (*bin_cmd) {
      const auto scorer = load_checkpoint(resolve(bin_scorer)).params;
      const auto data = read_jsonl(resolve(bin_data));
      const auto ranked = sort_by_difficulty(data, scorer);
      const auto out = resolve(bin_out);
      save_ranked(out / "ranked.jsonl", ranked);
      const auto bins = partition_bins(ranked, bin_size, bin_seed);
      save_bins(out / ("bins_b" + std::to_string(bin_size) + ".json"), bins);
      std::printf("%zu examples, %zu bins of %d -> %s\n", ranked.examples.size(), bins.size(), bin_size, out.c_str());
    } else if (*distill_cmd) {
      const auto teacher = load_checkpoint(resolve(distill_teacher)).params;
      const auto data = read_jsonl(resolve(distill_data));
      const auto student = init_params(capacity_from_string(distill_capacity), teacher.vocabulary,
                                       derive_seed(distill_flags.seed, "init"));
      DistillConfig config{distill_lambda, distill_flags.schedule(), DatasetKind::synthetic_raw};
      auto result = train_distill(student, teacher, {distill_data, data}, config, "distill");
      if (distill_then) {
        const auto gold = read_jsonl(resolve(*distill_then));
        const auto outputs = compute_teacher_outputs(teacher, encode_all(*teacher.vocabulary, gold));
        auto schedule = distill_flags.schedule();
        schedule.epochs = distill_gold_epochs;
        result = continue_with_gold_distill(result, outputs, {*distill_then, gold}, schedule, "distill");
      }
      std::vector<std::string> lineage;
      for (const auto& s : result.record.lineage) lineage.push_back(s.dataset + ":" + s.objective);
      std::printf("checkpoint %s\n", save_checkpoint(resolve(distill_out), result.params, lineage).c_str());
      if (distill_dev && distill_test) {
        const auto r = evaluate_dev_test(result.params, read_jsonl(resolve(*distill_dev)), read_jsonl(resolve(*distill_test)));
        std::printf("dev F1 %.4f, test F1 %.4f\n", r.dev.overall_f1, r.test.overall_f1);
      }
    } else if (*eval_cmd) {
      const auto params = load_checkpoint(resolve(eval_ckpt)).params;
      const auto dev = read_jsonl(resolve(eval_dev));
      nlohmann::ordered_json j;
      if (eval_test) {
        const auto r = evaluate_dev_test(params, dev, read_jsonl(resolve(*eval_test)));
        j["dev"] = metrics_json(r.dev);
        j["test"] = metrics_json(r.test);
      } else {
        j["dev"] = metrics_json(best_threshold(params, dev).second);
      }
      std::cout << j.dump(2) << "\n";
    } else if (*exp_cmd) {
      const auto config = load_experiment_config(exp_config ? std::optional<fs::path>(*exp_config) : std::nullopt, exp_sets);
      Pipeline pipeline(config);
      std::vector<ExperimentKind> kinds;
      if (exp_name == "all") {
        kinds = all_experiments();
      } else if (exp_name == "distill") {
        kinds = {ExperimentKind::distill_lambda, ExperimentKind::distill_rc_vs_raw, ExperimentKind::distill_scale};
      } else {
        kinds = {experiment_from_string(exp_name)};
      }
      write_file(config.output_dir / "config.txt", to_key_values(config).dump());
      for (auto kind : kinds) {
        const auto& report = pipeline.run(kind);
        std::printf("== %s -> %s\n", report.experiment.c_str(), pipeline.experiment_dir(kind).c_str());
        print_verdicts(report);
      }
    } else if (*report_cmd) {
      const auto dir = resolve(report_dir);
      const auto runs = report_runs ? resolve(*report_runs) : dir.parent_path() / "runs";
      auto report = load_report(dir, runs);
      emit_reports(report, dir);
      print_verdicts(report);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
