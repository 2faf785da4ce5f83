#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synmrc/config.hpp"
#include "synmrc/distillation.hpp"
#include "synmrc/evaluation.hpp"
#include "synmrc/generator.hpp"
#include "synmrc/reader.hpp"
#include "synmrc/selection.hpp"
#include "synmrc/training.hpp"
#include "synmrc/world.hpp"

namespace synmrc {

/// One condition of an experiment: a run per seed, in seed order.
struct ConditionResult {
  std::string condition;
  std::vector<RunRecord> runs;
};

/// mean(lhs) - mean(rhs) on one split, with the pooled per-seed standard
/// deviation sqrt((s_lhs^2 + s_rhs^2) / 2).
struct Verdict {
  std::string name;
  std::string split;
  std::string lhs;
  std::string rhs;
  double mean_difference = 0.0;
  double pooled_std = 0.0;
  std::vector<std::string> cites;  // aggregate rows, "condition@split"

  char sign() const { return mean_difference > 0.0 ? '+' : (mean_difference < 0.0 ? '-' : '0'); }
  bool exceeds_noise() const { return std::abs(mean_difference) > pooled_std; }
};

/// Plot-ready series: x against the seed-mean overall F1.
struct Series {
  std::string name;
  std::string split;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::string> conditions;
};

struct ComparisonReport {
  std::string experiment;
  std::vector<int> seeds;
  std::vector<std::string> splits{"dev", "test"};
  std::vector<ConditionResult> conditions;
  std::vector<Verdict> verdicts;
  std::vector<Series> series;
  std::map<std::string, std::string> facts;
  std::vector<std::string> notes;

  const ConditionResult& condition(const std::string& name) const;
  bool has_condition(const std::string& name) const;
  std::vector<SeedReport> seed_reports(const std::string& condition, const std::string& split) const;
  AggregateReport aggregate(const std::string& condition, const std::string& split) const;
  const Verdict& verdict(const std::string& name) const;
};

/// Difference of the two conditions' aggregates on `split`.
Verdict compare(const ComparisonReport& report, std::string name, const std::string& lhs, const std::string& rhs,
                const std::string& split);

/// Everything built once from the top-level seed and shared by every seed
/// and condition.
struct SharedData {
  World world;
  std::shared_ptr<const Vocabulary> vocabulary;
  GoldDataset gold;
  SyntheticDataset raw;  // generator output
  ReaderParams checker;
  double checker_threshold = 0.0;
  MetricsReport checker_dev;
  FilterResult filtered;
  std::vector<Example> pool_answerable;    // sampled from the kept set
  std::vector<Example> pool_unanswerable;
};

/// Condition labels used across reports.
namespace labels {
inline constexpr const char* gold_only = "gold_only";
inline constexpr const char* full_pool = "full_pool";
inline constexpr const char* plain_cl = "plain_cl";
inline constexpr const char* cl_switch = "cl_switch_5";
inline constexpr const char* random_order = "random";
inline constexpr const char* teacher = "teacher";
inline constexpr const char* student_gold_mle = "student_gold_mle";
std::string bin(int size, int index);
std::string lambda(double value);
std::string distill_raw(int multiple);
std::string distill_rc(int multiple);
std::string distill_synthetic(int multiple);
std::string distill_then_gold(int multiple);
}  // namespace labels

/// Lazily builds and memoizes shared data, gold readers, and experiment
/// reports, persisting every run under the config's output directory.
class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit Pipeline(ExperimentConfig config, Logger log = nullptr);

  const ExperimentConfig& config() const { return config_; }
  const SharedData& shared();

  /// Root of seed `seed`'s streams.
  std::uint64_t seed_root(int seed) const;
  /// theta_G for one seed, trained once.
  const RunResult& gold_reader(int seed);
  /// Best bins-experiment condition by mean dev F1, and its per-seed model.
  std::string teacher_condition();
  const ReaderParams& teacher(int seed);

  const ComparisonReport& run(ExperimentKind kind);

  std::filesystem::path experiment_dir(ExperimentKind kind) const;
  std::filesystem::path checkpoint_dir() const { return config_.output_dir / "checkpoints"; }

 private:
  ComparisonReport bins();
  ComparisonReport curriculum();
  ComparisonReport distill_lambda();
  ComparisonReport distill_rc_vs_raw();
  ComparisonReport distill_scale();

  RunRecord finish(ExperimentKind kind, RunRecord record, const ReaderParams& params);
  const TeacherOutputs& teacher_outputs(int seed, const std::string& set_name, std::span<const Example> examples);
  ReaderParams student_init(int seed) const;
  std::size_t table_index(int seed) const;
  /// kind is "raw" or "rc"; `multiple` counts distillation units.
  const std::vector<Example>& distill_set(const std::string& kind, int multiple);
  /// Synthetic-only distilled student, shared by raw-vs-RC and the ladder.
  const DistillResult& synthetic_student(int seed, const std::string& kind, int multiple);
  bool load_teacher_from_disk();
  void log(const std::string& message) const;

  ExperimentConfig config_;
  Logger log_;
  std::optional<SharedData> shared_;
  std::map<int, RunResult> gold_readers_;
  std::map<ExperimentKind, ComparisonReport> reports_;
  std::optional<std::string> teacher_condition_;
  std::map<int, ReaderParams> teachers_;
  std::map<std::string, TeacherOutputs> teacher_outputs_;
  std::map<std::string, std::vector<Example>> distill_sets_;
  std::map<std::string, DistillResult> synthetic_students_;
};

ComparisonReport run_bin_experiment(const ExperimentConfig& config);
ComparisonReport run_curriculum_experiment(const ExperimentConfig& config);
/// Concatenates reports; a condition present in several parts is kept once.
ComparisonReport merge_reports(std::string experiment, std::span<const ComparisonReport* const> parts);

/// Runs the lambda grid, raw-vs-RC, and the size ladder, merged into one
/// report.
ComparisonReport run_distill_experiments(const ExperimentConfig& config);

/// Condition-independent fingerprint of a dataset: FNV over sorted ids.
std::string multiset_hash(std::span<const Example> examples);

}  // namespace synmrc
