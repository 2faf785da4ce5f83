#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synmrc/core.hpp"
#include "synmrc/evaluation.hpp"
#include "synmrc/reader.hpp"

namespace synmrc {

enum class ShuffleMode { random, fixed_order };

std::string_view to_string(ShuffleMode mode);

struct TrainSchedule {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.05;
  ShuffleMode shuffle = ShuffleMode::random;
  std::uint64_t seed = 0;
};

void validate(const TrainSchedule& schedule);
std::string describe(const TrainSchedule& schedule);

struct TrainingCurve {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  long steps = 0;
};

/// Plain mini-batch gradient descent over `n_items` items. `batch_loss`
/// receives item indices and returns the batch-mean loss and its gradient.
/// Random shuffling draws epoch e's permutation from derive_seed(seed, e);
/// fixed_order keeps the given order every epoch. Throws DivergenceError on
/// a non-finite loss or parameter.
using BatchObjective = std::function<double(std::span<const std::size_t> items, ReaderParams& grad)>;
TrainingCurve run_sgd(ReaderParams& params, std::size_t n_items, const TrainSchedule& schedule,
                      const BatchObjective& batch_loss);

struct TrainResult {
  ReaderParams params;
  TrainingCurve curve;
};

TrainResult train_mle(const ReaderParams& params, std::span<const Example> dataset, const TrainSchedule& schedule);

/// One stage of a run's history.
struct LineageStage {
  std::string dataset;  // identifier of the data the stage consumed
  std::string objective;  // "mle" or "distill(lambda=...,kind=...)"
  TrainSchedule schedule;
  std::size_t n_examples = 0;
};

struct RunRecord {
  std::string run_id;
  std::vector<LineageStage> lineage;
  std::uint64_t seed = 0;
  std::string checkpoint_hash;
  std::map<std::string, MetricsReport> metrics;  // keyed by split
  std::vector<std::vector<double>> curves;       // one loss curve per stage
  double wall_time_seconds = 0.0;
};

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(std::string_view text);
/// Writes `<run_dir>/<run_id>.json`.
std::filesystem::path save_run_record(const std::filesystem::path& run_dir, const RunRecord& record);
RunRecord load_run_record(const std::filesystem::path& path);

struct DatasetRef {
  std::string name;
  std::span<const Example> examples;
};

struct TwoStageSchedules {
  TrainSchedule pretrain{3, 32, 0.05, ShuffleMode::random, 0};
  TrainSchedule finetune{20, 32, 0.05, ShuffleMode::random, 0};
};

struct RunResult {
  RunRecord record;
  ReaderParams params;
};

/// Stage 1 trains on `pretrain_set`, stage 2 on `gold_train`; the stage-2
/// checkpoint is the run's model.
RunResult pretrain_then_finetune(const ReaderParams& init_params, const DatasetRef& pretrain_set,
                                 const DatasetRef& gold_train, const TwoStageSchedules& schedules,
                                 std::string run_id);

}  // namespace synmrc
