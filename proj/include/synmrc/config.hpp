#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synmrc/core.hpp"
#include "synmrc/generator.hpp"
#include "synmrc/training.hpp"
#include "synmrc/world.hpp"

namespace synmrc {

/// Flat `key = value` settings. Lines starting with '#' are comments; lists
/// are comma separated.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Parses "key=value".
  void set_assignment(std::string_view assignment);
  /// Later layers win.
  void merge(const KeyValues& overrides);

  bool contains(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class ExperimentKind { bins, curriculum, distill_lambda, distill_rc_vs_raw, distill_scale };

std::string_view to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(std::string_view text);
std::vector<ExperimentKind> all_experiments();

struct GoldSizes {
  int train = 2000;
  int dev = 400;
  int test = 400;
  double unanswerable_ratio = 0.25;  // NoAnswer fraction of every split
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::bins;
  std::uint64_t seed = 1;  // every stream hangs off this one
  std::vector<int> seeds{0, 1, 2};

  WorldConfig world{.n_unlabeled_documents = 1600};
  std::optional<std::filesystem::path> world_path;  // load instead of building
  GoldSizes gold;
  GenConfig gen;

  int pool_answerable = 16000;
  int pool_unanswerable = 4000;
  std::vector<int> bin_sizes{1000, 2000, 4000, 8000, 16000};
  double bin_unanswerable_ratio = 0.25;
  double switch_fraction = 0.05;

  double learning_rate = 0.05;
  int batch_size = 32;
  int gold_epochs = 20;
  int pretrain_epochs = 3;
  int checker_epochs = 20;

  std::vector<double> lambdas{0.0, 0.3, 0.5, 0.7, 0.9, 1.0};
  int distill_gold_epochs = 20;       // lambda grid, on gold
  int distill_synthetic_epochs = 1;   // synthetic stage
  int distill_then_gold_epochs = 4;   // gold stage after synthetic
  int distill_unit = 4000;
  std::vector<int> distill_multiples{1, 2, 4, 6};
  int rc_vs_raw_multiple = 1;
  bool cache_teacher_outputs = true;

  std::filesystem::path output_dir = "runs";

  TrainSchedule schedule(int epochs, std::uint64_t schedule_seed,
                         ShuffleMode shuffle = ShuffleMode::random) const {
    return {epochs, batch_size, learning_rate, shuffle, schedule_seed};
  }
};

/// Fills a config from defaults overlaid with `values`; unknown keys are a
/// ConfigError so typos do not pass silently.
ExperimentConfig config_from(const KeyValues& values);
KeyValues to_key_values(const ExperimentConfig& config);

void validate(const ExperimentConfig& config);

inline constexpr const char* kWorkspaceVariable = "SYNMRC_WORKSPACE";

/// The workspace root: $SYNMRC_WORKSPACE if set, else the current directory.
std::filesystem::path workspace_root();
/// Relative paths resolve against the workspace root.
std::filesystem::path resolve(const std::filesystem::path& path);

/// defaults < config file < `--set key=value` flags.
ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::string>& assignments);

}  // namespace synmrc
