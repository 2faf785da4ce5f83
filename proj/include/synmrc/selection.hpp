#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synmrc/core.hpp"
#include "synmrc/generator.hpp"
#include "synmrc/reader.hpp"

namespace synmrc {

inline constexpr double kDifficultyCap = 50.0;  // H_cap

struct FilterResult {
  SyntheticDataset kept;     // rc_flag = true
  SyntheticDataset dropped;  // rc_flag = false
};

/// Keeps an answerable example iff the checker's predicted span equals its
/// span exactly, and a NoAnswer example iff the checker predicts NoAnswer.
FilterResult roundtrip_filter(const SyntheticDataset& synthetic_set, const ReaderParams& checker, double checker_threshold);

/// H = -[log z_start(a_start) + log z_end(a_end)] (CLS for NoAnswer), capped
/// at kDifficultyCap; a zero probability yields the cap.
double difficulty(const ReaderParams& scorer, const Example& example);
double difficulty_from(const SpanDistributions& z, const EncodedExample& example);

struct RankedDataset {
  std::vector<Example> examples;
  std::vector<double> scores;  // non-increasing
  std::string scorer_checkpoint;
  std::string id;
};

/// Hardest first; ties by example_id ascending.
RankedDataset rank_by_scores(std::vector<Example> examples, std::vector<double> scores, std::string scorer_checkpoint);
RankedDataset sort_by_difficulty(std::span<const Example> synthetic_set, const ReaderParams& scorer);

struct Bin {
  int index = 1;  // 1-based, 1 is hardest
  int size = 0;   // b
  std::vector<Example> examples;
  std::string parent;
};

/// n = floor(|S*| / b) consecutive bins of exactly b examples; a short tail is
/// dropped. Each bin is shuffled with a seed derived from (parent, index).
std::vector<Bin> partition_bins(const RankedDataset& ranked, int bin_size, std::uint64_t seed = 0);

enum class CurriculumMode { plain_cl, cl_switch, random };

/// plain_cl: increasing difficulty. cl_switch: plain_cl followed by
/// ceil(switch_fraction * |S|) disjoint random position swaps. random: a
/// seeded shuffle.
std::vector<Example> curriculum_order(const RankedDataset& ranked, CurriculumMode mode, double switch_fraction,
                                      std::uint64_t seed);
std::vector<Example> curriculum_order(std::span<const Example> synthetic_set, const ReaderParams& scorer,
                                      CurriculumMode mode, double switch_fraction, std::uint64_t seed);

/// Hands out NoAnswer examples without replacement, so quotas drawn from one
/// pool are disjoint.
class UnanswerablePool {
 public:
  UnanswerablePool(std::vector<Example> examples, std::uint64_t seed);
  std::vector<Example> take(std::size_t count);
  std::size_t remaining() const { return examples_.size() - cursor_; }

 private:
  std::vector<Example> examples_;
  std::size_t cursor_ = 0;
};

/// Adds floor(ratio * b) NoAnswer examples and reshuffles. Throws QuotaError
/// when the pool runs dry.
Bin attach_unanswerable_quota(Bin bin, UnanswerablePool& pool, double ratio, std::uint64_t seed);

/// JSONL of the ranked examples plus `<path>.scores.json` mapping
/// example_id -> H together with the scorer checkpoint hash.
void save_ranked(const std::filesystem::path& path, const RankedDataset& ranked);
RankedDataset load_ranked(const std::filesystem::path& path);
/// Bins persist as id lists that reference the ranked file.
void save_bins(const std::filesystem::path& path, std::span<const Bin> bins);

}  // namespace synmrc
