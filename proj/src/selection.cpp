#include "synmrc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace synmrc {

FilterResult roundtrip_filter(const SyntheticDataset& synthetic_set, const ReaderParams& checker,
                              double checker_threshold) {
  FilterResult out;
  out.kept.gen_config = out.dropped.gen_config = synthetic_set.gen_config;
  out.kept.provenance = synthetic_set.provenance + "+rc";
  out.dropped.provenance = synthetic_set.provenance + "-rc";
  for (const Example& e : synthetic_set.examples) {
    const auto input = tokenize_pair(*checker.vocabulary, e.question, e.context);
    const Prediction p = predict(checker, input, checker_threshold);
    const bool consistent = p.answer == e.answer;
    Example tagged = e;
    tagged.rc_flag = consistent;
    (consistent ? out.kept : out.dropped).examples.push_back(std::move(tagged));
  }
  return out;
}

double difficulty_from(const SpanDistributions& z, const EncodedExample& example) {
  const double ps = z.start(example.start);
  const double pe = z.end(example.end);
  if (ps <= 0.0 || pe <= 0.0) return kDifficultyCap;
  return std::min(kDifficultyCap, -(std::log(ps) + std::log(pe)));
}

double difficulty(const ReaderParams& scorer, const Example& example) {
  const auto encoded = encode(*scorer.vocabulary, example);
  return difficulty_from(forward(scorer, encoded.input), encoded);
}

RankedDataset rank_by_scores(std::vector<Example> examples, std::vector<double> scores, std::string scorer_checkpoint) {
  if (examples.size() != scores.size()) throw InputError("scores and examples differ in length");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return examples[a].example_id < examples[b].example_id;
  });
  RankedDataset r;
  r.scorer_checkpoint = std::move(scorer_checkpoint);
  r.examples.reserve(order.size());
  r.scores.reserve(order.size());
  std::uint64_t h = fnv1a64(r.scorer_checkpoint);
  for (std::size_t i : order) {
    r.examples.push_back(std::move(examples[i]));
    r.scores.push_back(scores[i]);
    h = fnv1a64(r.examples.back().example_id, h);
  }
  r.id = "ranked-" + hex64(h);
  return r;
}

RankedDataset sort_by_difficulty(std::span<const Example> synthetic_set, const ReaderParams& scorer) {
  std::vector<double> scores;
  scores.reserve(synthetic_set.size());
  for (const auto& e : synthetic_set) scores.push_back(difficulty(scorer, e));
  return rank_by_scores(std::vector<Example>(synthetic_set.begin(), synthetic_set.end()), std::move(scores),
                        scorer.content_hash());
}

std::vector<Bin> partition_bins(const RankedDataset& ranked, int bin_size, std::uint64_t seed) {
  const auto total = ranked.examples.size();
  if (bin_size < 1) throw PartitionError("bin size must be >= 1");
  if (static_cast<std::size_t>(bin_size) > total) {
    throw PartitionError("bin size " + std::to_string(bin_size) + " exceeds ranked set of " + std::to_string(total));
  }
  const auto b = static_cast<std::size_t>(bin_size);
  std::vector<Bin> bins;
  for (std::size_t i = 0; (i + 1) * b <= total; ++i) {
    Bin bin;
    bin.index = static_cast<int>(i) + 1;
    bin.size = bin_size;
    bin.parent = ranked.id;
    bin.examples.assign(ranked.examples.begin() + static_cast<std::ptrdiff_t>(i * b),
                        ranked.examples.begin() + static_cast<std::ptrdiff_t>((i + 1) * b));
    Rng rng(derive_seed(derive_seed(seed, ranked.id + "/b" + std::to_string(bin_size)), static_cast<std::uint64_t>(bin.index)));
    rng.shuffle(bin.examples);
    bins.push_back(std::move(bin));
  }
  return bins;
}

std::vector<Example> curriculum_order(const RankedDataset& ranked, CurriculumMode mode, double switch_fraction,
                                      std::uint64_t seed) {
  if (switch_fraction < 0.0 || switch_fraction > 1.0) throw ConfigError("switch_fraction must lie in [0, 1]");
  std::vector<Example> out(ranked.examples.rbegin(), ranked.examples.rend());
  Rng rng(derive_seed(seed, "curriculum"));
  switch (mode) {
    case CurriculumMode::plain_cl:
      break;
    case CurriculumMode::cl_switch: {
      auto pairs = static_cast<std::size_t>(std::ceil(switch_fraction * static_cast<double>(out.size()) - 1e-9));
      pairs = std::min(pairs, out.size() / 2);
      const auto positions = rng.sample_without_replacement(out.size(), 2 * pairs);
      for (std::size_t i = 0; i < pairs; ++i) std::swap(out[positions[2 * i]], out[positions[2 * i + 1]]);
      break;
    }
    case CurriculumMode::random:
      rng.shuffle(out);
      break;
  }
  return out;
}

std::vector<Example> curriculum_order(std::span<const Example> synthetic_set, const ReaderParams& scorer,
                                      CurriculumMode mode, double switch_fraction, std::uint64_t seed) {
  return curriculum_order(sort_by_difficulty(synthetic_set, scorer), mode, switch_fraction, seed);
}

UnanswerablePool::UnanswerablePool(std::vector<Example> examples, std::uint64_t seed) : examples_(std::move(examples)) {
  for (const auto& e : examples_) {
    if (e.answerable()) throw InputError("unanswerable pool contains answerable example " + e.example_id);
  }
  Rng rng(derive_seed(seed, "unanswerable-pool"));
  rng.shuffle(examples_);
}

std::vector<Example> UnanswerablePool::take(std::size_t count) {
  if (count > remaining()) {
    throw QuotaError("unanswerable pool exhausted: need " + std::to_string(count) + ", have " +
                     std::to_string(remaining()));
  }
  std::vector<Example> out(examples_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                           examples_.begin() + static_cast<std::ptrdiff_t>(cursor_ + count));
  cursor_ += count;
  return out;
}

Bin attach_unanswerable_quota(Bin bin, UnanswerablePool& pool, double ratio, std::uint64_t seed) {
  if (ratio < 0.0) throw ConfigError("unanswerable ratio must be >= 0");
  const auto quota = static_cast<std::size_t>(std::floor(ratio * bin.size + 1e-9));
  if (quota == 0) return bin;
  auto extra = pool.take(quota);
  bin.examples.insert(bin.examples.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  Rng rng(derive_seed(seed, bin.parent + "/quota/" + std::to_string(bin.size) + "/" + std::to_string(bin.index)));
  rng.shuffle(bin.examples);
  return bin;
}

void save_ranked(const std::filesystem::path& path, const RankedDataset& ranked) {
  write_jsonl(path, ranked.examples);
  nlohmann::ordered_json j;
  j["id"] = ranked.id;
  j["scorer_checkpoint"] = ranked.scorer_checkpoint;
  auto& scores = j["scores"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ranked.examples.size(); ++i) {
    scores.push_back({ranked.examples[i].example_id, ranked.scores[i]});
  }
  write_file(path.string() + ".scores.json", j.dump());
}

RankedDataset load_ranked(const std::filesystem::path& path) {
  RankedDataset r;
  r.examples = read_jsonl(path);
  const auto j = nlohmann::json::parse(read_file(path.string() + ".scores.json"));
  r.id = j.at("id");
  r.scorer_checkpoint = j.at("scorer_checkpoint");
  const auto& scores = j.at("scores");
  if (scores.size() != r.examples.size()) throw InputError("score sidecar does not match " + path.string());
  for (std::size_t i = 0; i < r.examples.size(); ++i) {
    if (scores[i].at(0).get<std::string>() != r.examples[i].example_id) {
      throw InputError("score sidecar out of order at " + r.examples[i].example_id);
    }
    r.scores.push_back(scores[i].at(1).get<double>());
  }
  return r;
}

void save_bins(const std::filesystem::path& path, std::span<const Bin> bins) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& b : bins) {
    std::vector<std::string> ids;
    for (const auto& e : b.examples) ids.push_back(e.example_id);
    j.push_back({{"parent", b.parent}, {"index", b.index}, {"size", b.size}, {"example_ids", ids}});
  }
  write_file(path, j.dump());
}

}  // namespace synmrc
