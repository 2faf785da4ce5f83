#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace synmrc {

// ----------------------------- errors -----------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define SYNMRC_DEFINE_ERROR(Name)     \
  struct Name : Error {               \
    using Error::Error;               \
  }

SYNMRC_DEFINE_ERROR(ConfigError);
SYNMRC_DEFINE_ERROR(CapacityError);
SYNMRC_DEFINE_ERROR(InputError);
SYNMRC_DEFINE_ERROR(VocabularyError);
SYNMRC_DEFINE_ERROR(InputLengthError);
SYNMRC_DEFINE_ERROR(PairingError);
SYNMRC_DEFINE_ERROR(PartitionError);
SYNMRC_DEFINE_ERROR(QuotaError);
SYNMRC_DEFINE_ERROR(AlignmentError);
SYNMRC_DEFINE_ERROR(DivergenceError);
SYNMRC_DEFINE_ERROR(AggregationError);
SYNMRC_DEFINE_ERROR(IoError);

#undef SYNMRC_DEFINE_ERROR

// ----------------------------- hashing and seeds -----------------------------

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Child seeds are splitmix64(parent ^ fnv1a64(tag)). Every random stream in
/// the project is reached from one top-level seed through a chain of tags,
/// e.g. derive_seed(derive_seed(seed, "generator"), "d0012/p3").
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// mt19937_64 with portable helpers. The standard distributions are avoided
/// because their output is library-specific.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// k distinct indices from [0, n) in random order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

// ----------------------------- examples -----------------------------

using Tokens = std::vector<std::string>;

/// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool contains(const Span& inner) const { return start <= inner.start && inner.end <= end; }
  auto operator<=>(const Span&) const = default;
};

enum class Source { gold, synthetic };

std::string_view to_string(Source source);
Source source_from_string(std::string_view text);

struct Example {
  std::string example_id;
  Tokens context;
  Tokens question;
  std::optional<Span> answer;  // nullopt is NoAnswer
  std::optional<Span> sentence_span;
  Source source = Source::gold;
  std::optional<bool> rc_flag;

  // Oracle-only bookkeeping; never serialized.
  bool corrupted = false;
  bool uncorruptible = false;

  bool answerable() const { return answer.has_value(); }
  Tokens answer_tokens() const;
  std::string answer_text() const;
};

/// Throws InputError when a span lies outside the context, a NoAnswer example
/// carries a sentence span, or the answer escapes its sentence.
void validate(const Example& example);

/// Example ids have the form "<tag>/<doc_id>/p<k>/<n>".
std::string make_example_id(std::string_view tag, std::string_view doc_id, int paragraph,
                            std::string_view suffix);
std::string document_of(const Example& example);
int paragraph_of(const Example& example);

std::string join_tokens(std::span<const std::string> tokens);

/// One JSON object per line with the fixed field order
/// example_id, context, question, answer, sentence_span, source, rc_flag.
std::string to_json_line(const Example& example);
Example example_from_json_line(std::string_view line);

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

/// Identity used for generator deduplication: (context, question, answer text).
std::string triple_key(const Example& example);

// ----------------------------- vocabulary -----------------------------

class Vocabulary {
 public:
  static constexpr int cls_id = 0;
  static constexpr int sep_id = 1;
  static constexpr std::string_view cls_token = "[CLS]";
  static constexpr std::string_view sep_token = "[SEP]";

  Vocabulary() = default;
  /// `tokens` must start with [CLS], [SEP] and contain no duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace synmrc
