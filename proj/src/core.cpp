#include "synmrc/core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace synmrc {

using ordered_json = nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  return splitmix64(parent ^ fnv1a64(tag));
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw InputError("Rng::below(0)");
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_normal_ = r * std::sin(2.0 * std::numbers::pi * u2);
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw InputError("cannot sample more items than available");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + below(n - i)]);
  }
  pool.resize(k);
  return pool;
}

std::string_view to_string(Source source) {
  return source == Source::gold ? "gold" : "synthetic";
}

Source source_from_string(std::string_view text) {
  if (text == "gold") return Source::gold;
  if (text == "synthetic") return Source::synthetic;
  throw InputError("unknown example source: " + std::string(text));
}

Tokens Example::answer_tokens() const {
  if (!answer) return {};
  return Tokens(context.begin() + answer->start, context.begin() + answer->end);
}

std::string Example::answer_text() const { return join_tokens(answer_tokens()); }

void validate(const Example& example) {
  const int n = static_cast<int>(example.context.size());
  if (example.answer) {
    const Span& a = *example.answer;
    if (a.start < 0 || a.start >= a.end || a.end > n) {
      throw InputError(example.example_id + ": answer span outside context");
    }
    if (example.sentence_span && !example.sentence_span->contains(a)) {
      throw InputError(example.example_id + ": answer escapes its sentence");
    }
  } else if (example.sentence_span) {
    throw InputError(example.example_id + ": NoAnswer example with a sentence span");
  }
}

std::string make_example_id(std::string_view tag, std::string_view doc_id, int paragraph,
                            std::string_view suffix) {
  std::string id;
  id.append(tag).append("/").append(doc_id).append("/p").append(std::to_string(paragraph));
  id.append("/").append(suffix);
  return id;
}

namespace {

std::vector<std::string_view> split_id(std::string_view id) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = id.find('/', pos);
    parts.push_back(id.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

}  // namespace

std::string document_of(const Example& example) {
  const auto parts = split_id(example.example_id);
  if (parts.size() < 4) throw InputError("malformed example id: " + example.example_id);
  return std::string(parts[1]);
}

int paragraph_of(const Example& example) {
  const auto parts = split_id(example.example_id);
  if (parts.size() < 4 || parts[2].size() < 2 || parts[2][0] != 'p') {
    throw InputError("malformed example id: " + example.example_id);
  }
  return std::stoi(std::string(parts[2].substr(1)));
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string to_json_line(const Example& example) {
  ordered_json j;
  j["example_id"] = example.example_id;
  j["context"] = example.context;
  j["question"] = example.question;
  if (example.answer) {
    ordered_json a;
    a["start"] = example.answer->start;
    a["end"] = example.answer->end;
    a["text"] = example.answer_text();
    j["answer"] = std::move(a);
  } else {
    j["answer"] = nullptr;
  }
  if (example.sentence_span) {
    j["sentence_span"] = {example.sentence_span->start, example.sentence_span->end};
  } else {
    j["sentence_span"] = nullptr;
  }
  j["source"] = std::string(to_string(example.source));
  if (example.rc_flag) {
    j["rc_flag"] = *example.rc_flag;
  } else {
    j["rc_flag"] = nullptr;
  }
  return j.dump();
}

Example example_from_json_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Example e;
  e.example_id = j.at("example_id").get<std::string>();
  e.context = j.at("context").get<Tokens>();
  e.question = j.at("question").get<Tokens>();
  if (!j.at("answer").is_null()) {
    e.answer = Span{j["answer"].at("start").get<int>(), j["answer"].at("end").get<int>()};
  }
  if (!j.at("sentence_span").is_null()) {
    e.sentence_span = Span{j["sentence_span"].at(0).get<int>(), j["sentence_span"].at(1).get<int>()};
  }
  e.source = source_from_string(j.at("source").get<std::string>());
  if (!j.at("rc_flag").is_null()) e.rc_flag = j["rc_flag"].get<bool>();
  validate(e);
  return e;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples) {
  std::string out;
  for (const auto& e : examples) {
    out += to_json_line(e);
    out.push_back('\n');
  }
  write_file(path, out);
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(example_from_json_line(line));
  }
  return out;
}

std::string triple_key(const Example& example) {
  std::string key = join_tokens(example.context);
  key += '\x1f';
  key += join_tokens(example.question);
  key += '\x1f';
  key += example.answer ? example.answer_text() : std::string("\x1e");
  return key;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[cls_id] != cls_token || tokens_[sep_id] != sep_token) {
    throw VocabularyError("vocabulary must start with [CLS] and [SEP]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw VocabularyError("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) throw VocabularyError("out-of-vocabulary token: " + std::string(token));
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace synmrc
