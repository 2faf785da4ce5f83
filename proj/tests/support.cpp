#include "support.hpp"

#include <algorithm>
#include <cstdlib>

namespace synmrc::testing {

std::shared_ptr<const Vocabulary> word_vocabulary(int n_words) {
  std::vector<std::string> tokens{std::string(Vocabulary::cls_token), std::string(Vocabulary::sep_token)};
  for (int i = 0; i < n_words; ++i) tokens.push_back("w" + std::to_string(i));
  return std::make_shared<const Vocabulary>(std::move(tokens));
}

Example random_example(Rng& rng, int n_words, int context_length, double no_answer_rate, const std::string& id) {
  Example e;
  e.example_id = id;
  for (int i = 0; i < context_length; ++i) e.context.push_back("w" + std::to_string(rng.below(n_words)));
  const int q_len = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < q_len; ++i) e.question.push_back("w" + std::to_string(rng.below(n_words)));
  if (!rng.bernoulli(no_answer_rate)) {
    const int len = 1 + static_cast<int>(rng.below(std::min(3, context_length)));
    const int start = static_cast<int>(rng.below(context_length - len + 1));
    e.answer = Span{start, start + len};
    e.sentence_span = Span{0, context_length};
  }
  return e;
}

std::vector<Example> random_examples(Rng& rng, int count, int n_words, double no_answer_rate) {
  std::vector<Example> out;
  for (int i = 0; i < count; ++i) {
    const int len = 6 + static_cast<int>(rng.below(10));
    out.push_back(random_example(rng, n_words, len, no_answer_rate, "r" + std::to_string(i)));
  }
  return out;
}

ReaderParams random_params(Capacity capacity, std::shared_ptr<const Vocabulary> vocabulary, std::uint64_t seed,
                           double noise) {
  ReaderParams p = init_params(capacity, std::move(vocabulary), seed);
  Rng rng(derive_seed(seed, "perturb"));
  for (auto& t : p.tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += noise * rng.normal();
  }
  return p;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("SYNMRC_TEST_TMP");
  const auto dir = (root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "synmrc_tests") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

WorldConfig small_world_config() {
  WorldConfig c;
  c.n_entities = 80;
  c.n_relations = 6;
  c.n_modifiers = 8;
  c.n_fillers = 30;
  c.n_documents = 20;
  c.n_unlabeled_documents = 20;
  return c;
}

}  // namespace synmrc::testing
