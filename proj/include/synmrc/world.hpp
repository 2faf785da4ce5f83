#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synmrc/core.hpp"

namespace synmrc {

/// Knobs of the procedural micro-world. Documents flagged unlabeled are the
/// raw material for synthetic generation and never contribute gold examples.
struct WorldConfig {
  int n_entities = 300;
  int n_relations = 16;
  int n_types = 4;
  int n_modifiers = 20;
  int n_fillers = 100;
  int n_documents = 200;
  int n_unlabeled_documents = 1200;
  int paragraphs_per_document = 4;
  int entities_per_document = 10;
  int min_facts_per_paragraph = 3;
  int max_facts_per_paragraph = 4;
  int min_paragraph_length = 12;
  int max_paragraph_length = 48;
  int templates_per_relation = 3;
};

struct Entity {
  std::string id;
  Tokens name;
  int type = 0;
};

struct Relation {
  std::string id;
  std::string verb;     // context rendering
  std::string synonym;  // appears only in questions
  int subject_type = 0;
  int object_type = 0;
  double frequency = 1.0;
};

struct Fact {
  int subject = 0;
  int relation = 0;
  int object = 0;
  auto operator<=>(const Fact&) const = default;
};

/// A sentence of a paragraph. Fact sentences locate both arguments.
struct Sentence {
  Span span;
  std::optional<int> fact;  // index into World::facts
  Span subject;
  Span object;
};

struct Paragraph {
  Tokens tokens;
  std::vector<Sentence> sentences;
};

struct Document {
  std::string doc_id;
  std::vector<Paragraph> paragraphs;
  bool unlabeled = false;
};

struct World {
  WorldConfig config;
  std::uint64_t seed = 0;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::vector<Fact> facts;
  std::vector<Document> documents;
  std::vector<std::string> vocabulary;  // starts with [CLS], [SEP]

  const Document& document(std::string_view doc_id) const;
  Vocabulary make_vocabulary() const { return Vocabulary(vocabulary); }
};

/// Which fact argument a question asks for.
enum class AskedRole { object, subject };

struct RenderedQuestion {
  Tokens tokens;
  AskedRole asks = AskedRole::object;
};

/// Question templates are shared by gold construction and the generator, so
/// synthetic questions live in the same surface distribution as gold ones.
RenderedQuestion render_question(const World& world, const Fact& fact, int template_index);

/// Answer span of a rendered question inside its fact sentence.
inline Span answer_span(const Sentence& sentence, AskedRole role) {
  return role == AskedRole::object ? sentence.object : sentence.subject;
}

void validate(const WorldConfig& config);
World build_world(const WorldConfig& config, std::uint64_t seed);

std::string world_to_json(const World& world);
World world_from_json(std::string_view text);

struct SplitFractions {
  double train = 1.0;
  double dev = 0.0;
  double test = 0.0;
};

struct GoldDataset {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::uint64_t world_seed = 0;
};

/// `unanswerable_ratio` is the NoAnswer fraction of each split. Unanswerable
/// examples pair a fact question with a different paragraph of the same
/// document.
GoldDataset synthesize_gold_dataset(const World& world, const SplitFractions& fractions,
                                    int n_examples, double unanswerable_ratio, std::uint64_t seed);

}  // namespace synmrc
