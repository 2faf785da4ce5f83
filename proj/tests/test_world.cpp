#include <set>

#include "doctest.h"
#include "support.hpp"
#include "synmrc/world.hpp"

using namespace synmrc;

namespace {

int context_count(const World& w) {
  int n = 0;
  for (const auto& d : w.documents) n += static_cast<int>(d.paragraphs.size());
  return n;
}

std::set<std::string> documents_of(const std::vector<Example>& examples) {
  std::set<std::string> out;
  for (const auto& e : examples) out.insert(document_of(e));
  return out;
}

}  // namespace

TEST_SUITE("world") {
  TEST_CASE("one document with two paragraphs gives two contexts") {
    WorldConfig c;
    c.n_documents = 1;
    c.n_unlabeled_documents = 0;
    c.paragraphs_per_document = 2;
    const World w = build_world(c, 7);
    CHECK(w.documents.size() == 1);
    CHECK(context_count(w) == 2);
  }

  TEST_CASE("invalid bounds are configuration errors") {
    WorldConfig c;
    c.paragraphs_per_document = 1;
    CHECK_THROWS_AS(build_world(c, 1), ConfigError);
    c = WorldConfig{};
    c.min_facts_per_paragraph = 5;
    c.max_facts_per_paragraph = 2;
    CHECK_THROWS_AS(build_world(c, 1), ConfigError);
  }

  TEST_CASE("same config and seed give byte-identical worlds; seeds differ") {
    auto c = testing::small_world_config();
    c.n_documents = 50;
    const auto a = world_to_json(build_world(c, 1));
    CHECK(a == world_to_json(build_world(c, 1)));
    const World w1 = build_world(c, 1), w2 = build_world(c, 2);
    CHECK(w1.facts != w2.facts);
  }

  TEST_CASE("world json round trip") {
    const World w = build_world(testing::small_world_config(), 3);
    const auto text = world_to_json(w);
    CHECK(world_to_json(world_from_json(text)) == text);
  }

  TEST_CASE("fact sentences locate their arguments") {
    const World w = build_world(testing::small_world_config(), 4);
    int fact_sentences = 0;
    for (const auto& d : w.documents) {
      for (const auto& p : d.paragraphs) {
        for (const auto& s : p.sentences) {
          CHECK(s.span.end <= static_cast<int>(p.tokens.size()));
          if (!s.fact) continue;
          ++fact_sentences;
          const Fact& f = w.facts[static_cast<std::size_t>(*s.fact)];
          CHECK(s.span.contains(s.subject));
          CHECK(s.span.contains(s.object));
          const Tokens subject(p.tokens.begin() + s.subject.start, p.tokens.begin() + s.subject.end);
          const Tokens object(p.tokens.begin() + s.object.start, p.tokens.begin() + s.object.end);
          CHECK(subject == w.entities[static_cast<std::size_t>(f.subject)].name);
          CHECK(object == w.entities[static_cast<std::size_t>(f.object)].name);
        }
      }
    }
    CHECK(fact_sentences > 0);
  }

  TEST_CASE("gold dataset shapes") {
    auto c = testing::small_world_config();
    c.n_documents = 120;
    const World w = build_world(c, 5);

    const auto all_answerable = synthesize_gold_dataset(w, {1, 0, 0}, 300, 0.0, 1);
    CHECK(all_answerable.train.size() == 300);
    CHECK(all_answerable.dev.empty());
    CHECK(all_answerable.test.empty());
    for (const auto& e : all_answerable.train) CHECK(e.answerable());

    const auto quarter = synthesize_gold_dataset(w, {1, 0, 0}, 1000, 0.25, 2);
    int no_answer = 0;
    for (const auto& e : quarter.train) no_answer += !e.answerable();
    CHECK(quarter.train.size() == 1000);
    CHECK(no_answer == 250);

    CHECK_THROWS_AS(synthesize_gold_dataset(w, {1, 0, 0}, 100000, 0.0, 1), CapacityError);
    CHECK_THROWS_AS(synthesize_gold_dataset(w, {0.5, 0.2, 0.2}, 10, 0.0, 1), ConfigError);
  }

  TEST_CASE("gold examples are valid, unique, and split by document") {
    auto c = testing::small_world_config();
    c.n_documents = 120;
    const World w = build_world(c, 6);
    const auto g = synthesize_gold_dataset(w, {0.7, 0.15, 0.15}, 600, 0.25, 3);
    CHECK(g.train.size() == 420);
    CHECK(g.dev.size() == 90);
    CHECK(g.test.size() == 90);
    std::set<std::string> ids;
    for (const auto* split : {&g.train, &g.dev, &g.test}) {
      for (const auto& e : *split) {
        CHECK_NOTHROW(validate(e));
        CHECK(ids.insert(e.example_id).second);
        CHECK(e.source == Source::gold);
        if (!e.answerable()) {
          // The question belongs to another paragraph of the same document.
          const auto& doc = w.document(document_of(e));
          CHECK(e.context == doc.paragraphs[static_cast<std::size_t>(paragraph_of(e))].tokens);
        }
      }
    }
    const auto train_docs = documents_of(g.train), dev_docs = documents_of(g.dev), test_docs = documents_of(g.test);
    for (const auto& d : dev_docs) CHECK_FALSE(train_docs.contains(d));
    for (const auto& d : test_docs) CHECK_FALSE(train_docs.contains(d));
    for (const auto& d : test_docs) CHECK_FALSE(dev_docs.contains(d));
  }

  TEST_CASE("gold regeneration is deterministic") {
    const World w = build_world(testing::small_world_config(), 8);
    const auto a = synthesize_gold_dataset(w, {0.8, 0.1, 0.1}, 100, 0.25, 9);
    const auto b = synthesize_gold_dataset(w, {0.8, 0.1, 0.1}, 100, 0.25, 9);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(to_json_line(a.train[i]) == to_json_line(b.train[i]));
  }

  TEST_CASE("question templates only use in-vocabulary tokens") {
    const World w = build_world(testing::small_world_config(), 10);
    const Vocabulary v = w.make_vocabulary();
    for (std::size_t f = 0; f < std::min<std::size_t>(w.facts.size(), 50); ++f) {
      for (int t = 0; t < w.config.templates_per_relation; ++t) {
        for (const auto& tok : render_question(w, w.facts[f], t).tokens) CHECK(v.contains(tok));
      }
    }
  }
}
