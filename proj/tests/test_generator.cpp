#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "synmrc/generator.hpp"

using namespace synmrc;

namespace {

World world_with(int facts_per_paragraph, int templates, std::uint64_t seed) {
  auto c = testing::small_world_config();
  c.min_facts_per_paragraph = facts_per_paragraph;
  c.max_facts_per_paragraph = facts_per_paragraph;
  c.templates_per_relation = templates;
  return build_world(c, seed);
}

Example corruptible_example(int i) {
  Example e;
  e.example_id = "syn/d0/p0/" + std::to_string(i);
  for (int t = 0; t < 20; ++t) e.context.push_back("w" + std::to_string(t));
  e.question = {"w1", "w2"};
  e.answer = Span{4, 6};
  e.sentence_span = Span{0, 20};
  return e;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("one fact and one template give one certain candidate") {
    const World w = world_with(1, 1, 1);
    const auto d = candidate_distribution(w.documents[0].paragraphs[0], w);
    REQUIRE(d.candidates.size() == 1);
    CHECK(d.weights(0) == doctest::Approx(1.0));
  }

  TEST_CASE("two facts with three templates each give six candidates") {
    const World w = world_with(2, 3, 2);
    const auto d = candidate_distribution(w.documents[0].paragraphs[0], w);
    CHECK(d.candidates.size() == 6);
  }

  TEST_CASE("candidate weights are normalized and candidates are consistent") {
    const World w = build_world(testing::small_world_config(), 3);
    int checked = 0;
    for (const auto& doc : w.documents) {
      for (const auto& p : doc.paragraphs) {
        if (checked == 100) break;
        const auto d = candidate_distribution(p, w);
        if (d.empty()) continue;
        ++checked;
        CHECK(d.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (const auto& c : d.candidates) CHECK(c.sentence_span.contains(c.answer_span));
      }
    }
    CHECK(checked == 100);
  }

  TEST_CASE("a paragraph without facts has no candidates") {
    const World w = build_world(testing::small_world_config(), 4);
    Paragraph p;
    p.tokens = {w.vocabulary[2], w.vocabulary[3]};
    p.sentences.push_back({Span{0, 2}, std::nullopt, {}, {}});
    CHECK(candidate_distribution(p, w).empty());
  }

  TEST_CASE("k = 1 is argmax") {
    Eigen::Vector3d d(0.5, 0.3, 0.2);
    Rng rng(1);
    for (double p : {0.01, 0.5, 1.0}) {
      for (int i = 0; i < 200; ++i) CHECK(top_p_top_k_sample(d, p, 1, rng) == 0);
    }
  }

  TEST_CASE("uniform over four with p = 0.6 keeps three entries equally") {
    Eigen::Vector4d d = Eigen::Vector4d::Constant(0.25);
    CHECK(top_p_top_k_support(d, 0.6, 10) == std::vector<int>{0, 1, 2});
    Rng rng(2);
    std::array<long, 4> counts{};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(top_p_top_k_sample(d, 0.6, 10, rng))];
    CHECK(counts[3] == 0);
    double chi2 = 0;
    for (int i = 0; i < 3; ++i) chi2 += std::pow(counts[static_cast<std::size_t>(i)] - draws / 3.0, 2) / (draws / 3.0);
    CHECK(oracles::chi_square_p_value(chi2, 2) > 0.01);
  }

  TEST_CASE("truncation rules") {
    Eigen::VectorXd d(5);
    d << 0.1, 0.4, 0.05, 0.3, 0.15;
    CHECK(top_p_top_k_support(d, 1.0, 10) == std::vector<int>{1, 3, 4, 0, 2});
    CHECK(top_p_top_k_support(d, 1.0, 2) == std::vector<int>{1, 3});
    CHECK(top_p_top_k_support(d, 0.7, 10) == std::vector<int>{1, 3});
    CHECK(top_p_top_k_support(d, 0.71, 10) == std::vector<int>{1, 3, 4});
    Rng rng(3);
    Eigen::Vector2d bad(0.5, 0.6);
    CHECK_THROWS_AS(top_p_top_k_sample(bad, 0.9, 10, rng), InputError);
    Eigen::Vector2d ok(0.5, 0.5);
    CHECK_THROWS_AS(top_p_top_k_sample(ok, 0.0, 10, rng), InputError);
    CHECK_THROWS_AS(top_p_top_k_sample(ok, 1.5, 10, rng), InputError);
    CHECK_THROWS_AS(top_p_top_k_sample(ok, 0.9, 0, rng), InputError);
  }

  TEST_CASE("sampling matches the truncated distribution") {
    const auto o = oracles::sampling_check(20, 100000, 5);
    INFO(o.detail);
    CHECK(o.pass);
  }

  TEST_CASE("noise injection") {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      const auto e = corruptible_example(i);
      const auto out = inject_noise(e, 0.0, rng);
      CHECK(to_json_line(out) == to_json_line(e));
      CHECK_FALSE(out.corrupted);
    }
    for (int i = 0; i < 100; ++i) {
      const auto e = corruptible_example(i);
      const auto out = inject_noise(e, 1.0, rng);
      REQUIRE(out.answer);
      CHECK(*out.answer != *e.answer);
      CHECK(out.answer->length() == e.answer->length());
      CHECK(out.corrupted);
      CHECK_NOTHROW(validate(out));
    }
    int corrupted = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) corrupted += inject_noise(corruptible_example(i), 0.3, rng).corrupted;
    CHECK(std::abs(corrupted / static_cast<double>(n) - 0.3) <= 0.02);

    Example tight = corruptible_example(0);
    tight.context = {"a", "b"};
    tight.answer = Span{0, 2};
    tight.sentence_span = Span{0, 2};
    const auto same = inject_noise(tight, 1.0, rng);
    CHECK(same.uncorruptible);
    CHECK(same.answer == tight.answer);
  }

  TEST_CASE("unanswerable pairing") {
    const World w = build_world(testing::small_world_config(), 5);
    Document two = w.documents[0];
    two.paragraphs.resize(2);
    Example e;
    e.example_id = make_example_id("syn", two.doc_id, 0, "0");
    e.context = two.paragraphs[0].tokens;
    e.question = {w.vocabulary[2]};
    e.answer = Span{0, 1};
    e.sentence_span = two.paragraphs[0].sentences[0].span;
    Rng rng(6);
    const auto u = make_unanswerable(e, two, rng);
    CHECK(u.context == two.paragraphs[1].tokens);
    CHECK_FALSE(u.answerable());
    CHECK(paragraph_of(u) == 1);

    Document one = two;
    one.paragraphs.resize(1);
    CHECK_THROWS_AS(make_unanswerable(e, one, rng), PairingError);

    Document four = w.documents[0];
    REQUIRE(four.paragraphs.size() == 4);
    std::map<int, int> chosen;
    const int calls = 1000;
    for (int i = 0; i < calls; ++i) {
      const auto out = make_unanswerable(e, four, rng);
      CHECK_FALSE(out.answerable());
      ++chosen[paragraph_of(out)];
    }
    CHECK_FALSE(chosen.contains(0));
    for (int p = 1; p < 4; ++p) {
      // 3 sigma of a binomial(1000, 1/3).
      CHECK(std::abs(chosen[p] - calls / 3.0) <= 3.0 * std::sqrt(calls * (1.0 / 3.0) * (2.0 / 3.0)));
    }
  }

  TEST_CASE("one context with one candidate yields one example") {
    auto c = testing::small_world_config();
    c.n_documents = 1;
    c.n_unlabeled_documents = 0;
    c.min_facts_per_paragraph = 1;
    c.max_facts_per_paragraph = 1;
    c.templates_per_relation = 1;
    World w = build_world(c, 7);
    w.documents[0].paragraphs.resize(2);
    w.documents[0].paragraphs[1].sentences.clear();  // the second context carries no fact
    GenConfig g;
    g.noise_rate = 0.0;
    g.unanswerable_ratio = 0.0;
    const auto data = generate_corpus(w, g);
    CHECK(data.examples.size() == 1);
    CHECK(data.answerable_count() == 1);
  }

  TEST_CASE("corpus properties") {
    const World w = build_world(testing::small_world_config(), 8);
    GenConfig g;
    g.seed = 9;
    const auto data = generate_corpus(w, g);
    CHECK(data.answerable_count() > 0);
    CHECK(static_cast<double>(data.unanswerable_count()) ==
          doctest::Approx(0.25 * static_cast<double>(data.answerable_count())).epsilon(0.02));
    std::set<std::string> ids, triples;
    std::map<std::string, int> per_context;
    for (const auto& e : data.examples) {
      CHECK(ids.insert(e.example_id).second);
      CHECK(triples.insert(triple_key(e)).second);
      CHECK(e.source == Source::synthetic);
      CHECK(w.document(document_of(e)).unlabeled);
      CHECK_NOTHROW(validate(e));
      if (e.answerable()) ++per_context[document_of(e) + "/" + std::to_string(paragraph_of(e))];
    }
    for (const auto& [ctx, n] : per_context) CHECK(n <= g.examples_per_context);

    // Regeneration is byte-identical.
    const auto again = generate_corpus(w, g);
    REQUIRE(again.examples.size() == data.examples.size());
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
      CHECK(to_json_line(again.examples[i]) == to_json_line(data.examples[i]));
    }
    GenConfig bad = g;
    bad.top_k = 0;
    CHECK_THROWS_AS(generate_corpus(w, bad), ConfigError);
  }

  TEST_CASE("defaults") {
    const GenConfig g;
    CHECK(g.top_p == 0.9);
    CHECK(g.top_k == 10);
    CHECK(g.examples_per_context == 5);
    CHECK(g.unanswerable_ratio == 0.25);
  }
}
