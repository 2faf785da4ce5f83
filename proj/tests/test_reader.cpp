#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "synmrc/reader.hpp"

using namespace synmrc;

namespace {

InputSequence sample_input(const Vocabulary& v, int q_len, int c_len) {
  Tokens q, c;
  for (int i = 0; i < q_len; ++i) q.push_back("w" + std::to_string(i));
  for (int i = 0; i < c_len; ++i) c.push_back("w" + std::to_string(10 + i % 10));
  return tokenize_pair(v, q, c);
}

}  // namespace

TEST_SUITE("reader") {
  TEST_CASE("input layout") {
    const auto v = testing::word_vocabulary(30);
    const auto in = sample_input(*v, 3, 10);
    CHECK(in.length() == 15);
    CHECK(in.tokens[0] == Vocabulary::cls_id);
    CHECK(in.tokens[static_cast<std::size_t>(in.sep_position())] == Vocabulary::sep_id);
    for (int i = 0; i < 10; ++i) {
      CHECK(in.to_position(i) == 2 + 3 + i);
      CHECK(v->token(in.tokens[static_cast<std::size_t>(in.to_position(i))]) == "w" + std::to_string(10 + i));
    }
    CHECK(in.allowed(0));
    CHECK_FALSE(in.allowed(1));
    CHECK_FALSE(in.allowed(in.sep_position()));
    CHECK(in.segment(0) == 0);
    CHECK(in.segment(1) == 1);
    CHECK(in.segment(in.sep_position()) == 0);
    CHECK(in.segment(in.to_position(0)) == 2);

    const auto overlap = tokenize_pair(*v, {"w5"}, {"w4", "w5"});
    CHECK(overlap.segment(overlap.to_position(0)) == 2);
    CHECK(overlap.segment(overlap.to_position(1)) == 3);

    CHECK_THROWS_AS(tokenize_pair(*v, {"nope"}, {"w1"}), VocabularyError);
    Tokens long_context(kMaxInputLength, "w1");
    const auto too_long = tokenize_pair(*v, {"w1"}, long_context);
    CHECK_THROWS_AS(forward(init_params(Capacity::student, v, 1), too_long), InputLengthError);
  }

  TEST_CASE("forward distributions are normalized, masked and deterministic") {
    const auto v = testing::word_vocabulary(20);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      const auto params = testing::random_params(static_cast<Capacity>(i % 3), v, static_cast<std::uint64_t>(i), 0.5);
      const auto e = testing::random_example(rng, 20, 3 + static_cast<int>(rng.below(30)), 0.3, "f");
      const auto in = tokenize_pair(*v, e.question, e.context);
      const auto z = forward(params, in);
      CHECK(std::abs(z.start.sum() - 1.0) < 1e-6);
      CHECK(std::abs(z.end.sum() - 1.0) < 1e-6);
      for (int pos = 0; pos < in.length(); ++pos) {
        if (!in.allowed(pos)) {
          CHECK(z.start(pos) == 0.0);
          CHECK(z.end(pos) == 0.0);
        }
      }
      const auto again = forward(params, in);
      CHECK(again.start == z.start);
      CHECK(again.end == z.end);
    }
  }

  TEST_CASE("MLE loss closed forms") {
    const auto v = testing::word_vocabulary(20);
    auto zero = init_params(Capacity::student, v, 1).zeros_like();
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      const auto e = testing::random_example(rng, 20, 4 + i, 0.5, "u");
      const auto enc = encode(*v, e);
      const int m = 1 + enc.input.context_length;
      const std::vector<EncodedExample> batch{enc};
      CHECK(mle_loss_and_grad(zero, batch, nullptr) == doctest::Approx(2.0 * std::log(m)).epsilon(1e-12));
    }
    // All mass on CLS: a NoAnswer example costs nothing.
    auto cls = zero;
    cls[Tensor::null_bias].setConstant(1000.0);
    Example none = testing::random_example(rng, 20, 8, 1.0, "n");
    CHECK(mle_loss_and_grad(cls, std::vector<Example>{none}, nullptr) == 0.0);
  }

  TEST_CASE("MLE gradient matches finite differences") {
    const auto o = oracles::gradient_check(10, 7);
    INFO(o.detail);
    CHECK(o.pass);
  }

  TEST_CASE("span inference") {
    const auto v = testing::word_vocabulary(20);
    const auto in = sample_input(*v, 2, 6);
    SpanDistributions z{Eigen::VectorXd::Zero(in.length()), Eigen::VectorXd::Zero(in.length())};
    z.start(in.to_position(3)) = 1.0;
    z.end(in.to_position(3)) = 1.0;
    const auto p = predict_from(z, in, 1e300);
    REQUIRE(p.answer);
    CHECK(*p.answer == Span{3, 4});

    SpanDistributions null{Eigen::VectorXd::Zero(in.length()), Eigen::VectorXd::Zero(in.length())};
    null.start(0) = 1.0;
    null.end(0) = 1.0;
    const auto q = predict_from(null, in, -std::numeric_limits<double>::infinity());
    CHECK_FALSE(q.answer);
    CHECK(q.null_score == 0.0);

    const auto o = oracles::span_search_check(50, 8);
    INFO(o.detail);
    CHECK(o.pass);
  }

  TEST_CASE("answers never exceed the maximum length") {
    const auto v = testing::word_vocabulary(20);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      const auto params = testing::random_params(Capacity::student, v, static_cast<std::uint64_t>(100 + i), 1.0);
      const auto e = testing::random_example(rng, 20, 30, 0.0, "m");
      const auto p = predict(params, tokenize_pair(*v, e.question, e.context), -1e300);
      REQUIRE(p.answer);
      CHECK(p.answer->length() >= 1);
      CHECK(p.answer->length() <= kMaxAnswerLength);
    }
  }

  TEST_CASE("initialization") {
    const auto v = testing::word_vocabulary(50);
    const auto a = init_params(Capacity::teacher, v, 3), b = init_params(Capacity::teacher, v, 3);
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash() != init_params(Capacity::teacher, v, 4).content_hash());
    CHECK(a.all_finite());
    const auto s = init_params(Capacity::student, v, 3);
    CHECK(static_cast<double>(a.param_count()) / static_cast<double>(s.param_count()) >= 3.0);
    CHECK(a[Tensor::embedding].rows() == v->size());
    CHECK(a[Tensor::segment].rows() == kSegmentCount);
  }

  TEST_CASE("checkpoints round trip") {
    const auto v = testing::word_vocabulary(10);
    const auto p = testing::random_params(Capacity::student, v, 5);
    const auto dir = testing::scratch_dir("reader_ckpt");
    const auto path = save_checkpoint(dir, p, {"gold:mle"});
    CHECK(path.filename() == p.content_hash() + ".json");
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.params.content_hash() == p.content_hash());
    CHECK(loaded.lineage == std::vector<std::string>{"gold:mle"});
    CHECK(loaded.params.vocabulary->tokens() == v->tokens());
    for (std::size_t i = 0; i < kTensorCount; ++i) CHECK(loaded.params.tensors[i] == p.tensors[i]);
  }
}
