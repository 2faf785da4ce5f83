#include <set>

#include "doctest.h"
#include "support.hpp"
#include "synmrc/evaluation.hpp"
#include "synmrc/training.hpp"

using namespace synmrc;

namespace {

// The answer is always the single occurrence of w1 and the question is w0,
// so a reader can separate every example.
std::vector<Example> separable_examples(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    Example e;
    e.example_id = "sep/d0/p0/" + std::to_string(i);
    const int len = 6 + static_cast<int>(rng.below(8));
    for (int t = 0; t < len; ++t) e.context.push_back("w" + std::to_string(2 + rng.below(18)));
    const int at = static_cast<int>(rng.below(static_cast<std::size_t>(len)));
    e.context[static_cast<std::size_t>(at)] = "w1";
    e.question = {"w0"};
    e.answer = Span{at, at + 1};
    e.sentence_span = Span{0, len};
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto v = testing::word_vocabulary(20);
    const auto p = init_params(Capacity::student, v, 1);
    const auto data = separable_examples(40, 2);
    const auto r = train_mle(p, data, {3, 8, 0.0, ShuffleMode::random, 3});
    CHECK(r.params.content_hash() == p.content_hash());
    CHECK(r.curve.epoch_loss.size() == 3);
    CHECK(r.curve.steps == 15);
  }

  TEST_CASE("separable data is learned") {
    const auto v = testing::word_vocabulary(20);
    const auto data = separable_examples(50, 4);
    const auto r = train_mle(init_params(Capacity::teacher, v, 5), data, {60, 10, 0.1, ShuffleMode::random, 6});
    const double f1 = best_threshold(r.params, data).second.overall_f1;
    CHECK(f1 >= 0.98);
    CHECK(r.curve.epoch_loss.back() < r.curve.epoch_loss.front());
  }

  TEST_CASE("same seed gives the same checkpoint") {
    const auto v = testing::word_vocabulary(20);
    const auto data = separable_examples(30, 7);
    const TrainSchedule s{2, 8, 0.05, ShuffleMode::random, 8};
    const auto a = train_mle(init_params(Capacity::student, v, 9), data, s);
    const auto b = train_mle(init_params(Capacity::student, v, 9), data, s);
    CHECK(a.params.content_hash() == b.params.content_hash());
    auto s2 = s;
    s2.seed = 10;
    CHECK(train_mle(init_params(Capacity::student, v, 9), data, s2).params.content_hash() != a.params.content_hash());
  }

  TEST_CASE("batch order") {
    const auto v = testing::word_vocabulary(4);
    auto p = init_params(Capacity::student, v, 1);
    std::vector<std::vector<std::size_t>> fixed, shuffled;
    auto record = [](std::vector<std::vector<std::size_t>>& log) {
      return [&log](std::span<const std::size_t> items, ReaderParams& grad) {
        if (log.empty() || log.back().size() == 10) log.emplace_back();
        log.back().insert(log.back().end(), items.begin(), items.end());
        grad.scale(0.0);
        return 1.0;
      };
    };
    run_sgd(p, 10, {2, 3, 0.1, ShuffleMode::fixed_order, 0}, record(fixed));
    run_sgd(p, 10, {2, 3, 0.1, ShuffleMode::random, 11}, record(shuffled));
    const std::vector<std::size_t> identity{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    REQUIRE(fixed.size() == 2);
    CHECK(fixed[0] == identity);
    CHECK(fixed[1] == identity);
    REQUIRE(shuffled.size() == 2);
    for (const auto& epoch : shuffled) {
      CHECK(std::set<std::size_t>(epoch.begin(), epoch.end()).size() == 10);
    }
    CHECK(shuffled[0] != shuffled[1]);
  }

  TEST_CASE("divergence aborts") {
    const auto v = testing::word_vocabulary(4);
    auto p = init_params(Capacity::student, v, 1);
    CHECK_THROWS_AS(run_sgd(p, 4, {1, 2, 0.1, ShuffleMode::random, 0},
                            [](std::span<const std::size_t>, ReaderParams&) { return std::nan(""); }),
                    DivergenceError);
    CHECK_THROWS_AS(run_sgd(p, 0, {1, 2, 0.1, ShuffleMode::random, 0},
                            [](std::span<const std::size_t>, ReaderParams&) { return 0.0; }),
                    InputError);
    CHECK_THROWS_AS(validate(TrainSchedule{0, 2, 0.1, ShuffleMode::random, 0}), ConfigError);
  }

  TEST_CASE("two-stage lineage") {
    const auto v = testing::word_vocabulary(20);
    const auto syn = separable_examples(20, 12), gold = separable_examples(10, 13);
    TwoStageSchedules s;
    s.pretrain = {1, 8, 0.05, ShuffleMode::random, 1};
    s.finetune = {2, 8, 0.05, ShuffleMode::random, 2};
    const auto r = pretrain_then_finetune(init_params(Capacity::student, v, 3), {"syn", syn}, {"gold", gold}, s, "x/y/s0");
    REQUIRE(r.record.lineage.size() == 2);
    CHECK(r.record.lineage[0].dataset == "syn");
    CHECK(r.record.lineage[1].dataset == "gold");
    CHECK(r.record.lineage[0].schedule.epochs == 1);
    CHECK(r.record.lineage[1].schedule.epochs == 2);
    CHECK(r.record.curves.size() == 2);
    CHECK(r.record.checkpoint_hash == r.params.content_hash());

    // Equivalent to two consecutive plain runs.
    const auto a = train_mle(init_params(Capacity::student, v, 3), syn, s.pretrain);
    const auto b = train_mle(a.params, gold, s.finetune);
    CHECK(b.params.content_hash() == r.params.content_hash());

    const auto same = pretrain_then_finetune(init_params(Capacity::student, v, 3), {"gold", gold}, {"gold", gold}, s, "g");
    CHECK(same.record.lineage.size() == 2);
  }

  TEST_CASE("run records round trip") {
    RunRecord r;
    r.run_id = "bins/gold_only/s0";
    r.seed = 42;
    r.checkpoint_hash = "abc";
    r.lineage.push_back({"gold_train", "mle", {20, 32, 0.05, ShuffleMode::random, 7}, 2000});
    MetricsReport m;
    m.overall_f1 = 0.8125;
    m.split = "dev";
    m.threshold = -std::numeric_limits<double>::infinity();
    m.n_examples = 400;
    r.metrics["dev"] = m;
    r.curves = {{1.5, 1.25}};
    r.wall_time_seconds = 3.5;
    const auto text = run_record_to_json(r);
    const auto back = run_record_from_json(text);
    CHECK(run_record_to_json(back) == text);
    CHECK(back.metrics.at("dev").threshold == -std::numeric_limits<double>::infinity());
    const auto dir = testing::scratch_dir("training_runs");
    const auto path = save_run_record(dir, r);
    CHECK(path == dir / "bins/gold_only/s0.json");
    CHECK(run_record_to_json(load_run_record(path)) == text);
  }
}
