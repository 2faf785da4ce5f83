#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "synmrc/harness.hpp"
#include "synmrc/report.hpp"

using namespace synmrc;
namespace fs = std::filesystem;

namespace {

// One tiny pipeline shared by the structural tests.
struct TinyRun {
  ExperimentConfig config;
  std::unique_ptr<Pipeline> pipeline;

  TinyRun() : config(oracles::tiny_experiment_config(testing::scratch_dir("harness_tiny"))) {
    pipeline = std::make_unique<Pipeline>(config, [](const std::string&) {});
    for (auto k : all_experiments()) pipeline->run(k);
  }
};

TinyRun& tiny() {
  static TinyRun run;
  return run;
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::set<std::string> condition_names(const ComparisonReport& r) {
  std::set<std::string> out;
  for (const auto& c : r.conditions) out.insert(c.condition);
  return out;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("table rows: conditions x splits x (seeds + aggregate)") {
    auto& t = tiny();
    for (auto k : all_experiments()) {
      const auto& r = t.pipeline->run(k);
      const auto csv = read_file(t.pipeline->experiment_dir(k) / "table.csv");
      CHECK(line_count(csv) == 1 + r.conditions.size() * 2 * (t.config.seeds.size() + 1));
    }
  }

  TEST_CASE("bins report structure") {
    auto& t = tiny();
    const auto& r = t.pipeline->run(ExperimentKind::bins);
    CHECK(r.has_condition(labels::gold_only));
    CHECK(r.has_condition(labels::full_pool));
    std::set<std::string> series;
    for (const auto& s : r.series) series.insert(s.name);
    CHECK(series.size() == t.config.bin_sizes.size());
    for (int b : t.config.bin_sizes) CHECK(series.contains("b" + std::to_string(b)));
    for (int b : t.config.bin_sizes) {
      if (b == t.config.pool_answerable) continue;
      for (int i = 1; i <= t.config.pool_answerable / b; ++i) CHECK(r.has_condition(labels::bin(b, i)));
    }
    CHECK(fs::exists(t.pipeline->experiment_dir(ExperimentKind::bins) / "series.csv"));
  }

  TEST_CASE("curriculum conditions share one multiset") {
    auto& t = tiny();
    const auto& r = t.pipeline->run(ExperimentKind::curriculum);
    CHECK(condition_names(r) == std::set<std::string>{"plain_cl", "cl_switch_5", "random"});
    for (int seed : t.config.seeds) {
      const auto s = "/s" + std::to_string(seed);
      const auto& plain = r.facts.at("multiset/plain_cl" + s);
      CHECK(r.facts.at("multiset/cl_switch_5" + s) == plain);
      CHECK(r.facts.at("multiset/random" + s) == plain);
    }
  }

  TEST_CASE("one frozen teacher per seed across student conditions") {
    auto& t = tiny();
    for (auto k : {ExperimentKind::distill_lambda, ExperimentKind::distill_rc_vs_raw, ExperimentKind::distill_scale}) {
      const auto& r = t.pipeline->run(k);
      for (std::size_t i = 0; i < t.config.seeds.size(); ++i) {
        const std::string expected = t.pipeline->teacher(t.config.seeds[i]).content_hash();
        for (const auto& c : r.conditions) {
          for (const auto& stage : c.runs.at(i).lineage) {
            const auto at = stage.objective.find("teacher=");
            if (at == std::string::npos) continue;
            CHECK(stage.objective.substr(at + 8, expected.size()) == expected);
          }
        }
      }
    }
    const auto& scale = t.pipeline->run(ExperimentKind::distill_scale);
    for (int m : t.config.distill_multiples) {
      const auto& runs = scale.condition(labels::distill_then_gold(m)).runs;
      REQUIRE_FALSE(runs.empty());
      REQUIRE(runs[0].lineage.size() == 2);
      CHECK(runs[0].lineage[1].dataset == "gold_train");
    }
  }

  TEST_CASE("lambda grid and verdicts") {
    auto& t = tiny();
    const auto& r = t.pipeline->run(ExperimentKind::distill_lambda);
    for (double l : t.config.lambdas) CHECK(r.has_condition(labels::lambda(l)));
    CHECK(r.has_condition(labels::teacher));
    CHECK(r.has_condition(labels::student_gold_mle));
    const auto& scale = t.pipeline->run(ExperimentKind::distill_scale);
    for (const char* name : {"overall_delta/dev", "overall_delta/test"}) {
      const auto& v = scale.verdict(name);
      CHECK(std::isfinite(v.mean_difference));
      CHECK(v.rhs == labels::teacher);
    }
  }

  TEST_CASE("verdicts cite existing aggregate rows and use the pooled std") {
    auto& t = tiny();
    for (auto k : all_experiments()) {
      const auto& r = t.pipeline->run(k);
      for (const auto& v : r.verdicts) {
        const auto a = r.aggregate(v.lhs, v.split), b = r.aggregate(v.rhs, v.split);
        CHECK(v.mean_difference == doctest::Approx(a.overall_f1.mean - b.overall_f1.mean).epsilon(1e-12));
        CHECK(v.pooled_std == doctest::Approx(std::sqrt((a.overall_f1.std * a.overall_f1.std +
                                                         b.overall_f1.std * b.overall_f1.std) / 2.0)).epsilon(1e-12));
        CHECK(v.cites == std::vector<std::string>{v.lhs + "@" + v.split, v.rhs + "@" + v.split});
      }
    }
  }

  TEST_CASE("reports rebuild from persisted runs and re-emit identically") {
    auto& t = tiny();
    for (auto k : all_experiments()) {
      const auto dir = t.pipeline->experiment_dir(k);
      const auto& original = t.pipeline->run(k);
      const auto loaded = load_report(dir, t.config.output_dir / "runs");
      CHECK(report_json(loaded) == report_json(original));
      const auto copy = testing::scratch_dir("harness_reemit") / std::string(to_string(k));
      emit_reports(loaded, copy);
      for (const char* f : {"table.csv", "verdicts.csv", "series.csv", "report.json"}) {
        CHECK(read_file(copy / f) == read_file(dir / f));
      }
    }
  }

  TEST_CASE("unwritable report directory is an I/O error") {
    auto& t = tiny();
    const auto dir = testing::scratch_dir("harness_io");
    std::ofstream(dir / "plain_file") << "x";
    CHECK_THROWS_AS(emit_reports(t.pipeline->run(ExperimentKind::bins), dir / "plain_file" / "sub"), IoError);
  }

  TEST_CASE("insufficient pool is a configuration error") {
    auto c = oracles::tiny_experiment_config(testing::scratch_dir("harness_pool"));
    c.pool_answerable = 100000;
    c.bin_sizes = {50000, 100000};
    Pipeline p(c, [](const std::string&) {});
    CHECK_THROWS_AS(p.run(ExperimentKind::bins), ConfigError);
  }

  TEST_CASE("every stage reruns byte-identically") {
    const auto dir = testing::scratch_dir("harness_determinism");
    const auto o = oracles::determinism_check(oracles::tiny_experiment_config(dir), dir);
    INFO(o.detail);
    CHECK(o.pass);
  }
}
