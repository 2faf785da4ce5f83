#include "synmrc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "json.hpp"
#include "synmrc/report.hpp"

namespace synmrc {

// ----------------------------- report accessors -----------------------------

const ConditionResult& ComparisonReport::condition(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.condition == name) return c;
  }
  throw InputError("report " + experiment + " has no condition " + name);
}

bool ComparisonReport::has_condition(const std::string& name) const {
  return std::any_of(conditions.begin(), conditions.end(), [&](const ConditionResult& c) { return c.condition == name; });
}

std::vector<SeedReport> ComparisonReport::seed_reports(const std::string& name, const std::string& split) const {
  const auto& c = condition(name);
  std::vector<SeedReport> out;
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    const auto it = c.runs[i].metrics.find(split);
    if (it == c.runs[i].metrics.end()) throw InputError("run " + c.runs[i].run_id + " lacks split " + split);
    out.push_back({name, seeds.at(i), it->second});
  }
  return out;
}

AggregateReport ComparisonReport::aggregate(const std::string& name, const std::string& split) const {
  const auto reports = seed_reports(name, split);
  return aggregate_seeds(reports);
}

const Verdict& ComparisonReport::verdict(const std::string& name) const {
  for (const auto& v : verdicts) {
    if (v.name == name) return v;
  }
  throw InputError("report " + experiment + " has no verdict " + name);
}

Verdict compare(const ComparisonReport& report, std::string name, const std::string& lhs, const std::string& rhs,
                const std::string& split) {
  const auto a = report.aggregate(lhs, split);
  const auto b = report.aggregate(rhs, split);
  Verdict v;
  v.name = std::move(name);
  v.split = split;
  v.lhs = lhs;
  v.rhs = rhs;
  v.mean_difference = a.overall_f1.mean - b.overall_f1.mean;
  v.pooled_std = std::sqrt(0.5 * (a.overall_f1.std * a.overall_f1.std + b.overall_f1.std * b.overall_f1.std));
  v.cites = {lhs + "@" + split, rhs + "@" + split};
  return v;
}

std::string multiset_hash(std::span<const Example> examples) {
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& e : examples) ids.push_back(e.example_id);
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& id : ids) h = fnv1a64(id + "\n", h);
  return hex64(h);
}

namespace labels {

namespace {
std::string format(const char* pattern, auto... args) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}
}  // namespace

std::string bin(int size, int index) { return format("b%05d_bin%02d", size, index); }
std::string lambda(double value) { return format("lambda_%.2f", value); }
std::string distill_raw(int multiple) { return format("raw_x%d", multiple); }
std::string distill_rc(int multiple) { return format("rc_x%d", multiple); }
std::string distill_synthetic(int multiple) { return format("syn_x%d", multiple); }
std::string distill_then_gold(int multiple) { return format("syn_x%d_then_gold", multiple); }

}  // namespace labels

// ----------------------------- pipeline -----------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Conditions in insertion order, one run appended per seed.
class ConditionTable {
 public:
  void add(const std::string& condition, RunRecord record) {
    auto it = std::find_if(rows_.begin(), rows_.end(), [&](const ConditionResult& c) { return c.condition == condition; });
    if (it == rows_.end()) {
      rows_.push_back({condition, {}});
      it = rows_.end() - 1;
    }
    it->runs.push_back(std::move(record));
  }
  std::vector<ConditionResult> take() { return std::move(rows_); }

 private:
  std::vector<ConditionResult> rows_;
};

std::vector<Example> concat(std::span<const Example> a, std::span<const Example> b) {
  std::vector<Example> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Fingerprint of every setting except the experiment selector and the output
/// location, so persisted runs are only reused under the same configuration.
std::string config_fingerprint(const ExperimentConfig& config) {
  auto kv = to_key_values(config);
  kv.set("experiment", "");
  kv.set("output_dir", "");
  return hex64(fnv1a64(kv.dump()));
}

Series series_over(const ComparisonReport& report, std::string name, const std::string& split,
                   const std::vector<std::pair<double, std::string>>& points) {
  Series s{std::move(name), split, {}, {}, {}, {}};
  for (const auto& [x, condition] : points) {
    const auto agg = report.aggregate(condition, split);
    s.x.push_back(x);
    s.mean.push_back(agg.overall_f1.mean);
    s.std.push_back(agg.overall_f1.std);
    s.conditions.push_back(condition);
  }
  return s;
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, Logger log) : config_(std::move(config)), log_(std::move(log)) {
  validate(config_);
  if (!log_) log_ = [](const std::string& m) { std::clog << m << std::endl; };
}

void Pipeline::log(const std::string& message) const { log_(message); }

std::uint64_t Pipeline::seed_root(int seed) const {
  return derive_seed(config_.seed, "seed/" + std::to_string(seed));
}

std::filesystem::path Pipeline::experiment_dir(ExperimentKind kind) const {
  return config_.output_dir / std::string(to_string(kind));
}

const SharedData& Pipeline::shared() {
  if (shared_) return *shared_;
  const auto t0 = std::chrono::steady_clock::now();
  SharedData d;
  d.world = config_.world_path ? world_from_json(read_file(*config_.world_path))
                               : build_world(config_.world, derive_seed(config_.seed, "world"));
  d.vocabulary = std::make_shared<const Vocabulary>(d.world.make_vocabulary());

  const auto& g = config_.gold;
  const double total = g.train + g.dev + g.test;
  d.gold = synthesize_gold_dataset(d.world, {g.train / total, g.dev / total, g.test / total}, g.train + g.dev + g.test,
                                   g.unanswerable_ratio, derive_seed(config_.seed, "gold"));

  d.raw = generate_corpus(d.world, config_.gen);
  log("[shared] synthetic corpus: " + std::to_string(d.raw.answerable_count()) + " answerable, " +
      std::to_string(d.raw.unanswerable_count()) + " unanswerable");

  auto checker = train_mle(init_params(Capacity::checker, d.vocabulary, derive_seed(config_.seed, "checker")),
                           d.gold.train, config_.schedule(config_.checker_epochs, derive_seed(config_.seed, "checker-train")));
  d.checker = std::move(checker.params);
  std::tie(d.checker_threshold, d.checker_dev) = best_threshold(d.checker, d.gold.dev);
  d.filtered = roundtrip_filter(d.raw, d.checker, d.checker_threshold);

  std::vector<Example> kept_answerable, kept_unanswerable;
  for (const auto& e : d.filtered.kept.examples) (e.answerable() ? kept_answerable : kept_unanswerable).push_back(e);
  const auto sample = [&](const std::vector<Example>& from, int count, const char* tag) {
    if (static_cast<std::size_t>(count) > from.size()) {
      throw ConfigError("roundtrip-consistent set has " + std::to_string(from.size()) + " " + tag + " examples, " +
                        std::to_string(count) + " requested");
    }
    Rng rng(derive_seed(config_.seed, std::string("pool/") + tag));
    auto idx = rng.sample_without_replacement(from.size(), static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    std::vector<Example> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(from[i]);
    return out;
  };
  d.pool_answerable = sample(kept_answerable, config_.pool_answerable, "answerable");
  d.pool_unanswerable = sample(kept_unanswerable, config_.pool_unanswerable, "unanswerable");

  const auto dir = config_.output_dir / "shared";
  write_file(dir / "world.json", world_to_json(d.world));
  write_jsonl(dir / "gold_train.jsonl", d.gold.train);
  write_jsonl(dir / "gold_dev.jsonl", d.gold.dev);
  write_jsonl(dir / "gold_test.jsonl", d.gold.test);
  write_jsonl(dir / "synthetic_raw.jsonl", d.raw.examples);
  write_jsonl(dir / "synthetic_rc.jsonl", d.filtered.kept.examples);
  write_jsonl(dir / "pool.jsonl", concat(d.pool_answerable, d.pool_unanswerable));
  save_checkpoint(checkpoint_dir(), d.checker, {"checker", "gold_train"});

  char buf[200];
  std::snprintf(buf, sizeof buf, "[shared] checker dev F1 %.4f at tau %.3f; kept %zu of %zu (%.1fs)",
                d.checker_dev.overall_f1, d.checker_threshold, d.filtered.kept.examples.size(), d.raw.examples.size(),
                seconds_since(t0));
  log(buf);
  shared_ = std::move(d);
  return *shared_;
}

RunRecord Pipeline::finish(ExperimentKind kind, RunRecord record, const ReaderParams& params) {
  const auto& d = shared();
  const auto report = evaluate_dev_test(params, d.gold.dev, d.gold.test);
  record.metrics["dev"] = report.dev;
  record.metrics["test"] = report.test;
  record.checkpoint_hash = params.content_hash();
  std::vector<std::string> lineage;
  for (const auto& s : record.lineage) lineage.push_back(s.dataset + ":" + s.objective);
  save_checkpoint(checkpoint_dir(), params, lineage);
  save_run_record(config_.output_dir / "runs", record);
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %s: dev %.4f test %.4f (%.1fs)", std::string(to_string(kind)).c_str(),
                record.run_id.c_str(), report.dev.overall_f1, report.test.overall_f1, record.wall_time_seconds);
  log(buf);
  return record;
}

const RunResult& Pipeline::gold_reader(int seed) {
  if (const auto it = gold_readers_.find(seed); it != gold_readers_.end()) return it->second;
  const auto& d = shared();
  const auto root = seed_root(seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto init = init_params(Capacity::teacher, d.vocabulary, derive_seed(root, "reader-init"));
  const auto schedule = config_.schedule(config_.gold_epochs, derive_seed(root, "finetune"));
  auto trained = train_mle(init, d.gold.train, schedule);
  RunResult r{{}, std::move(trained.params)};
  r.record.run_id = "bins/" + std::string(labels::gold_only) + "/s" + std::to_string(seed);
  r.record.seed = init.seed;
  r.record.lineage.push_back({"gold_train", "mle", schedule, d.gold.train.size()});
  r.record.curves.push_back(trained.curve.epoch_loss);
  r.record.wall_time_seconds = seconds_since(t0);
  r.record = finish(ExperimentKind::bins, std::move(r.record), r.params);
  return gold_readers_.emplace(seed, std::move(r)).first->second;
}

const ComparisonReport& Pipeline::run(ExperimentKind kind) {
  if (const auto it = reports_.find(kind); it != reports_.end()) return it->second;
  ComparisonReport report;
  switch (kind) {
    case ExperimentKind::bins: report = bins(); break;
    case ExperimentKind::curriculum: report = curriculum(); break;
    case ExperimentKind::distill_lambda: report = distill_lambda(); break;
    case ExperimentKind::distill_rc_vs_raw: report = distill_rc_vs_raw(); break;
    case ExperimentKind::distill_scale: report = distill_scale(); break;
  }
  report.facts["config_fingerprint"] = config_fingerprint(config_);
  emit_reports(report, experiment_dir(kind));
  return reports_.emplace(kind, std::move(report)).first->second;
}

// ----------------------------- bins -----------------------------

ComparisonReport Pipeline::bins() {
  const auto& d = shared();
  ComparisonReport report;
  report.experiment = "bins";
  report.seeds = config_.seeds;
  ConditionTable table;
  const int pool = static_cast<int>(d.pool_answerable.size());
  auto sizes = config_.bin_sizes;
  std::sort(sizes.begin(), sizes.end());
  const auto dir = experiment_dir(ExperimentKind::bins);

  for (int seed : config_.seeds) {
    const auto root = seed_root(seed);
    const auto& gold = gold_reader(seed);
    table.add(labels::gold_only, gold.record);

    const auto ranked = sort_by_difficulty(d.pool_answerable, gold.params);
    save_ranked(dir / "ranked" / ("s" + std::to_string(seed) + ".jsonl"), ranked);
    report.facts["ranked/s" + std::to_string(seed)] = ranked.id;

    const auto init = init_params(Capacity::teacher, d.vocabulary, derive_seed(root, "reader-init"));
    const TwoStageSchedules schedules{config_.schedule(config_.pretrain_epochs, derive_seed(root, "pretrain")),
                                      config_.schedule(config_.gold_epochs, derive_seed(root, "finetune"))};

    const auto train_on = [&](const std::string& label, const Bin& bin) {
      const std::string run_id = "bins/" + label + "/s" + std::to_string(seed);
      auto r = pretrain_then_finetune(init, {ranked.id + "/b" + std::to_string(bin.size) + "/" + std::to_string(bin.index), bin.examples},
                                      {"gold_train", d.gold.train}, schedules, run_id);
      table.add(label, finish(ExperimentKind::bins, std::move(r.record), r.params));
    };

    // The whole pool is the one-bin condition.
    {
      UnanswerablePool unanswerable(d.pool_unanswerable, derive_seed(root, "quota/full"));
      auto whole = partition_bins(ranked, pool, root);
      train_on(labels::full_pool,
               attach_unanswerable_quota(std::move(whole.front()), unanswerable, config_.bin_unanswerable_ratio, root));
    }
    for (int b : sizes) {
      if (b == pool) continue;
      auto bins = partition_bins(ranked, b, root);
      UnanswerablePool unanswerable(d.pool_unanswerable, derive_seed(root, "quota/" + std::to_string(b)));
      for (auto& bin : bins) bin = attach_unanswerable_quota(std::move(bin), unanswerable, config_.bin_unanswerable_ratio, root);
      save_bins(dir / "bins" / ("s" + std::to_string(seed) + "_b" + std::to_string(b) + ".json"), bins);
      for (const auto& bin : bins) train_on(labels::bin(b, bin.index), bin);
    }
  }
  report.conditions = table.take();

  std::string best_hard;
  double best_hard_mean = -1.0;
  for (int b : sizes) {
    std::vector<std::pair<double, std::string>> points;
    const int n = pool / b;
    for (int i = 1; i <= n; ++i) points.emplace_back(i, b == pool ? labels::full_pool : labels::bin(b, i));
    for (const char* split : {"test", "dev"}) {
      report.series.push_back(series_over(report, "b" + std::to_string(b), split, points));
    }
    if (b == pool) continue;
    if (n >= 2) {
      report.verdicts.push_back(compare(report, "hardest_minus_easiest/b" + std::to_string(b), labels::bin(b, 1),
                                        labels::bin(b, n), "test"));
    }
    const double mean = report.aggregate(labels::bin(b, 1), "test").overall_f1.mean;
    if (mean > best_hard_mean) best_hard_mean = mean, best_hard = labels::bin(b, 1);
  }
  report.verdicts.push_back(compare(report, "full_pool_minus_gold_only", labels::full_pool, labels::gold_only, "test"));
  if (!best_hard.empty()) {
    report.verdicts.push_back(compare(report, "best_hard_bin_minus_full_pool", best_hard, labels::full_pool, "test"));
  }
  report.facts["pool_multiset"] = multiset_hash(concat(d.pool_answerable, d.pool_unanswerable));
  report.facts["checker_dev_f1"] = std::to_string(d.checker_dev.overall_f1);
  report.facts["rc_kept_fraction"] =
      std::to_string(static_cast<double>(d.filtered.kept.examples.size()) / static_cast<double>(d.raw.examples.size()));
  return report;
}

// ----------------------------- curriculum -----------------------------

ComparisonReport Pipeline::curriculum() {
  const auto& d = shared();
  ComparisonReport report;
  report.experiment = "curriculum";
  report.seeds = config_.seeds;
  ConditionTable table;
  const auto pool = concat(d.pool_answerable, d.pool_unanswerable);
  const std::pair<CurriculumMode, const char*> modes[] = {
      {CurriculumMode::plain_cl, labels::plain_cl},
      {CurriculumMode::cl_switch, labels::cl_switch},
      {CurriculumMode::random, labels::random_order}};

  for (int seed : config_.seeds) {
    const auto root = seed_root(seed);
    const auto& gold = gold_reader(seed);
    const auto ranked = sort_by_difficulty(pool, gold.params);
    const auto init = init_params(Capacity::teacher, d.vocabulary, derive_seed(root, "reader-init"));
    const TwoStageSchedules schedules{
        config_.schedule(config_.pretrain_epochs, derive_seed(root, "pretrain"), ShuffleMode::fixed_order),
        config_.schedule(config_.gold_epochs, derive_seed(root, "finetune"))};
    std::string first_hash;
    for (const auto& [mode, label] : modes) {
      const auto order = curriculum_order(ranked, mode, config_.switch_fraction, derive_seed(root, "curriculum"));
      const auto hash = multiset_hash(order);
      report.facts["multiset/" + std::string(label) + "/s" + std::to_string(seed)] = hash;
      if (first_hash.empty()) first_hash = hash;
      if (hash != first_hash) throw InputError("curriculum conditions consume different example multisets");
      const std::string run_id = "curriculum/" + std::string(label) + "/s" + std::to_string(seed);
      auto r = pretrain_then_finetune(init, {ranked.id + "/" + label, order}, {"gold_train", d.gold.train}, schedules, run_id);
      table.add(label, finish(ExperimentKind::curriculum, std::move(r.record), r.params));
    }
  }
  report.conditions = table.take();
  report.verdicts.push_back(compare(report, "random_minus_plain_cl", labels::random_order, labels::plain_cl, "test"));
  report.verdicts.push_back(compare(report, "random_minus_cl_switch", labels::random_order, labels::cl_switch, "test"));
  return report;
}

// ----------------------------- distillation -----------------------------

std::string Pipeline::teacher_condition() {
  if (teacher_condition_) return *teacher_condition_;
  if (!reports_.contains(ExperimentKind::bins) && !load_teacher_from_disk()) run(ExperimentKind::bins);
  const auto& bins_report = reports_.at(ExperimentKind::bins);
  std::string best;
  double best_mean = -1.0;
  for (const auto& c : bins_report.conditions) {
    const double mean = bins_report.aggregate(c.condition, "dev").overall_f1.mean;
    if (mean > best_mean) best_mean = mean, best = c.condition;
  }
  teacher_condition_ = best;
  log("[distill] teacher condition: " + best);
  return best;
}

bool Pipeline::load_teacher_from_disk() {
  const auto dir = experiment_dir(ExperimentKind::bins);
  if (!std::filesystem::exists(dir / "report.json")) return false;
  auto report = load_report(dir, config_.output_dir / "runs");
  if (report.facts["config_fingerprint"] != config_fingerprint(config_) || report.seeds != config_.seeds) {
    log("[distill] persisted bins report was produced under a different configuration; rerunning");
    return false;
  }
  log("[distill] reusing persisted bins report");
  reports_.emplace(ExperimentKind::bins, std::move(report));
  return true;
}

const ReaderParams& Pipeline::teacher(int seed) {
  if (const auto it = teachers_.find(seed); it != teachers_.end()) return it->second;
  const auto label = teacher_condition();
  const auto& c = reports_.at(ExperimentKind::bins).condition(label);
  const auto pos = std::find(config_.seeds.begin(), config_.seeds.end(), seed);
  if (pos == config_.seeds.end()) throw ConfigError("seed " + std::to_string(seed) + " is not configured");
  const auto& record = c.runs.at(static_cast<std::size_t>(pos - config_.seeds.begin()));
  auto checkpoint = load_checkpoint(checkpoint_dir() / (record.checkpoint_hash + ".json"));
  return teachers_.emplace(seed, std::move(checkpoint.params)).first->second;
}

ReaderParams Pipeline::student_init(int seed) const {
  return init_params(Capacity::student, shared_->vocabulary, derive_seed(seed_root(seed), "student-init"));
}

const TeacherOutputs& Pipeline::teacher_outputs(int seed, const std::string& set_name, std::span<const Example> examples) {
  const auto& t = teacher(seed);
  const std::string key = t.content_hash() + "_" + set_name;
  if (const auto it = teacher_outputs_.find(key); it != teacher_outputs_.end()) return it->second;
  const auto encoded = encode_all(*t.vocabulary, examples);
  auto outputs = config_.cache_teacher_outputs
                     ? cached_teacher_outputs(t, encoded, config_.output_dir / "cache" / (key + ".jsonl"))
                     : compute_teacher_outputs(t, encoded);
  return teacher_outputs_.emplace(key, std::move(outputs)).first->second;
}

namespace {

/// A seeded shuffle of `source`, cut to `n`. Prefixes of one shuffle nest,
/// so larger sets contain the smaller ones.
std::vector<Example> seeded_prefix(std::span<const Example> source, std::size_t n, std::uint64_t seed,
                                   const std::string& what) {
  if (n > source.size()) {
    throw ConfigError(what + " has " + std::to_string(source.size()) + " examples, " + std::to_string(n) + " requested");
  }
  std::vector<Example> out(source.begin(), source.end());
  Rng rng(seed);
  rng.shuffle(out);
  out.resize(n);
  return out;
}

}  // namespace

ComparisonReport Pipeline::distill_lambda() {
  const auto& d = shared();
  ComparisonReport report;
  report.experiment = "distill_lambda";
  report.seeds = config_.seeds;
  ConditionTable table;
  const auto label = teacher_condition();
  for (int seed : config_.seeds) {
    const auto root = seed_root(seed);
    const auto& t = teacher(seed);
    const auto& bins_report = reports_.at(ExperimentKind::bins);
    table.add(labels::teacher, bins_report.condition(label).runs.at(table_index(seed)));
    report.facts["teacher/s" + std::to_string(seed)] = t.content_hash();
    const auto& outputs = teacher_outputs(seed, "gold_train", d.gold.train);
    const auto init = student_init(seed);
    const auto schedule = config_.schedule(config_.distill_gold_epochs, derive_seed(root, "distill-gold"));

    {
      const auto t0 = std::chrono::steady_clock::now();
      auto trained = train_mle(init, d.gold.train, schedule);
      RunRecord record;
      record.run_id = "distill_lambda/" + std::string(labels::student_gold_mle) + "/s" + std::to_string(seed);
      record.seed = init.seed;
      record.lineage.push_back({"gold_train", "mle", schedule, d.gold.train.size()});
      record.curves.push_back(trained.curve.epoch_loss);
      record.wall_time_seconds = seconds_since(t0);
      table.add(labels::student_gold_mle, finish(ExperimentKind::distill_lambda, std::move(record), trained.params));
    }
    for (double lambda : config_.lambdas) {
      const auto name = labels::lambda(lambda);
      auto r = train_distill(init, outputs, {"gold_train", d.gold.train}, {lambda, schedule, DatasetKind::gold},
                             "distill_lambda/" + name + "/s" + std::to_string(seed));
      table.add(name, finish(ExperimentKind::distill_lambda, std::move(r.record), r.params));
    }
  }
  report.conditions = table.take();
  report.facts["teacher_condition"] = label;
  std::vector<std::pair<double, std::string>> points;
  for (double lambda : config_.lambdas) points.emplace_back(lambda, labels::lambda(lambda));
  for (const char* split : {"dev", "test"}) report.series.push_back(series_over(report, "lambda", split, points));
  const auto lo = *std::min_element(config_.lambdas.begin(), config_.lambdas.end());
  const auto hi = *std::max_element(config_.lambdas.begin(), config_.lambdas.end());
  report.verdicts.push_back(compare(report, "lambda_max_minus_lambda_min", labels::lambda(hi), labels::lambda(lo), "dev"));
  report.verdicts.push_back(compare(report, "teacher_minus_student_gold_mle", labels::teacher, labels::student_gold_mle, "test"));
  return report;
}

// Seed position in the configured list; every condition stores runs in that order.
std::size_t Pipeline::table_index(int seed) const {
  const auto pos = std::find(config_.seeds.begin(), config_.seeds.end(), seed);
  if (pos == config_.seeds.end()) throw ConfigError("seed " + std::to_string(seed) + " is not configured");
  return static_cast<std::size_t>(pos - config_.seeds.begin());
}

const std::vector<Example>& Pipeline::distill_set(const std::string& kind, int multiple) {
  const auto& d = shared();
  const std::string key = kind + "_x" + std::to_string(multiple);
  if (const auto it = distill_sets_.find(key); it != distill_sets_.end()) return it->second;
  const auto n = static_cast<std::size_t>(config_.distill_unit) * static_cast<std::size_t>(multiple);
  auto set = kind == "raw" ? seeded_prefix(d.raw.examples, n, derive_seed(config_.seed, "distill/raw"), "raw synthetic set")
                           : seeded_prefix(d.filtered.kept.examples, n, derive_seed(config_.seed, "distill/rc"),
                                           "roundtrip-consistent set");
  return distill_sets_.emplace(key, std::move(set)).first->second;
}

const DistillResult& Pipeline::synthetic_student(int seed, const std::string& kind, int multiple) {
  const std::string key = kind + "_x" + std::to_string(multiple) + "/s" + std::to_string(seed);
  if (const auto it = synthetic_students_.find(key); it != synthetic_students_.end()) return it->second;
  const auto root = seed_root(seed);
  const auto& set = distill_set(kind, multiple);
  // Teacher outputs for the largest raw prefix cover every smaller one.
  const int cover = kind == "raw" ? std::max(multiple, *std::max_element(config_.distill_multiples.begin(),
                                                                         config_.distill_multiples.end()))
                                  : multiple;
  const auto& covering_set = distill_set(kind, cover);
  const auto& outputs = teacher_outputs(seed, kind + "_x" + std::to_string(cover), covering_set);
  const auto label = kind == "raw" ? labels::distill_raw(multiple) : labels::distill_rc(multiple);
  const DistillConfig dc{1.0, config_.schedule(config_.distill_synthetic_epochs, derive_seed(root, "distill-synthetic")),
                         kind == "raw" ? DatasetKind::synthetic_raw : DatasetKind::synthetic_rc};
  auto r = train_distill(student_init(seed), outputs, {"synthetic_" + kind + "_x" + std::to_string(multiple), set}, dc,
                         "distill/" + label + "/s" + std::to_string(seed));
  r.record = finish(ExperimentKind::distill_scale, std::move(r.record), r.params);
  return synthetic_students_.emplace(key, std::move(r)).first->second;
}

ComparisonReport Pipeline::distill_rc_vs_raw() {
  ComparisonReport report;
  report.experiment = "distill_rc_vs_raw";
  report.seeds = config_.seeds;
  ConditionTable table;
  const auto label = teacher_condition();
  const int m = config_.rc_vs_raw_multiple;
  for (int seed : config_.seeds) {
    table.add(labels::teacher, reports_.at(ExperimentKind::bins).condition(label).runs.at(table_index(seed)));
    table.add(labels::distill_raw(m), synthetic_student(seed, "raw", m).record);
    table.add(labels::distill_rc(m), synthetic_student(seed, "rc", m).record);
  }
  report.conditions = table.take();
  report.facts["teacher_condition"] = label;
  report.facts["synthetic_size"] = std::to_string(config_.distill_unit * m);
  auto v = compare(report, "raw_minus_rc", labels::distill_raw(m), labels::distill_rc(m), "test");
  if (v.mean_difference < 0.0) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "inversion: RC-distilled student beats raw-distilled by %.4f test F1 at %d examples",
                  -v.mean_difference, config_.distill_unit * m);
    report.notes.push_back(buf);
  }
  report.verdicts.push_back(std::move(v));
  return report;
}

ComparisonReport Pipeline::distill_scale() {
  const auto& d = shared();
  ComparisonReport report;
  report.experiment = "distill_scale";
  report.seeds = config_.seeds;
  ConditionTable table;
  const auto label = teacher_condition();
  auto multiples = config_.distill_multiples;
  std::sort(multiples.begin(), multiples.end());
  for (int seed : config_.seeds) {
    const auto root = seed_root(seed);
    table.add(labels::teacher, reports_.at(ExperimentKind::bins).condition(label).runs.at(table_index(seed)));
    const auto& gold_outputs = teacher_outputs(seed, "gold_train", d.gold.train);
    for (int k : multiples) {
      const auto& stage1 = synthetic_student(seed, "raw", k);
      RunRecord synthetic_only = stage1.record;
      table.add(labels::distill_synthetic(k), synthetic_only);
      auto both = continue_with_gold_distill(
          stage1, gold_outputs, {"gold_train", d.gold.train},
          config_.schedule(config_.distill_then_gold_epochs, derive_seed(root, "distill-then-gold")),
          "distill_scale/" + labels::distill_then_gold(k) + "/s" + std::to_string(seed));
      table.add(labels::distill_then_gold(k), finish(ExperimentKind::distill_scale, std::move(both.record), both.params));
    }
  }
  report.conditions = table.take();
  report.facts["teacher_condition"] = label;

  std::vector<std::pair<double, std::string>> syn, then_gold;
  for (int k : multiples) {
    syn.emplace_back(k * config_.distill_unit, labels::distill_synthetic(k));
    then_gold.emplace_back(k * config_.distill_unit, labels::distill_then_gold(k));
  }
  for (const char* split : {"test", "dev"}) {
    report.series.push_back(series_over(report, "synthetic_only", split, syn));
    report.series.push_back(series_over(report, "synthetic_then_gold", split, then_gold));
  }
  for (int k : multiples) {
    report.verdicts.push_back(compare(report, "then_gold_minus_synthetic/x" + std::to_string(k),
                                      labels::distill_then_gold(k), labels::distill_synthetic(k), "test"));
  }
  const auto best_by_dev = [&](const std::vector<std::pair<double, std::string>>& points) {
    std::string best;
    double best_mean = -1.0;
    for (const auto& [x, c] : points) {
      const double mean = report.aggregate(c, "dev").overall_f1.mean;
      if (mean > best_mean) best_mean = mean, best = c;
    }
    return best;
  };
  const auto best_s = best_by_dev(syn);
  const auto best_sg = best_by_dev(then_gold);
  report.facts["best_synthetic_only"] = best_s;
  report.facts["best_synthetic_then_gold"] = best_sg;
  for (const char* split : {"dev", "test"}) {
    report.verdicts.push_back(compare(report, std::string("overall_delta/") + split, best_sg, labels::teacher, split));
    report.verdicts.push_back(
        compare(report, std::string("synthetic_only_minus_teacher/") + split, best_s, labels::teacher, split));
  }
  return report;
}

// ----------------------------- entry points -----------------------------

ComparisonReport run_bin_experiment(const ExperimentConfig& config) {
  Pipeline p(config);
  return p.run(ExperimentKind::bins);
}

ComparisonReport run_curriculum_experiment(const ExperimentConfig& config) {
  Pipeline p(config);
  return p.run(ExperimentKind::curriculum);
}

ComparisonReport merge_reports(std::string experiment, std::span<const ComparisonReport* const> parts) {
  ComparisonReport out;
  out.experiment = std::move(experiment);
  for (const auto* part : parts) {
    out.seeds = part->seeds;
    for (const auto& c : part->conditions) {
      if (!out.has_condition(c.condition)) out.conditions.push_back(c);
    }
    out.verdicts.insert(out.verdicts.end(), part->verdicts.begin(), part->verdicts.end());
    out.series.insert(out.series.end(), part->series.begin(), part->series.end());
    for (const auto& [k, v] : part->facts) out.facts[part->experiment + "/" + k] = v;
    out.notes.insert(out.notes.end(), part->notes.begin(), part->notes.end());
  }
  return out;
}

ComparisonReport run_distill_experiments(const ExperimentConfig& config) {
  Pipeline p(config);
  const ComparisonReport* parts[] = {&p.run(ExperimentKind::distill_lambda), &p.run(ExperimentKind::distill_rc_vs_raw),
                                     &p.run(ExperimentKind::distill_scale)};
  return merge_reports("distill", parts);
}

}  // namespace synmrc
