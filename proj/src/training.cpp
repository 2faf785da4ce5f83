#include "synmrc/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace synmrc {

std::string_view to_string(ShuffleMode mode) { return mode == ShuffleMode::random ? "random" : "fixed_order"; }

void validate(const TrainSchedule& s) {
  if (s.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (s.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(s.learning_rate >= 0.0) || !std::isfinite(s.learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
}

std::string describe(const TrainSchedule& s) {
  std::ostringstream out;
  out << "epochs=" << s.epochs << ",batch=" << s.batch_size << ",lr=" << s.learning_rate
      << ",shuffle=" << to_string(s.shuffle) << ",seed=" << s.seed;
  return out.str();
}

TrainingCurve run_sgd(ReaderParams& params, std::size_t n_items, const TrainSchedule& schedule,
                      const BatchObjective& batch_loss) {
  validate(schedule);
  if (n_items == 0) throw InputError("cannot train on an empty dataset");
  TrainingCurve curve;
  std::vector<std::size_t> order(n_items);
  ReaderParams grad = params.zeros_like();
  const auto batch = static_cast<std::size_t>(schedule.batch_size);
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (schedule.shuffle == ShuffleMode::random) {
      Rng rng(derive_seed(schedule.seed, static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
    }
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < n_items; begin += batch) {
      const std::size_t end = std::min(n_items, begin + batch);
      const double loss = batch_loss(std::span<const std::size_t>(order).subspan(begin, end - begin), grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(curve.steps));
      }
      params.axpy(-schedule.learning_rate, grad);
      ++curve.steps;
      epoch_loss += loss;
      ++n_batches;
    }
    if (!params.all_finite()) throw DivergenceError("non-finite parameters after epoch " + std::to_string(epoch));
    curve.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return curve;
}

TrainResult train_mle(const ReaderParams& params, std::span<const Example> dataset, const TrainSchedule& schedule) {
  if (dataset.empty()) throw InputError("cannot train on an empty dataset");
  const auto encoded = encode_all(*params.vocabulary, dataset);
  TrainResult out{params, {}};
  std::vector<EncodedExample> batch;
  out.curve = run_sgd(out.params, encoded.size(), schedule,
                      [&](std::span<const std::size_t> items, ReaderParams& grad) {
                        batch.clear();
                        for (std::size_t i : items) batch.push_back(encoded[i]);
                        return mle_loss_and_grad(out.params, std::span<const EncodedExample>(batch), &grad);
                      });
  return out;
}

// ----------------------------- run records -----------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json schedule_json(const TrainSchedule& s) {
  return {{"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate},
          {"shuffle", std::string(to_string(s.shuffle))},
          {"seed", s.seed}};
}

TrainSchedule schedule_from(const nlohmann::json& j) {
  TrainSchedule s;
  s.epochs = j.at("epochs");
  s.batch_size = j.at("batch_size");
  s.learning_rate = j.at("learning_rate");
  s.shuffle = j.at("shuffle").get<std::string>() == "random" ? ShuffleMode::random : ShuffleMode::fixed_order;
  s.seed = j.at("seed");
  return s;
}

ordered_json metrics_json(const MetricsReport& m) {
  ordered_json j;
  j["split"] = m.split;
  j["overall_f1"] = m.overall_f1;
  j["answerable_f1"] = m.answerable_f1;
  j["unanswerable_accuracy"] = m.unanswerable_accuracy;
  // JSON has no infinities; sentinels are spelled out.
  if (std::isinf(m.threshold)) {
    j["threshold"] = m.threshold > 0 ? "+inf" : "-inf";
  } else {
    j["threshold"] = m.threshold;
  }
  j["n_examples"] = m.n_examples;
  j["n_answerable"] = m.n_answerable;
  j["n_unanswerable"] = m.n_unanswerable;
  return j;
}

MetricsReport metrics_from(const nlohmann::json& j) {
  MetricsReport m;
  m.split = j.at("split");
  m.overall_f1 = j.at("overall_f1");
  m.answerable_f1 = j.at("answerable_f1");
  m.unanswerable_accuracy = j.at("unanswerable_accuracy");
  const auto& t = j.at("threshold");
  if (t.is_string()) {
    m.threshold = t.get<std::string>() == "+inf" ? std::numeric_limits<double>::infinity()
                                                 : -std::numeric_limits<double>::infinity();
  } else {
    m.threshold = t.get<double>();
  }
  m.n_examples = j.at("n_examples");
  m.n_answerable = j.at("n_answerable");
  m.n_unanswerable = j.at("n_unanswerable");
  return m;
}

}  // namespace

std::string run_record_to_json(const RunRecord& r) {
  ordered_json j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["checkpoint_hash"] = r.checkpoint_hash;
  auto& lineage = j["lineage"] = ordered_json::array();
  for (const auto& s : r.lineage) {
    lineage.push_back({{"dataset", s.dataset},
                       {"objective", s.objective},
                       {"n_examples", s.n_examples},
                       {"schedule", schedule_json(s.schedule)}});
  }
  auto& metrics = j["metrics"] = ordered_json::object();
  for (const auto& [split, m] : r.metrics) metrics[split] = metrics_json(m);
  j["curves"] = r.curves;
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j.dump(2);
}

RunRecord run_record_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  RunRecord r;
  r.run_id = j.at("run_id");
  r.seed = j.at("seed");
  r.checkpoint_hash = j.at("checkpoint_hash");
  for (const auto& s : j.at("lineage")) {
    r.lineage.push_back({s.at("dataset"), s.at("objective"), schedule_from(s.at("schedule")), s.at("n_examples")});
  }
  for (const auto& [split, m] : j.at("metrics").items()) r.metrics[split] = metrics_from(m);
  r.curves = j.at("curves").get<std::vector<std::vector<double>>>();
  r.wall_time_seconds = j.at("wall_time_seconds");
  return r;
}

std::filesystem::path save_run_record(const std::filesystem::path& run_dir, const RunRecord& record) {
  if (record.lineage.empty()) throw InputError("run record " + record.run_id + " has an empty lineage");
  const auto path = run_dir / (record.run_id + ".json");
  write_file(path, run_record_to_json(record));
  return path;
}

RunRecord load_run_record(const std::filesystem::path& path) { return run_record_from_json(read_file(path)); }

RunResult pretrain_then_finetune(const ReaderParams& init_params, const DatasetRef& pretrain_set,
                                 const DatasetRef& gold_train, const TwoStageSchedules& schedules, std::string run_id) {
  if (pretrain_set.examples.empty() || gold_train.examples.empty()) {
    throw InputError("pretrain_then_finetune needs non-empty datasets");
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunResult out{{}, init_params};
  out.record.run_id = std::move(run_id);
  out.record.seed = init_params.seed;

  auto stage1 = train_mle(init_params, pretrain_set.examples, schedules.pretrain);
  out.record.lineage.push_back({pretrain_set.name, "mle", schedules.pretrain, pretrain_set.examples.size()});
  out.record.curves.push_back(stage1.curve.epoch_loss);

  auto stage2 = train_mle(stage1.params, gold_train.examples, schedules.finetune);
  out.record.lineage.push_back({gold_train.name, "mle", schedules.finetune, gold_train.examples.size()});
  out.record.curves.push_back(stage2.curve.epoch_loss);

  out.params = std::move(stage2.params);
  out.record.checkpoint_hash = out.params.content_hash();
  out.record.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace synmrc
