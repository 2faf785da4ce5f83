#include "synmrc/distillation.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace synmrc {

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gold: return "gold";
    case DatasetKind::synthetic_raw: return "synthetic_raw";
    case DatasetKind::synthetic_rc: return "synthetic_rc";
  }
  return "?";
}

const SpanDistributions& TeacherOutputs::at(const std::string& example_id) const {
  const auto it = outputs_.find(example_id);
  if (it == outputs_.end()) throw AlignmentError("no teacher output for " + example_id);
  return it->second;
}

namespace {

std::string decimal_array(const Eigen::VectorXd& v) {
  std::string out = "[";
  char buf[40];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.16e", v(i));
    if (i) out += ',';
    out += buf;
  }
  out += ']';
  return out;
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void TeacherOutputs::save(const std::filesystem::path& path) const {
  std::vector<const std::string*> ids;
  for (const auto& [id, z] : outputs_) ids.push_back(&id);
  std::sort(ids.begin(), ids.end(), [](const std::string* a, const std::string* b) { return *a < *b; });
  std::string out;
  for (const std::string* id : ids) {
    const auto& z = outputs_.at(*id);
    out += "{\"example_id\":" + nlohmann::json(*id).dump() + ",\"teacher_hash\":\"" + teacher_hash_ +
           "\",\"z_start\":" + decimal_array(z.start) + ",\"z_end\":" + decimal_array(z.end) + "}\n";
  }
  write_file(path, out);
}

TeacherOutputs TeacherOutputs::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TeacherOutputs out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto hash = j.at("teacher_hash").get<std::string>();
    if (out.teacher_hash_.empty()) out.teacher_hash_ = hash;
    if (hash != out.teacher_hash_) throw InputError("teacher cache mixes teachers: " + path.string());
    out.insert(j.at("example_id").get<std::string>(), {vector_from(j.at("z_start")), vector_from(j.at("z_end"))});
  }
  return out;
}

TeacherOutputs compute_teacher_outputs(const ReaderParams& teacher, std::span<const EncodedExample> examples) {
  TeacherOutputs out(teacher.content_hash());
  for (const auto& e : examples) out.insert(e.example_id, forward(teacher, e.input));
  return out;
}

TeacherOutputs cached_teacher_outputs(const ReaderParams& teacher, std::span<const EncodedExample> examples,
                                      const std::filesystem::path& cache_path) {
  if (std::filesystem::exists(cache_path)) {
    auto cached = TeacherOutputs::load(cache_path);
    const bool complete = std::all_of(examples.begin(), examples.end(),
                                      [&](const EncodedExample& e) { return cached.contains(e.example_id); });
    if (cached.teacher_hash() == teacher.content_hash() && complete) return cached;
  }
  auto fresh = compute_teacher_outputs(teacher, examples);
  fresh.save(cache_path);
  return fresh;
}

double distill_loss(const SpanDistributions& teacher, const SpanDistributions& student) {
  if (teacher.start.size() != student.start.size() || teacher.end.size() != student.end.size()) {
    throw AlignmentError("teacher and student lengths differ");
  }
  return 0.5 * (floored_kl_div(teacher.start, student.start) + floored_kl_div(teacher.end, student.end));
}

double joint_loss(double lambda, double l_distill, double l_hard) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  return lambda * l_distill + (1.0 - lambda) * l_hard;
}

namespace {

// KL(t || max(z, eps)) and its gradient with respect to the logits of z.
double floored_kl_head(const Eigen::VectorXd& t, const Eigen::VectorXd& log_z, const InputSequence& input,
                       double weight, Eigen::VectorXd& d_logits) {
  const Eigen::Index L = t.size();
  if (log_z.size() != L) throw AlignmentError("teacher and student lengths differ");
  Eigen::VectorXd z(L), g = Eigen::VectorXd::Zero(L);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) {
    z(i) = input.allowed(static_cast<int>(i)) ? std::exp(log_z(i)) : 0.0;
    if (t(i) <= 0.0) continue;
    if (z(i) > kStudentFloor) {
      loss += t(i) * (std::log(t(i)) - log_z(i));
      g(i) = -t(i) / z(i);
    } else {
      loss += t(i) * (std::log(t(i)) - std::log(kStudentFloor));
    }
  }
  const double gz = g.dot(z);
  for (Eigen::Index j = 0; j < L; ++j) {
    if (input.allowed(static_cast<int>(j))) d_logits(j) += weight * z(j) * (g(j) - gz);
  }
  return loss;
}

}  // namespace

double joint_loss_and_grad(const ReaderParams& student, const TeacherOutputs& teacher,
                           std::span<const EncodedExample> batch, double lambda, ReaderParams* grad) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  std::vector<const SpanDistributions*> targets(batch.size(), nullptr);
  if (lambda > 0.0) {
    for (std::size_t n = 0; n < batch.size(); ++n) {
      targets[n] = &teacher.at(batch[n].example_id);
      if (targets[n]->start.size() != batch[n].input.length()) {
        throw AlignmentError("teacher output length differs for " + batch[n].example_id);
      }
    }
  }
  return batch_loss_and_grad(
      student, batch,
      [&](std::size_t n, const ForwardState& s, HeadGradients& heads) {
        const auto& ex = batch[n];
        double loss = 0.0;
        if (lambda > 0.0) {
          const double w = 0.5 * lambda;
          const double kl_start = floored_kl_head(targets[n]->start, s.start_log_probs, ex.input, w, heads.start);
          const double kl_end = floored_kl_head(targets[n]->end, s.end_log_probs, ex.input, w, heads.end);
          loss += 0.5 * lambda * (kl_start + kl_end);
        }
        if (lambda < 1.0) {
          const double w = 1.0 - lambda;
          for (int i = 0; i < ex.input.length(); ++i) {
            if (!ex.input.allowed(i)) continue;
            heads.start(i) += w * std::exp(s.start_log_probs(i));
            heads.end(i) += w * std::exp(s.end_log_probs(i));
          }
          heads.start(ex.start) -= w;
          heads.end(ex.end) -= w;
          loss += w * -(s.start_log_probs(ex.start) + s.end_log_probs(ex.end));
        }
        return loss;
      },
      grad);
}

double distill_loss_and_grad(const ReaderParams& student, const TeacherOutputs& teacher,
                             std::span<const EncodedExample> batch, ReaderParams* grad) {
  return joint_loss_and_grad(student, teacher, batch, 1.0, grad);
}

namespace {

std::string objective_label(const DistillConfig& config, const std::string& teacher_hash) {
  std::ostringstream out;
  out << "distill(lambda=" << config.lambda << ",kind=" << to_string(config.dataset_kind)
      << ",teacher=" << teacher_hash << ")";
  return out.str();
}

}  // namespace

DistillResult train_distill(const ReaderParams& student, const TeacherOutputs& teacher, const DatasetRef& dataset,
                            const DistillConfig& config, std::string run_id) {
  if (dataset.examples.empty()) throw InputError("cannot distill on an empty dataset");
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  const auto t0 = std::chrono::steady_clock::now();
  const auto encoded = encode_all(*student.vocabulary, dataset.examples);

  DistillResult out{{}, student};
  std::vector<EncodedExample> batch;
  const auto curve = run_sgd(out.params, encoded.size(), config.schedule,
                             [&](std::span<const std::size_t> items, ReaderParams& grad) {
                               batch.clear();
                               for (std::size_t i : items) batch.push_back(encoded[i]);
                               return joint_loss_and_grad(out.params, teacher, batch, config.lambda, &grad);
                             });
  out.record.run_id = std::move(run_id);
  out.record.seed = student.seed;
  out.record.lineage.push_back(
      {dataset.name, objective_label(config, teacher.teacher_hash()), config.schedule, dataset.examples.size()});
  out.record.curves.push_back(curve.epoch_loss);
  out.record.checkpoint_hash = out.params.content_hash();
  out.record.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

DistillResult train_distill(const ReaderParams& student, const ReaderParams& teacher, const DatasetRef& dataset,
                            const DistillConfig& config, std::string run_id) {
  if (student.vocabulary->tokens() != teacher.vocabulary->tokens()) {
    throw AlignmentError("teacher and student vocabularies differ");
  }
  TeacherOutputs outputs;
  if (config.lambda > 0.0) {
    outputs = compute_teacher_outputs(teacher, encode_all(*teacher.vocabulary, dataset.examples));
  } else {
    outputs = TeacherOutputs(teacher.content_hash());
  }
  return train_distill(student, outputs, dataset, config, std::move(run_id));
}

DistillResult continue_with_gold_distill(const DistillResult& synthetic_stage, const TeacherOutputs& gold_teacher,
                                         const DatasetRef& gold_train, const TrainSchedule& gold_schedule,
                                         std::string run_id) {
  DistillConfig config{1.0, gold_schedule, DatasetKind::gold};
  DistillResult stage2 = train_distill(synthetic_stage.params, gold_teacher, gold_train, config, run_id);
  DistillResult out = synthetic_stage;
  out.params = std::move(stage2.params);
  out.record.run_id = std::move(run_id);
  out.record.lineage.push_back(stage2.record.lineage.front());
  out.record.curves.push_back(stage2.record.curves.front());
  out.record.checkpoint_hash = stage2.record.checkpoint_hash;
  out.record.metrics.clear();
  out.record.wall_time_seconds += stage2.record.wall_time_seconds;
  return out;
}

DistillResult synthetic_then_gold_distill(const ReaderParams& student_init, const ReaderParams& teacher,
                                          const DatasetRef& synthetic_set, const DatasetRef& gold_train,
                                          const DistillSchedules& schedules, std::string run_id) {
  if (synthetic_set.examples.empty() || gold_train.examples.empty()) {
    throw InputError("synthetic_then_gold_distill needs non-empty datasets");
  }
  DistillConfig stage1{1.0, schedules.synthetic, DatasetKind::synthetic_raw};
  const DistillResult synthetic = train_distill(student_init, teacher, synthetic_set, stage1, run_id);
  const auto gold_outputs = compute_teacher_outputs(teacher, encode_all(*teacher.vocabulary, gold_train.examples));
  return continue_with_gold_distill(synthetic, gold_outputs, gold_train, schedules.gold, std::move(run_id));
}

}  // namespace synmrc
