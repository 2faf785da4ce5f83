#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "synmrc/core.hpp"
#include "synmrc/reader.hpp"
#include "synmrc/training.hpp"

namespace synmrc {

inline constexpr double kStudentFloor = 1e-12;

/// D_KL(p_ref || q) = sum_i p_ref[i] (log p_ref[i] - log q[i]); terms with
/// p_ref[i] = 0 contribute nothing.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_div(const Eigen::MatrixBase<DerivedP>& p_ref, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p_ref.size() != q.size()) throw InputError("kl_div: length mismatch");
  Scalar sum(0);
  for (Eigen::Index i = 0; i < p_ref.size(); ++i) {
    const Scalar p = p_ref(i);
    if (p > Scalar(0)) sum += p * (std::log(p) - std::log(q(i)));
  }
  return sum;
}

/// KL with the student side floored at kStudentFloor before the log.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar floored_kl_div(const Eigen::MatrixBase<DerivedP>& p_ref, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  return kl_div(p_ref, q.cwiseMax(Scalar(kStudentFloor)));
}

enum class DatasetKind { gold, synthetic_raw, synthetic_rc };

std::string_view to_string(DatasetKind kind);

struct DistillConfig {
  double lambda = 1.0;
  TrainSchedule schedule{6, 32, 0.05, ShuffleMode::random, 0};
  DatasetKind dataset_kind = DatasetKind::gold;
};

/// Teacher span distributions keyed by example id.
class TeacherOutputs {
 public:
  TeacherOutputs() = default;
  explicit TeacherOutputs(std::string teacher_hash) : teacher_hash_(std::move(teacher_hash)) {}

  const std::string& teacher_hash() const { return teacher_hash_; }
  void insert(const std::string& example_id, SpanDistributions z) { outputs_[example_id] = std::move(z); }
  /// Throws AlignmentError for unknown ids.
  const SpanDistributions& at(const std::string& example_id) const;
  bool contains(const std::string& example_id) const { return outputs_.contains(example_id); }
  std::size_t size() const { return outputs_.size(); }

  /// One JSON record per line: example_id, teacher_hash, z_start, z_end, the
  /// arrays printed with 17 significant digits.
  void save(const std::filesystem::path& path) const;
  static TeacherOutputs load(const std::filesystem::path& path);

 private:
  std::string teacher_hash_;
  std::unordered_map<std::string, SpanDistributions> outputs_;
};

TeacherOutputs compute_teacher_outputs(const ReaderParams& teacher, std::span<const EncodedExample> examples);

/// Loads the cache when it exists and matches the teacher, otherwise computes
/// and writes it.
TeacherOutputs cached_teacher_outputs(const ReaderParams& teacher, std::span<const EncodedExample> examples,
                                      const std::filesystem::path& cache_path);

/// 1/2 [KL(t_start || z_start) + KL(t_end || z_end)] for one example.
double distill_loss(const SpanDistributions& teacher, const SpanDistributions& student);

/// Batch form: the mean per-example distillation loss of the student's
/// current outputs, with its gradient when `grad` is given.
double distill_loss_and_grad(const ReaderParams& student, const TeacherOutputs& teacher,
                             std::span<const EncodedExample> batch, ReaderParams* grad);

/// lambda * l_distill + (1 - lambda) * l_hard; ConfigError outside [0, 1].
double joint_loss(double lambda, double l_distill, double l_hard);

/// Mean joint loss over the batch with its gradient. The hard term is skipped
/// entirely when lambda = 1, the distillation term when lambda = 0.
double joint_loss_and_grad(const ReaderParams& student, const TeacherOutputs& teacher,
                           std::span<const EncodedExample> batch, double lambda, ReaderParams* grad);

struct DistillResult {
  RunRecord record;
  ReaderParams params;
};

/// Trains the student on the joint loss against a frozen teacher.
DistillResult train_distill(const ReaderParams& student, const ReaderParams& teacher, const DatasetRef& dataset,
                            const DistillConfig& config, std::string run_id);

/// Same, reusing precomputed teacher outputs for `dataset`.
DistillResult train_distill(const ReaderParams& student, const TeacherOutputs& teacher, const DatasetRef& dataset,
                            const DistillConfig& config, std::string run_id);

struct DistillSchedules {
  TrainSchedule synthetic{1, 32, 0.05, ShuffleMode::random, 0};
  TrainSchedule gold{4, 32, 0.05, ShuffleMode::random, 0};
};

/// Stage 1 distills on synthetic examples, stage 2 on gold, both at lambda = 1.
DistillResult synthetic_then_gold_distill(const ReaderParams& student_init, const ReaderParams& teacher,
                                          const DatasetRef& synthetic_set, const DatasetRef& gold_train,
                                          const DistillSchedules& schedules, std::string run_id);

/// Second stage alone: continues a synthetic-distilled student on gold,
/// appending to its lineage.
DistillResult continue_with_gold_distill(const DistillResult& synthetic_stage, const TeacherOutputs& gold_teacher,
                                         const DatasetRef& gold_train, const TrainSchedule& gold_schedule,
                                         std::string run_id);

}  // namespace synmrc
