#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "synmrc/core.hpp"

namespace synmrc {

inline constexpr int kMaxInputLength = 256;
inline constexpr int kMaxAnswerLength = 8;  // A_max, in tokens
inline constexpr int kSegmentCount = 4;

// ----------------------------- math helpers -----------------------------

/// Log-softmax over the entries where `allowed` is true; the rest are -inf.
template <typename Derived, typename Mask>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> masked_log_softmax(const Eigen::MatrixBase<Derived>& logits,
                                                                               const Mask& allowed) {
  using Scalar = typename Derived::Scalar;
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  Scalar top = neg_inf;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (allowed(i)) top = std::max(top, logits(i));
  }
  Scalar sum(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (allowed(i)) sum += std::exp(logits(i) - top);
  }
  const Scalar log_z = top + std::log(sum);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) out(i) = allowed(i) ? logits(i) - log_z : neg_inf;
  return out;
}

// ----------------------------- input layout -----------------------------

/// [CLS] question [SEP] context. Only CLS and context positions can carry
/// start/end probability.
struct InputSequence {
  std::vector<int> tokens;
  int question_length = 0;
  int context_length = 0;
  std::vector<bool> in_question;  // per context token

  int length() const { return static_cast<int>(tokens.size()); }
  int sep_position() const { return 1 + question_length; }
  int context_offset() const { return 2 + question_length; }
  int to_position(int context_index) const { return context_offset() + context_index; }
  int to_context(int position) const { return position - context_offset(); }
  bool is_context(int position) const {
    return position >= context_offset() && position < context_offset() + context_length;
  }
  bool allowed(int position) const { return position == 0 || is_context(position); }
  /// 0 for CLS/SEP, 1 for question, 2 for context, 3 for a context token that
  /// also occurs in the question.
  int segment(int position) const;
};

InputSequence tokenize_pair(const Vocabulary& vocabulary, const Tokens& question, const Tokens& context);

/// An example with its gold start/end positions in sequence coordinates
/// (NoAnswer maps to CLS, CLS).
struct EncodedExample {
  InputSequence input;
  int start = 0;
  int end = 0;
  std::string example_id;
};

EncodedExample encode(const Vocabulary& vocabulary, const Example& example);
std::vector<EncodedExample> encode_all(const Vocabulary& vocabulary, std::span<const Example> examples);

// ----------------------------- parameters -----------------------------

enum class Capacity { checker, teacher, student };

std::string_view to_string(Capacity capacity);
Capacity capacity_from_string(std::string_view text);

struct ReaderDims {
  int embedding = 0;
  int attention = 0;
  int window = 5;  // local convolution width, odd
};

ReaderDims dims_for(Capacity capacity);

enum class Tensor : std::size_t {
  embedding,   // V x d
  segment,     // kSegmentCount x d
  conv,        // (window * d) x d
  conv_bias,   // 1 x d
  query,       // d x a
  key,         // d x a
  value,       // d x d
  mix,         // 3d x d, acting on [h, c, h*c]
  mix_bias,    // 1 x d
  start_head,  // d x 1
  end_head,    // d x 1
  null_bias,   // 2 x 1, CLS logit offsets for the start and end heads
  count
};

inline constexpr std::size_t kTensorCount = static_cast<std::size_t>(Tensor::count);
std::string_view tensor_name(Tensor t);

/// Token embeddings, a width-5 convolution, one single-head scaled
/// dot-product attention layer, a tanh mixing layer over [h, c, h*c], and two
/// linear span heads.
struct ReaderParams {
  Capacity capacity = Capacity::student;
  ReaderDims dims;
  std::uint64_t seed = 0;
  std::shared_ptr<const Vocabulary> vocabulary;
  std::array<Eigen::MatrixXd, kTensorCount> tensors;

  Eigen::MatrixXd& operator[](Tensor t) { return tensors[static_cast<std::size_t>(t)]; }
  const Eigen::MatrixXd& operator[](Tensor t) const { return tensors[static_cast<std::size_t>(t)]; }

  Eigen::Index param_count() const;
  bool all_finite() const;
  /// Same shapes, all zeros; shares the vocabulary.
  ReaderParams zeros_like() const;
  /// this += scale * other
  void axpy(double scale, const ReaderParams& other);
  void scale(double factor);
  /// FNV-1a over capacity, dims and the raw tensor bytes.
  std::string content_hash() const;

  double& coordinate(Eigen::Index flat_index);
};

/// Weights are N(0, 1/fan_in) except embeddings and segment vectors (N(0, 1))
/// and biases (zero).
ReaderParams init_params(Capacity capacity, std::shared_ptr<const Vocabulary> vocabulary, std::uint64_t seed);

// ----------------------------- forward / inference -----------------------------

struct SpanDistributions {
  Eigen::VectorXd start;
  Eigen::VectorXd end;
};

/// Everything the backward pass needs.
struct ForwardState {
  Eigen::MatrixXd window_input;  // L x (window d)
  Eigen::MatrixXd hidden;        // L x d
  Eigen::MatrixXd queries, keys, values;
  Eigen::MatrixXd attention;     // L x L, rows sum to 1
  Eigen::MatrixXd context;       // L x d
  Eigen::MatrixXd mix_input;     // L x 3d
  Eigen::MatrixXd mixed;         // L x d
  Eigen::VectorXd start_log_probs;
  Eigen::VectorXd end_log_probs;
};

ForwardState forward_state(const ReaderParams& params, const InputSequence& input);
SpanDistributions forward(const ReaderParams& params, const InputSequence& input);

/// dLoss/dlogits for both heads; masked positions must stay zero.
struct HeadGradients {
  Eigen::VectorXd start;
  Eigen::VectorXd end;
};

/// Accumulates the parameter gradient of a loss whose logit gradient is
/// `heads` into `grad`.
void backward(const ReaderParams& params, const InputSequence& input, const ForwardState& state,
              const HeadGradients& heads, ReaderParams& grad);

/// Per-example loss on the head log-probabilities; fills the logit gradient.
using HeadLoss = std::function<double(std::size_t item, const ForwardState& state, HeadGradients& heads)>;

/// Mean of `loss` over the batch and, when `grad` is given, its exact
/// gradient (overwritten).
double batch_loss_and_grad(const ReaderParams& params, std::span<const EncodedExample> batch, const HeadLoss& loss,
                           ReaderParams* grad);

/// -[log p_s(start) + log p_e(end)] averaged over the batch.
double mle_loss_and_grad(const ReaderParams& params, std::span<const EncodedExample> batch, ReaderParams* grad);
double mle_loss_and_grad(const ReaderParams& params, std::span<const Example> batch, ReaderParams* grad);

struct Prediction {
  std::optional<Span> answer;  // context coordinates; nullopt is NoAnswer
  double span_score = -std::numeric_limits<double>::infinity();
  double null_score = -std::numeric_limits<double>::infinity();
  Span best_span;  // best legal span even when NoAnswer is returned

  double margin() const;  // span_score - null_score, -inf when no span has mass
};

/// Best legal span (j <= k, k - j < kMaxAnswerLength, both in the context)
/// under log z_start[j] + log z_end[k]; NoAnswer iff margin <= threshold.
Prediction predict_from(const SpanDistributions& z, const InputSequence& input, double threshold);
Prediction predict(const ReaderParams& params, const InputSequence& input, double threshold);

// ----------------------------- checkpoints -----------------------------

struct Checkpoint {
  ReaderParams params;
  std::vector<std::string> lineage;
};

std::string checkpoint_to_json(const ReaderParams& params, const std::vector<std::string>& lineage = {});
Checkpoint checkpoint_from_json(std::string_view text);
/// Writes `<dir>/<content hash>.json` and returns the path.
std::filesystem::path save_checkpoint(const std::filesystem::path& dir, const ReaderParams& params,
                                      const std::vector<std::string>& lineage = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace synmrc
