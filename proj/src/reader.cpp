#include "synmrc/reader.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace synmrc {

// ----------------------------- input layout -----------------------------

int InputSequence::segment(int position) const {
  if (position == 0 || position == sep_position()) return 0;
  if (position < sep_position()) return 1;
  return in_question[static_cast<std::size_t>(to_context(position))] ? 3 : 2;
}

InputSequence tokenize_pair(const Vocabulary& vocabulary, const Tokens& question, const Tokens& context) {
  if (question.empty() || context.empty()) throw InputError("question and context must be non-empty");
  InputSequence seq;
  seq.question_length = static_cast<int>(question.size());
  seq.context_length = static_cast<int>(context.size());
  seq.tokens.reserve(question.size() + context.size() + 2);
  seq.tokens.push_back(Vocabulary::cls_id);
  for (const auto& t : question) seq.tokens.push_back(vocabulary.id(t));
  seq.tokens.push_back(Vocabulary::sep_id);
  for (const auto& t : context) seq.tokens.push_back(vocabulary.id(t));
  // exact-match flag: the context token also occurs in the question
  seq.in_question.reserve(context.size());
  for (const auto& t : context) seq.in_question.push_back(std::find(question.begin(), question.end(), t) != question.end());
  return seq;
}

EncodedExample encode(const Vocabulary& vocabulary, const Example& example) {
  EncodedExample out;
  out.input = tokenize_pair(vocabulary, example.question, example.context);
  out.example_id = example.example_id;
  if (example.answer) {
    out.start = out.input.to_position(example.answer->start);
    out.end = out.input.to_position(example.answer->end - 1);
  }
  return out;
}

std::vector<EncodedExample> encode_all(const Vocabulary& vocabulary, std::span<const Example> examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(encode(vocabulary, e));
  return out;
}

// ----------------------------- parameters -----------------------------

std::string_view to_string(Capacity capacity) {
  switch (capacity) {
    case Capacity::checker: return "checker";
    case Capacity::teacher: return "teacher";
    case Capacity::student: return "student";
  }
  return "?";
}

Capacity capacity_from_string(std::string_view text) {
  if (text == "checker") return Capacity::checker;
  if (text == "teacher") return Capacity::teacher;
  if (text == "student") return Capacity::student;
  throw ConfigError("unknown capacity: " + std::string(text));
}

ReaderDims dims_for(Capacity capacity) {
  switch (capacity) {
    case Capacity::checker: return {40, 20, 5};
    case Capacity::teacher: return {32, 16, 5};
    case Capacity::student: return {10, 8, 5};
  }
  throw ConfigError("unknown capacity");
}

std::string_view tensor_name(Tensor t) {
  static constexpr std::array<std::string_view, kTensorCount> names{
      "embedding", "segment", "conv",       "conv_bias", "query",    "key",
      "value",     "mix",     "mix_bias",   "start_head", "end_head", "null_bias"};
  return names.at(static_cast<std::size_t>(t));
}

Eigen::Index ReaderParams::param_count() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

bool ReaderParams::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Eigen::MatrixXd& t) { return t.allFinite(); });
}

ReaderParams ReaderParams::zeros_like() const {
  ReaderParams out;
  out.capacity = capacity;
  out.dims = dims;
  out.seed = seed;
  out.vocabulary = vocabulary;
  for (std::size_t i = 0; i < kTensorCount; ++i) out.tensors[i].setZero(tensors[i].rows(), tensors[i].cols());
  return out;
}

void ReaderParams::axpy(double scale, const ReaderParams& other) {
  for (std::size_t i = 0; i < kTensorCount; ++i) tensors[i] += scale * other.tensors[i];
}

void ReaderParams::scale(double factor) {
  for (auto& t : tensors) t *= factor;
}

std::string ReaderParams::content_hash() const {
  std::uint64_t h = fnv1a64(to_string(capacity));
  const int dims_raw[3] = {dims.embedding, dims.attention, dims.window};
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(dims_raw), sizeof dims_raw), h);
  for (const auto& t : tensors) {
    const Eigen::Index shape[2] = {t.rows(), t.cols()};
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(shape), sizeof shape), h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data()),
                                 static_cast<std::size_t>(t.size()) * sizeof(double)),
                h);
  }
  return hex64(h);
}

double& ReaderParams::coordinate(Eigen::Index flat_index) {
  for (auto& t : tensors) {
    if (flat_index < t.size()) return t.data()[flat_index];
    flat_index -= t.size();
  }
  throw InputError("parameter coordinate out of range");
}

ReaderParams init_params(Capacity capacity, std::shared_ptr<const Vocabulary> vocabulary, std::uint64_t seed) {
  if (!vocabulary || vocabulary->size() < 2) throw ConfigError("init_params needs a vocabulary");
  ReaderParams p;
  p.capacity = capacity;
  p.dims = dims_for(capacity);
  p.seed = seed;
  p.vocabulary = std::move(vocabulary);
  const int d = p.dims.embedding;
  const int a = p.dims.attention;
  const int w = p.dims.window;

  Rng rng(derive_seed(seed, std::string("reader-init/") + std::string(to_string(capacity))));
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    }
    return m;
  };
  auto fan_in = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  p[Tensor::embedding] = gaussian(p.vocabulary->size(), d, 1.0);
  p[Tensor::segment] = gaussian(kSegmentCount, d, 1.0);
  p[Tensor::conv] = gaussian(w * d, d, fan_in(w * d));
  p[Tensor::conv_bias] = Eigen::MatrixXd::Zero(1, d);
  p[Tensor::query] = gaussian(d, a, fan_in(d));
  p[Tensor::key] = gaussian(d, a, fan_in(d));
  p[Tensor::value] = gaussian(d, d, fan_in(d));
  p[Tensor::mix] = gaussian(3 * d, d, fan_in(3 * d));
  p[Tensor::mix_bias] = Eigen::MatrixXd::Zero(1, d);
  p[Tensor::start_head] = gaussian(d, 1, fan_in(d));
  p[Tensor::end_head] = gaussian(d, 1, fan_in(d));
  p[Tensor::null_bias] = Eigen::MatrixXd::Zero(2, 1);
  return p;
}

// ----------------------------- forward -----------------------------

ForwardState forward_state(const ReaderParams& params, const InputSequence& input) {
  const int L = input.length();
  if (L > kMaxInputLength) {
    throw InputLengthError("input length " + std::to_string(L) + " exceeds " + std::to_string(kMaxInputLength));
  }
  const int d = params.dims.embedding;
  const int w = params.dims.window;
  const int half = w / 2;
  const auto& E = params[Tensor::embedding];
  const auto& seg = params[Tensor::segment];

  ForwardState s;
  Eigen::MatrixXd x(L, d);
  for (int i = 0; i < L; ++i) x.row(i) = E.row(input.tokens[static_cast<std::size_t>(i)]) + seg.row(input.segment(i));

  s.window_input.setZero(L, w * d);
  for (int k = 0; k < w; ++k) {
    for (int i = 0; i < L; ++i) {
      const int src = i + k - half;
      if (src >= 0 && src < L) s.window_input.block(i, k * d, 1, d) = x.row(src);
    }
  }
  s.hidden = ((s.window_input * params[Tensor::conv]).rowwise() + params[Tensor::conv_bias].row(0)).array().tanh();

  s.queries = s.hidden * params[Tensor::query];
  s.keys = s.hidden * params[Tensor::key];
  s.values = s.hidden * params[Tensor::value];
  const double inv_sqrt_a = 1.0 / std::sqrt(static_cast<double>(params.dims.attention));
  Eigen::MatrixXd scores = (s.queries * s.keys.transpose()) * inv_sqrt_a;
  const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
  s.attention = (scores.colwise() - row_max).array().exp();
  const Eigen::VectorXd row_sum = s.attention.rowwise().sum();
  s.attention.array().colwise() /= row_sum.array();
  s.context = s.attention * s.values;

  s.mix_input.resize(L, 3 * d);
  s.mix_input.leftCols(d) = s.hidden;
  s.mix_input.middleCols(d, d) = s.context;
  s.mix_input.rightCols(d) = s.hidden.cwiseProduct(s.context);
  s.mixed = ((s.mix_input * params[Tensor::mix]).rowwise() + params[Tensor::mix_bias].row(0)).array().tanh();

  Eigen::VectorXd start_logits = s.mixed * params[Tensor::start_head];
  Eigen::VectorXd end_logits = s.mixed * params[Tensor::end_head];
  start_logits(0) += params[Tensor::null_bias](0, 0);
  end_logits(0) += params[Tensor::null_bias](1, 0);
  auto allowed = [&input](Eigen::Index i) { return input.allowed(static_cast<int>(i)); };
  s.start_log_probs = masked_log_softmax(start_logits, allowed);
  s.end_log_probs = masked_log_softmax(end_logits, allowed);
  return s;
}

SpanDistributions forward(const ReaderParams& params, const InputSequence& input) {
  const ForwardState s = forward_state(params, input);
  // Scalar exp: the vectorized one maps -inf to a denormal, not to zero.
  SpanDistributions z{s.start_log_probs.unaryExpr([](double x) { return std::exp(x); }),
                      s.end_log_probs.unaryExpr([](double x) { return std::exp(x); })};
#ifndef NDEBUG
  if (std::abs(z.start.sum() - 1.0) > 1e-6 || std::abs(z.end.sum() - 1.0) > 1e-6) {
    throw InputError("forward produced an unnormalized distribution");
  }
#endif
  return z;
}

// ----------------------------- backward -----------------------------

void backward(const ReaderParams& params, const InputSequence& input, const ForwardState& s,
              const HeadGradients& heads, ReaderParams& grad) {
  const int L = input.length();
  const int d = params.dims.embedding;
  const int w = params.dims.window;
  const int half = w / 2;

  const auto& ws = params[Tensor::start_head];
  const auto& we = params[Tensor::end_head];
  grad[Tensor::start_head].noalias() += s.mixed.transpose() * heads.start;
  grad[Tensor::end_head].noalias() += s.mixed.transpose() * heads.end;
  grad[Tensor::null_bias](0, 0) += heads.start(0);
  grad[Tensor::null_bias](1, 0) += heads.end(0);

  Eigen::MatrixXd d_mixed = heads.start * ws.transpose() + heads.end * we.transpose();
  const Eigen::MatrixXd d_mix_pre = d_mixed.array() * (1.0 - s.mixed.array().square());
  grad[Tensor::mix].noalias() += s.mix_input.transpose() * d_mix_pre;
  grad[Tensor::mix_bias] += d_mix_pre.colwise().sum();
  const Eigen::MatrixXd d_mix_input = d_mix_pre * params[Tensor::mix].transpose();

  Eigen::MatrixXd d_hidden = d_mix_input.leftCols(d) + d_mix_input.rightCols(d).cwiseProduct(s.context);
  const Eigen::MatrixXd d_context = d_mix_input.middleCols(d, d) + d_mix_input.rightCols(d).cwiseProduct(s.hidden);

  const Eigen::MatrixXd d_attention = d_context * s.values.transpose();
  const Eigen::MatrixXd d_values = s.attention.transpose() * d_context;
  const Eigen::VectorXd row_dot = (s.attention.cwiseProduct(d_attention)).rowwise().sum();
  const Eigen::MatrixXd d_scores =
      s.attention.cwiseProduct(d_attention - row_dot.replicate(1, L)) / std::sqrt(static_cast<double>(params.dims.attention));
  const Eigen::MatrixXd d_queries = d_scores * s.keys;
  const Eigen::MatrixXd d_keys = d_scores.transpose() * s.queries;

  grad[Tensor::query].noalias() += s.hidden.transpose() * d_queries;
  grad[Tensor::key].noalias() += s.hidden.transpose() * d_keys;
  grad[Tensor::value].noalias() += s.hidden.transpose() * d_values;
  d_hidden.noalias() += d_queries * params[Tensor::query].transpose();
  d_hidden.noalias() += d_keys * params[Tensor::key].transpose();
  d_hidden.noalias() += d_values * params[Tensor::value].transpose();

  const Eigen::MatrixXd d_hidden_pre = d_hidden.array() * (1.0 - s.hidden.array().square());
  grad[Tensor::conv].noalias() += s.window_input.transpose() * d_hidden_pre;
  grad[Tensor::conv_bias] += d_hidden_pre.colwise().sum();
  const Eigen::MatrixXd d_window = d_hidden_pre * params[Tensor::conv].transpose();

  auto& dE = grad[Tensor::embedding];
  auto& dSeg = grad[Tensor::segment];
  for (int j = 0; j < L; ++j) {
    Eigen::RowVectorXd dx = Eigen::RowVectorXd::Zero(d);
    for (int k = 0; k < w; ++k) {
      const int i = j - k + half;
      if (i >= 0 && i < L) dx += d_window.block(i, k * d, 1, d);
    }
    dE.row(input.tokens[static_cast<std::size_t>(j)]) += dx;
    dSeg.row(input.segment(j)) += dx;
  }
}

double batch_loss_and_grad(const ReaderParams& params, std::span<const EncodedExample> batch, const HeadLoss& loss,
                           ReaderParams* grad) {
  if (batch.empty()) throw InputError("empty batch");
  if (grad) *grad = params.zeros_like();
  double total = 0.0;
  HeadGradients heads;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& ex = batch[n];
    const ForwardState state = forward_state(params, ex.input);
    heads.start.setZero(ex.input.length());
    heads.end.setZero(ex.input.length());
    total += loss(n, state, heads);
    if (grad) backward(params, ex.input, state, heads, *grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (grad) grad->scale(inv);
  return total * inv;
}

double mle_loss_and_grad(const ReaderParams& params, std::span<const EncodedExample> batch, ReaderParams* grad) {
  return batch_loss_and_grad(
      params, batch,
      [&batch](std::size_t n, const ForwardState& s, HeadGradients& heads) {
        const auto& ex = batch[n];
        const auto& input = ex.input;
        for (int i = 0; i < input.length(); ++i) {
          if (!input.allowed(i)) continue;
          heads.start(i) = std::exp(s.start_log_probs(i));
          heads.end(i) = std::exp(s.end_log_probs(i));
        }
        heads.start(ex.start) -= 1.0;
        heads.end(ex.end) -= 1.0;
        return -(s.start_log_probs(ex.start) + s.end_log_probs(ex.end));
      },
      grad);
}

double mle_loss_and_grad(const ReaderParams& params, std::span<const Example> batch, ReaderParams* grad) {
  const auto encoded = encode_all(*params.vocabulary, batch);
  return mle_loss_and_grad(params, std::span<const EncodedExample>(encoded), grad);
}

// ----------------------------- inference -----------------------------

double Prediction::margin() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (span_score == -inf) return -inf;
  if (null_score == -inf) return inf;
  return span_score - null_score;
}

namespace {

Prediction predict_from_log_probs(const Eigen::VectorXd& ls, const Eigen::VectorXd& le, const InputSequence& input,
                                  double threshold) {
  Prediction p;
  const int begin = input.context_offset();
  const int end = begin + input.context_length;
  int best_j = begin;
  int best_k = begin;
  for (int j = begin; j < end; ++j) {
    const int last = std::min(end, j + kMaxAnswerLength);
    for (int k = j; k < last; ++k) {
      const double score = ls(j) + le(k);
      if (score > p.span_score) {
        p.span_score = score;
        best_j = j;
        best_k = k;
      }
    }
  }
  p.null_score = ls(0) + le(0);
  p.best_span = {input.to_context(best_j), input.to_context(best_k) + 1};
  if (!(p.margin() <= threshold)) p.answer = p.best_span;
  return p;
}

}  // namespace

Prediction predict_from(const SpanDistributions& z, const InputSequence& input, double threshold) {
  if (z.start.size() != input.length() || z.end.size() != input.length()) {
    throw InputError("distribution length does not match input");
  }
  return predict_from_log_probs(z.start.array().log(), z.end.array().log(), input, threshold);
}

Prediction predict(const ReaderParams& params, const InputSequence& input, double threshold) {
  const ForwardState s = forward_state(params, input);
  return predict_from_log_probs(s.start_log_probs, s.end_log_probs, input, threshold);
}

// ----------------------------- checkpoints -----------------------------

std::string checkpoint_to_json(const ReaderParams& params, const std::vector<std::string>& lineage) {
  nlohmann::ordered_json j;
  j["format"] = "synmrc-reader";
  j["version"] = 1;
  j["capacity"] = std::string(to_string(params.capacity));
  j["dims"] = {{"embedding", params.dims.embedding}, {"attention", params.dims.attention}, {"window", params.dims.window}};
  j["seed"] = params.seed;
  j["hash"] = params.content_hash();
  j["lineage"] = lineage;
  j["vocabulary"] = params.vocabulary->tokens();
  auto& tensors = j["tensors"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const auto& t = params.tensors[i];
    std::vector<double> data(t.data(), t.data() + t.size());
    tensors[std::string(tensor_name(static_cast<Tensor>(i)))] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}};
  }
  return j.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "synmrc-reader") throw InputError("not a synmrc reader checkpoint");
  if (j.at("version").get<int>() != 1) throw InputError("unsupported checkpoint version");
  Checkpoint c;
  ReaderParams& p = c.params;
  p.capacity = capacity_from_string(j.at("capacity").get<std::string>());
  p.dims = {j["dims"].at("embedding").get<int>(), j["dims"].at("attention").get<int>(), j["dims"].at("window").get<int>()};
  p.seed = j.at("seed").get<std::uint64_t>();
  p.vocabulary = std::make_shared<const Vocabulary>(j.at("vocabulary").get<std::vector<std::string>>());
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    const auto& t = j.at("tensors").at(std::string(tensor_name(static_cast<Tensor>(i))));
    const auto data = t.at("data").get<std::vector<double>>();
    Eigen::MatrixXd m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    if (static_cast<std::size_t>(m.size()) != data.size()) throw InputError("tensor shape mismatch");
    std::copy(data.begin(), data.end(), m.data());
    p.tensors[i] = std::move(m);
  }
  c.lineage = j.at("lineage").get<std::vector<std::string>>();
  if (p.content_hash() != j.at("hash").get<std::string>()) throw InputError("checkpoint content hash mismatch");
  return c;
}

std::filesystem::path save_checkpoint(const std::filesystem::path& dir, const ReaderParams& params,
                                      const std::vector<std::string>& lineage) {
  const auto path = dir / (params.content_hash() + ".json");
  write_file(path, checkpoint_to_json(params, lineage));
  return path;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_file(path)); }

}  // namespace synmrc
