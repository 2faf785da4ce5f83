#include "synmrc/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace synmrc {

void validate(const GenConfig& c) {
  if (!(c.top_p > 0.0 && c.top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (c.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (c.noise_rate < 0.0 || c.noise_rate > 1.0) throw ConfigError("noise_rate must lie in [0, 1]");
  if (c.examples_per_context < 1) throw ConfigError("examples_per_context must be >= 1");
  if (c.unanswerable_ratio < 0.0 || c.unanswerable_ratio > 1.0) {
    throw ConfigError("unanswerable_ratio must lie in [0, 1]");
  }
}

CandidateDistribution candidate_distribution(const Paragraph& context, const World& world) {
  CandidateDistribution dist;
  for (const Sentence& s : context.sentences) {
    if (!s.fact) continue;
    const Fact& fact = world.facts.at(static_cast<std::size_t>(*s.fact));
    for (int t = 0; t < world.config.templates_per_relation; ++t) {
      auto q = render_question(world, fact, t);
      dist.candidates.push_back({s.span, answer_span(s, q.asks), std::move(q.tokens)});
    }
  }
  const auto n = static_cast<Eigen::Index>(dist.candidates.size());
  dist.weights = n > 0 ? Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)) : Eigen::VectorXd();
  return dist;
}

std::vector<int> top_p_top_k_support(const Eigen::Ref<const Eigen::VectorXd>& dist, double p, int k) {
  if (!(p > 0.0 && p <= 1.0)) throw InputError("top_p must lie in (0, 1]");
  if (k < 1) throw InputError("top_k must be >= 1");
  if (dist.size() == 0) throw InputError("empty distribution");
  if ((dist.array() < 0.0).any() || std::abs(dist.sum() - 1.0) > 1e-6) {
    throw InputError("distribution is not normalized");
  }
  std::vector<int> order(static_cast<std::size_t>(dist.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] > dist[b]; });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));

  std::vector<int> support;
  double mass = 0.0;
  for (int i : order) {
    if (dist[i] <= 0.0) break;
    support.push_back(i);
    mass += dist[i];
    if (mass >= p) break;
  }
  return support;
}

int top_p_top_k_sample(const Eigen::Ref<const Eigen::VectorXd>& dist, double p, int k, Rng& rng) {
  const auto support = top_p_top_k_support(dist, p, k);
  double total = 0.0;
  for (int i : support) total += dist[i];
  double u = rng.uniform() * total;
  for (int i : support) {
    u -= dist[i];
    if (u < 0.0) return i;
  }
  return support.back();
}

namespace {

// Sentences end with "."; returns the run of whole sentences covering `span`.
Span covering_sentences(const Tokens& context, const Span& span) {
  int begin = span.start;
  while (begin > 0 && context[static_cast<std::size_t>(begin - 1)] != ".") --begin;
  int end = span.end;
  while (end < static_cast<int>(context.size()) && context[static_cast<std::size_t>(end - 1)] != ".") ++end;
  return {begin, end};
}

}  // namespace

Example inject_noise(const Example& example, double noise_rate, Rng& rng) {
  if (!example.answer) throw InputError("inject_noise needs an answerable example");
  Example out = example;
  if (!rng.bernoulli(noise_rate)) return out;
  const int len = example.answer->length();
  const int positions = static_cast<int>(example.context.size()) - len + 1;
  if (positions <= 1) {
    out.uncorruptible = true;
    return out;
  }
  int start = static_cast<int>(rng.below(static_cast<std::size_t>(positions - 1)));
  if (start >= example.answer->start) ++start;
  out.answer = Span{start, start + len};
  out.sentence_span = covering_sentences(example.context, *out.answer);
  out.corrupted = true;
  return out;
}

Example make_unanswerable(const Example& example, const Document& document, Rng& rng) {
  const int n = static_cast<int>(document.paragraphs.size());
  if (n < 2) throw PairingError("document " + document.doc_id + " has a single paragraph");
  const int from = paragraph_of(example);
  if (from < 0 || from >= n || document.paragraphs[static_cast<std::size_t>(from)].tokens != example.context) {
    throw PairingError(example.example_id + " is not a paragraph of " + document.doc_id);
  }
  int to = static_cast<int>(rng.below(static_cast<std::size_t>(n - 1)));
  if (to >= from) ++to;
  Example out = example;
  const auto slash = example.example_id.rfind('/');
  out.example_id = make_example_id(example.example_id.substr(0, example.example_id.find('/')), document.doc_id, to,
                                   "u" + std::to_string(from) + "-" + example.example_id.substr(slash + 1));
  out.context = document.paragraphs[static_cast<std::size_t>(to)].tokens;
  out.answer.reset();
  out.sentence_span.reset();
  out.corrupted = false;
  out.uncorruptible = false;
  return out;
}

std::size_t SyntheticDataset::answerable_count() const {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(), [](const Example& e) { return e.answerable(); }));
}

SyntheticDataset generate_corpus(const World& world, const GenConfig& config) {
  validate(config);
  SyntheticDataset out;
  out.gen_config = config;
  out.provenance = "world:" + std::to_string(world.seed);

  std::vector<const Document*> docs;
  for (const auto& d : world.documents) {
    if (d.unlabeled) docs.push_back(&d);
  }
  if (docs.empty()) {
    for (const auto& d : world.documents) docs.push_back(&d);
  }

  const std::uint64_t gen_seed = derive_seed(config.seed, "generator");
  std::unordered_set<std::string> seen;
  std::vector<Example> answerable;
  for (const Document* doc : docs) {
    for (std::size_t p = 0; p < doc->paragraphs.size(); ++p) {
      const Paragraph& para = doc->paragraphs[p];
      const auto dist = candidate_distribution(para, world);
      if (dist.empty()) continue;
      Rng rng(derive_seed(gen_seed, doc->doc_id + "/p" + std::to_string(p)));
      for (int draw = 0; draw < config.examples_per_context; ++draw) {
        const auto& cand = dist.candidates[static_cast<std::size_t>(
            top_p_top_k_sample(dist.weights, config.top_p, config.top_k, rng))];
        Example e;
        e.example_id = make_example_id("syn", doc->doc_id, static_cast<int>(p), std::to_string(draw));
        e.context = para.tokens;
        e.question = cand.question;
        e.answer = cand.answer_span;
        e.sentence_span = cand.sentence_span;
        e.source = Source::synthetic;
        e = inject_noise(e, config.noise_rate, rng);
        if (seen.insert(triple_key(e)).second) answerable.push_back(std::move(e));
      }
    }
  }

  const auto n_unans = static_cast<std::size_t>(std::lround(config.unanswerable_ratio * answerable.size()));
  Rng pair_rng(derive_seed(gen_seed, "unanswerable"));
  std::vector<std::size_t> order(answerable.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  pair_rng.shuffle(order);
  std::vector<Example> unanswerable;
  for (std::size_t i : order) {
    if (unanswerable.size() == n_unans) break;
    const Example& src = answerable[i];
    Example u = make_unanswerable(src, world.document(document_of(src)), pair_rng);
    if (seen.insert(triple_key(u)).second) unanswerable.push_back(std::move(u));
  }

  out.examples = std::move(answerable);
  out.examples.insert(out.examples.end(), std::make_move_iterator(unanswerable.begin()),
                      std::make_move_iterator(unanswerable.end()));
  return out;
}

}  // namespace synmrc
