#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "synmrc/core.hpp"
#include "synmrc/world.hpp"

namespace synmrc {

struct GenConfig {
  double top_p = 0.9;
  int top_k = 10;
  double noise_rate = 0.15;
  int examples_per_context = 5;
  double unanswerable_ratio = 0.25;  // NoAnswer count relative to answerable count
  std::uint64_t seed = 0;
};

void validate(const GenConfig& config);

struct Candidate {
  Span sentence_span;
  Span answer_span;
  Tokens question;
};

struct CandidateDistribution {
  std::vector<Candidate> candidates;
  Eigen::VectorXd weights;

  bool empty() const { return candidates.empty(); }
};

/// Every (sentence, answer, question) triple derivable from the facts of the
/// paragraph, enumerated sentence by sentence then template by template, with
/// uniform plausibility. Empty when the paragraph carries no fact.
CandidateDistribution candidate_distribution(const Paragraph& context, const World& world);

/// Indices kept by top-k then top-p truncation, in descending weight order
/// (ties by index). Cumulative mass is measured on the original weights.
std::vector<int> top_p_top_k_support(const Eigen::Ref<const Eigen::VectorXd>& dist, double p, int k);

/// Samples from the truncated, renormalized distribution. Throws InputError on
/// unnormalized input or invalid p/k.
int top_p_top_k_sample(const Eigen::Ref<const Eigen::VectorXd>& dist, double p, int k, Rng& rng);

/// With probability `noise_rate` moves the answer to a uniformly chosen
/// different span of the same length. The Bernoulli draw always happens so
/// the stream stays aligned.
Example inject_noise(const Example& example, double noise_rate, Rng& rng);

/// Re-pairs the question with a uniformly chosen different paragraph of
/// `document`.
Example make_unanswerable(const Example& example, const Document& document, Rng& rng);

struct SyntheticDataset {
  std::vector<Example> examples;
  GenConfig gen_config;
  std::string provenance;

  std::size_t answerable_count() const;
  std::size_t unanswerable_count() const { return examples.size() - answerable_count(); }
};

/// Generates from the world's unlabeled documents (all documents when none is
/// flagged). Each paragraph draws from its own stream derived from
/// (seed, doc_id, paragraph), so output does not depend on visiting order.
SyntheticDataset generate_corpus(const World& world, const GenConfig& config);

}  // namespace synmrc
