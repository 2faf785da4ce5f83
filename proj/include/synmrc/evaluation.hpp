#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synmrc/core.hpp"
#include "synmrc/reader.hpp"

namespace synmrc {

struct MetricsReport {
  double overall_f1 = 0.0;
  double answerable_f1 = 0.0;
  double unanswerable_accuracy = 0.0;
  double threshold = 0.0;
  int n_examples = 0;
  int n_answerable = 0;
  int n_unanswerable = 0;
  std::string split;
};

/// Multiset token overlap F1. Both empty counts as a match.
double token_f1(std::span<const std::string> predicted, std::span<const std::string> gold);

/// SQuAD2.0 convention: both NoAnswer -> 1, exactly one NoAnswer -> 0,
/// otherwise token F1 over the context tokens of the two spans.
double example_score(const std::optional<Span>& predicted, const Example& gold);

/// Reader outputs needed to score a dataset at any threshold.
struct ScoredPrediction {
  double margin = 0.0;         // span_score - null_score
  double score_if_answered = 0.0;
  double score_if_null = 0.0;
  bool gold_answerable = false;
};

std::vector<ScoredPrediction> score_predictions(const ReaderParams& params, std::span<const Example> dataset);

MetricsReport metrics_at(std::span<const ScoredPrediction> scored, double threshold, std::string split);

/// Candidates are -inf, the sorted distinct margins, and +inf; the smallest
/// maximizer of overall F1 wins.
std::pair<double, MetricsReport> best_threshold(std::span<const ScoredPrediction> scored, std::string split = "dev");
std::pair<double, MetricsReport> best_threshold(const ReaderParams& params, std::span<const Example> dev_set);

MetricsReport evaluate(const ReaderParams& params, std::span<const Example> dataset, double threshold,
                       std::string split = "");

struct DevTestReport {
  MetricsReport dev;
  MetricsReport test;
};

/// Tunes the threshold on dev and applies it unchanged to test. There is no
/// entry point that tunes on test.
DevTestReport evaluate_dev_test(const ReaderParams& params, std::span<const Example> dev,
                                std::span<const Example> test);

struct SeedReport {
  std::string condition;
  int seed = 0;
  MetricsReport metrics;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct AggregateReport {
  std::string condition;
  std::string split;
  int n_seeds = 0;
  MeanStd overall_f1;
  MeanStd answerable_f1;
  MeanStd unanswerable_accuracy;
};

/// Arithmetic mean and sample standard deviation (n - 1; zero for one seed).
MeanStd mean_std(std::span<const double> values);

/// Throws AggregationError when the reports mix conditions or splits.
AggregateReport aggregate_seeds(std::span<const SeedReport> reports);

}  // namespace synmrc
