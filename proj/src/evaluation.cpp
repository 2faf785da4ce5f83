#include "synmrc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace synmrc {

double token_f1(std::span<const std::string> predicted, std::span<const std::string> gold) {
  if (predicted.empty() || gold.empty()) return predicted.empty() && gold.empty() ? 1.0 : 0.0;
  std::map<std::string_view, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : predicted) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(predicted.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

double example_score(const std::optional<Span>& predicted, const Example& gold) {
  if (!predicted && !gold.answer) return 1.0;
  if (!predicted || !gold.answer) return 0.0;
  const std::span<const std::string> ctx(gold.context);
  return token_f1(ctx.subspan(static_cast<std::size_t>(predicted->start), static_cast<std::size_t>(predicted->length())),
                  ctx.subspan(static_cast<std::size_t>(gold.answer->start), static_cast<std::size_t>(gold.answer->length())));
}

std::vector<ScoredPrediction> score_predictions(const ReaderParams& params, std::span<const Example> dataset) {
  std::vector<ScoredPrediction> out;
  out.reserve(dataset.size());
  for (const auto& e : dataset) {
    const auto input = tokenize_pair(*params.vocabulary, e.question, e.context);
    const Prediction p = predict(params, input, std::numeric_limits<double>::infinity());
    ScoredPrediction s;
    s.margin = p.margin();
    s.gold_answerable = e.answerable();
    s.score_if_answered = example_score(p.best_span, e);
    s.score_if_null = example_score(std::nullopt, e);
    out.push_back(s);
  }
  return out;
}

MetricsReport metrics_at(std::span<const ScoredPrediction> scored, double threshold, std::string split) {
  MetricsReport r;
  r.threshold = threshold;
  r.split = std::move(split);
  r.n_examples = static_cast<int>(scored.size());
  double total = 0.0, ans = 0.0, unans = 0.0;
  for (const auto& s : scored) {
    const double v = s.margin <= threshold ? s.score_if_null : s.score_if_answered;
    total += v;
    if (s.gold_answerable) {
      ans += v;
      ++r.n_answerable;
    } else {
      unans += v;
      ++r.n_unanswerable;
    }
  }
  if (r.n_examples > 0) r.overall_f1 = total / r.n_examples;
  if (r.n_answerable > 0) r.answerable_f1 = ans / r.n_answerable;
  if (r.n_unanswerable > 0) r.unanswerable_accuracy = unans / r.n_unanswerable;
  return r;
}

std::pair<double, MetricsReport> best_threshold(std::span<const ScoredPrediction> scored, std::string split) {
  if (scored.empty()) throw InputError("best_threshold needs a non-empty dev set");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> candidates{-inf, inf};
  for (const auto& s : scored) candidates.push_back(s.margin);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Sweep upward: passing a candidate turns every example with that margin
  // into NoAnswer.
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scored[a].margin < scored[b].margin; });
  double total = 0.0;
  for (const auto& s : scored) total += s.score_if_answered;
  double best_total = -1.0;
  double best_tau = -inf;
  std::size_t cursor = 0;
  for (double tau : candidates) {
    while (cursor < order.size() && scored[order[cursor]].margin <= tau) {
      total += scored[order[cursor]].score_if_null - scored[order[cursor]].score_if_answered;
      ++cursor;
    }
    if (total > best_total + 1e-12) {
      best_total = total;
      best_tau = tau;
    }
  }
  return {best_tau, metrics_at(scored, best_tau, std::move(split))};
}

std::pair<double, MetricsReport> best_threshold(const ReaderParams& params, std::span<const Example> dev_set) {
  const auto scored = score_predictions(params, dev_set);
  return best_threshold(scored, "dev");
}

MetricsReport evaluate(const ReaderParams& params, std::span<const Example> dataset, double threshold, std::string split) {
  const auto scored = score_predictions(params, dataset);
  return metrics_at(scored, threshold, std::move(split));
}

DevTestReport evaluate_dev_test(const ReaderParams& params, std::span<const Example> dev, std::span<const Example> test) {
  auto [tau, dev_report] = best_threshold(params, dev);
  return {dev_report, evaluate(params, test, tau, "test")};
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
    out.mean = values.front();  // exact for identical values
    return out;
  }
  {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

AggregateReport aggregate_seeds(std::span<const SeedReport> reports) {
  if (reports.empty()) throw AggregationError("no reports to aggregate");
  AggregateReport out;
  out.condition = reports.front().condition;
  out.split = reports.front().metrics.split;
  std::vector<double> f1, ans, unans;
  for (const auto& r : reports) {
    if (r.condition != out.condition || r.metrics.split != out.split) {
      throw AggregationError("cannot aggregate '" + r.condition + "/" + r.metrics.split + "' with '" + out.condition +
                             "/" + out.split + "'");
    }
    f1.push_back(r.metrics.overall_f1);
    ans.push_back(r.metrics.answerable_f1);
    unans.push_back(r.metrics.unanswerable_accuracy);
  }
  out.n_seeds = static_cast<int>(reports.size());
  out.overall_f1 = mean_std(f1);
  out.answerable_f1 = mean_std(ans);
  out.unanswerable_accuracy = mean_std(unans);
  return out;
}

}  // namespace synmrc
