#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lerg/core.h"
#include "lerg/explain.h"
#include "lerg/models.h"

namespace lerg {

// Metrics clamp probabilities at this floor before taking logs and count
// every clamped token.
inline constexpr double kMetricProbabilityClamp = 1e-12;

enum class Metric {
  kPplcR,  // perplexity change after removing the selected segments
  kPplA,   // perplexity given only the selected segments
  kPpl,    // perplexity given the full input
};

std::string_view metric_name(Metric metric);  // "PPLC_R", "PPL_A", "PPL"
Metric parse_metric(std::string_view name);

enum class Baseline { kMethod, kRandom };

// value = exp(log_sum / tokens), where log_sum is the exponent's numerator:
//   PPLC_R: sum_j log P(y_j | x) - log P(y_j | x_R)
//   PPL_A:  -sum_j log P(y_j | x_A)
//   PPL:    -sum_j log P(y_j | x)
struct MetricValue {
  double value = 1.0;
  double log_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t clamped = 0;
};

MetricValue perplexity_change_of_removal(const Generator& model,
                                         const Example& example,
                                         std::span<const std::size_t> removed);
MetricValue perplexity_of_kept(const Generator& model, const Example& example,
                               std::span<const std::size_t> kept);
MetricValue full_perplexity(const Generator& model, const Example& example);

// PPLC_R with x_R = context minus top_k_segments(saliency, ratio).
// Requires 0 < ratio < 1; throws DegenerateInput if nothing would remain.
double pplc_r(const Generator& model, const Example& example,
              const Saliency& saliency, double ratio);

// PPL_A with x_A = top_k_segments(saliency, ratio) in original order.
double ppl_a(const Generator& model, const Example& example,
             const Saliency& saliency, double ratio);

struct MetricCurve {
  std::vector<double> ratios;
  std::vector<double> values;
  Metric metric = Metric::kPplcR;
  Baseline baseline = Baseline::kMethod;
};

MetricCurve method_curve(const Generator& model, const Example& example,
                         const Saliency& saliency, Metric metric,
                         std::span<const double> ratios);

// Mean over trials of the metric for uniformly random segment subsets of the
// size top_k would select.
MetricCurve random_baseline_curve(const Generator& model, const Example& example,
                                  Metric metric, std::span<const double> ratios,
                                  std::size_t trials, std::uint64_t seed);

inline constexpr std::string_view kRandomMethodName = "random";
inline constexpr std::string_view kFullMethodName = "full";

struct SweepConfig {
  std::vector<Method> methods;
  bool include_random = true;
  std::vector<Metric> metrics{Metric::kPplcR, Metric::kPplA};
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  ExplainOptions explain;  // plan.seed is the master seed
  std::size_t random_trials = 10;
  Reduction reduction = Reduction::kSumOverJ;
  std::size_t threads = 1;
};

// One (example, method, metric, ratio) cell. A method cell has one log sum;
// a random-baseline cell has one per trial and value = mean of the per-trial
// metric values.
struct MetricRecord {
  std::string example_id;
  std::string method;
  Metric metric = Metric::kPplcR;
  double ratio = 0.0;
  std::vector<double> log_sums;
  std::size_t tokens = 0;
  std::size_t clamped = 0;
  double value = 0.0;
};

// Recomputes a record's value from its stored raw sums.
double recompose_value(const MetricRecord& record);

struct CorpusAggregate {
  std::string method;
  Metric metric = Metric::kPplcR;
  double ratio = 0.0;
  std::size_t examples = 0;
  std::size_t tokens = 0;
  double log_sum = 0.0;           // sum over examples of mean-over-trials sums
  double token_mean = 0.0;        // exp(log_sum / tokens), primary aggregate
  double example_mean = 0.0;      // mean of per-example values
};

struct ExampleFailure {
  std::string example_id;
  std::string code;
  std::string message;
};

struct CorpusReport {
  std::vector<MetricRecord> records;  // sorted by example id, then method
  std::vector<CorpusAggregate> aggregates;
  std::vector<ExampleFailure> failures;
  std::uint64_t seed = 0;
  std::size_t clamped_tokens = 0;
};

// Per-example seed derived from the master seed and the example id, so
// results do not depend on corpus order.
std::uint64_t example_seed(std::uint64_t master, std::string_view example_id);

CorpusReport sweep(const Generator& model, std::span<const Example> corpus,
                   const SweepConfig& config);

// Token-weighted and example-mean aggregates of the given records.
std::vector<CorpusAggregate> aggregate_records(
    std::span<const MetricRecord> records);

}  // namespace lerg
