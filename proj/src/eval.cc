#include "lerg/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

#include <spdlog/spdlog.h>

#include "lerg/perturb.h"
#include "lerg/rng.h"

namespace lerg {
namespace {

const double kLogClamp = std::log(kMetricProbabilityClamp);

void require_normalized(const Generator& model) {
  if (!model.manifest().normalized) {
    throw Error(ErrorCode::kValidationError,
                "perplexity metrics need a normalized model; this " +
                    std::string(model_kind_name(model.manifest().kind)) +
                    " model declares unnormalized scores");
  }
}

double clamp_log(double logp, std::size_t& clamped) {
  if (logp < kLogClamp) {
    ++clamped;
    return kLogClamp;
  }
  return logp;
}

Mask mask_from_indices(std::size_t size, std::span<const std::size_t> indices,
                       bool selected_value) {
  std::vector<std::uint8_t> bits(size, selected_value ? 0 : 1);
  for (std::size_t i : indices) {
    if (i >= size) {
      throw Error(ErrorCode::kValidationError, "segment index out of range");
    }
    bits[i] = selected_value ? 1 : 0;
  }
  return Mask(std::move(bits));
}

MetricValue finish(double log_sum, std::size_t tokens, std::size_t clamped) {
  MetricValue v;
  v.log_sum = log_sum;
  v.tokens = tokens;
  v.clamped = clamped;
  v.value = std::exp(log_sum / static_cast<double>(tokens));
  return v;
}

void require_ratio(double ratio, bool allow_one) {
  const bool ok = ratio > 0.0 && (allow_one ? ratio <= 1.0 : ratio < 1.0);
  if (!ok) {
    throw Error(ErrorCode::kValidationError,
                std::string("ratio must be in (0, 1") + (allow_one ? "]" : ")") +
                    ", got " + std::to_string(ratio));
  }
}

MetricValue metric_for_selection(const Generator& model, const Example& example,
                                 Metric metric,
                                 std::span<const std::size_t> selected) {
  return metric == Metric::kPplcR
             ? perplexity_change_of_removal(model, example, selected)
             : perplexity_of_kept(model, example, selected);
}

// Per ratio, one metric value per random trial.
std::vector<std::vector<MetricValue>> random_cells(
    const Generator& model, const Example& example, Metric metric,
    std::span<const double> ratios, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) {
    throw Error(ErrorCode::kValidationError, "random baseline needs trials >= 1");
  }
  const std::size_t m = example.context_size();
  std::vector<std::vector<MetricValue>> out;
  std::vector<std::size_t> pool(m);
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    require_ratio(ratios[r], metric != Metric::kPplcR);
    const std::size_t k = top_k_count(ratios[r], m);
    Rng rng = Rng::split(seed, r);
    std::vector<MetricValue> cell;
    for (std::size_t t = 0; t < trials; ++t) {
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t q = 0; q < k; ++q) {
        std::swap(pool[q], pool[q + rng.uniform_below(m - q)]);
      }
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + k);
      std::sort(chosen.begin(), chosen.end());
      cell.push_back(metric_for_selection(model, example, metric, chosen));
    }
    out.push_back(std::move(cell));
  }
  return out;
}

std::uint64_t random_stream_seed(std::uint64_t example_seed, Metric metric) {
  return splitmix64(example_seed ^ stable_hash(metric_name(metric)));
}

}  // namespace

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kPplcR: return "PPLC_R";
    case Metric::kPplA: return "PPL_A";
    case Metric::kPpl: return "PPL";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::kPplcR, Metric::kPplA, Metric::kPpl}) {
    if (metric_name(m) == name) return m;
  }
  throw Error(ErrorCode::kValidationError,
              "unknown metric '" + std::string(name) + "'");
}

MetricValue perplexity_change_of_removal(const Generator& model,
                                         const Example& example,
                                         std::span<const std::size_t> removed) {
  require_normalized(model);
  validate_example(example);
  const std::size_t m = example.context_size();
  const Mask remaining = mask_from_indices(m, removed, /*selected_value=*/false);
  if (remaining.kept_count() == 0) {
    throw Error(ErrorCode::kDegenerateInput,
                "removal would empty the context of example '" + example.id + "'");
  }
  const std::vector<std::vector<std::string>> contexts{
      example.context.segments(), perturbed_context(example.context, remaining)};
  const auto scores = model.score_batch(contexts, example.response);
  std::size_t clamped = 0;
  double log_sum = 0.0;
  for (std::size_t j = 0; j < example.response_size(); ++j) {
    log_sum += clamp_log(scores[0][j], clamped) - clamp_log(scores[1][j], clamped);
  }
  return finish(log_sum, example.response_size(), clamped);
}

MetricValue perplexity_of_kept(const Generator& model, const Example& example,
                               std::span<const std::size_t> kept) {
  require_normalized(model);
  validate_example(example);
  const Mask mask =
      mask_from_indices(example.context_size(), kept, /*selected_value=*/true);
  const auto scores =
      model.score(perturbed_context(example.context, mask), example.response);
  std::size_t clamped = 0;
  double log_sum = 0.0;
  for (double logp : scores) log_sum -= clamp_log(logp, clamped);
  return finish(log_sum, example.response_size(), clamped);
}

MetricValue full_perplexity(const Generator& model, const Example& example) {
  std::vector<std::size_t> all(example.context_size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return perplexity_of_kept(model, example, all);
}

double pplc_r(const Generator& model, const Example& example,
              const Saliency& saliency, double ratio) {
  require_ratio(ratio, /*allow_one=*/false);
  const auto removed = top_k_segments(saliency, ratio);
  return perplexity_change_of_removal(model, example, removed).value;
}

double ppl_a(const Generator& model, const Example& example,
             const Saliency& saliency, double ratio) {
  require_ratio(ratio, /*allow_one=*/true);
  const auto kept = top_k_segments(saliency, ratio);
  return perplexity_of_kept(model, example, kept).value;
}

MetricCurve method_curve(const Generator& model, const Example& example,
                         const Saliency& saliency, Metric metric,
                         std::span<const double> ratios) {
  MetricCurve curve;
  curve.metric = metric;
  curve.baseline = Baseline::kMethod;
  for (double ratio : ratios) {
    curve.ratios.push_back(ratio);
    curve.values.push_back(metric == Metric::kPplcR
                               ? pplc_r(model, example, saliency, ratio)
                               : ppl_a(model, example, saliency, ratio));
  }
  return curve;
}

MetricCurve random_baseline_curve(const Generator& model, const Example& example,
                                  Metric metric, std::span<const double> ratios,
                                  std::size_t trials, std::uint64_t seed) {
  MetricCurve curve;
  curve.metric = metric;
  curve.baseline = Baseline::kRandom;
  const auto cells = random_cells(model, example, metric, ratios, trials, seed);
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    double sum = 0.0;
    for (const auto& v : cells[r]) sum += v.value;
    curve.ratios.push_back(ratios[r]);
    curve.values.push_back(sum / static_cast<double>(cells[r].size()));
  }
  return curve;
}

double recompose_value(const MetricRecord& record) {
  double sum = 0.0;
  for (double s : record.log_sums) {
    sum += std::exp(s / static_cast<double>(record.tokens));
  }
  return sum / static_cast<double>(record.log_sums.size());
}

std::uint64_t example_seed(std::uint64_t master, std::string_view example_id) {
  return splitmix64(master ^ splitmix64(stable_hash(example_id)));
}

namespace {

MetricRecord make_record(const Example& example, std::string method,
                         Metric metric, double ratio,
                         std::span<const MetricValue> values) {
  MetricRecord rec;
  rec.example_id = example.id;
  rec.method = std::move(method);
  rec.metric = metric;
  rec.ratio = ratio;
  rec.tokens = example.response_size();
  for (const auto& v : values) {
    rec.log_sums.push_back(v.log_sum);
    rec.clamped += v.clamped;
  }
  rec.value = recompose_value(rec);
  return rec;
}

std::vector<MetricRecord> evaluate_example(const Generator& model,
                                           const Example& example,
                                           const SweepConfig& config,
                                           std::uint64_t master_seed) {
  validate_example(example);
  std::vector<MetricRecord> records;
  const auto full = full_perplexity(model, example);
  records.push_back(make_record(example, std::string(kFullMethodName), Metric::kPpl,
                                1.0, std::span(&full, 1)));

  const std::uint64_t seed = example_seed(master_seed, example.id);
  ExplainOptions options = config.explain;
  options.plan.seed = seed;

  for (Method method : config.methods) {
    const auto phi = explain(method, model, example, options);
    const auto saliency = saliency_of(phi, config.reduction);
    for (Metric metric : config.metrics) {
      for (double ratio : config.ratios) {
        if (metric == Metric::kPplcR && ratio >= 1.0) continue;
        const auto selected = top_k_segments(saliency, ratio);
        const auto value = metric_for_selection(model, example, metric, selected);
        records.push_back(make_record(example, std::string(method_name(method)),
                                      metric, ratio, std::span(&value, 1)));
      }
    }
  }
  if (config.include_random) {
    for (Metric metric : config.metrics) {
      std::vector<double> ratios;
      for (double r : config.ratios) {
        if (!(metric == Metric::kPplcR && r >= 1.0)) ratios.push_back(r);
      }
      const auto cells = random_cells(model, example, metric, ratios,
                                      config.random_trials,
                                      random_stream_seed(seed, metric));
      for (std::size_t r = 0; r < ratios.size(); ++r) {
        records.push_back(make_record(example, std::string(kRandomMethodName),
                                      metric, ratios[r], cells[r]));
      }
    }
  }
  return records;
}

}  // namespace

std::vector<CorpusAggregate> aggregate_records(
    std::span<const MetricRecord> records) {
  using Key = std::tuple<std::string, int, double>;
  std::map<Key, CorpusAggregate> groups;
  for (const auto& rec : records) {
    const Key key{rec.method, static_cast<int>(rec.metric), rec.ratio};
    auto [it, inserted] = groups.try_emplace(key);
    auto& agg = it->second;
    if (inserted) {
      agg.method = rec.method;
      agg.metric = rec.metric;
      agg.ratio = rec.ratio;
    }
    double mean_sum = 0.0;
    for (double s : rec.log_sums) mean_sum += s;
    mean_sum /= static_cast<double>(rec.log_sums.size());
    agg.log_sum += mean_sum;
    agg.tokens += rec.tokens;
    agg.example_mean += rec.value;
    ++agg.examples;
  }
  std::vector<CorpusAggregate> out;
  for (auto& [key, agg] : groups) {
    agg.token_mean = std::exp(agg.log_sum / static_cast<double>(agg.tokens));
    agg.example_mean /= static_cast<double>(agg.examples);
    out.push_back(agg);
  }
  return out;
}

CorpusReport sweep(const Generator& model, std::span<const Example> corpus,
                   const SweepConfig& config) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "sweep needs at least one example");
  }
  require_normalized(model);
  for (double r : config.ratios) require_ratio(r, /*allow_one=*/true);
  std::set<std::string> ids;
  for (const auto& ex : corpus) {
    if (!ids.insert(ex.id).second) {
      throw Error(ErrorCode::kValidationError, "duplicate example id '" + ex.id + "'");
    }
  }

  // Evaluate in id order so every reduction below is order independent.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus[a].id < corpus[b].id;
  });

  struct Outcome {
    std::vector<MetricRecord> records;
    bool failed = false;
    ExampleFailure failure;
  };
  std::vector<Outcome> outcomes(order.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < order.size(); k = next++) {
      const Example& ex = corpus[order[k]];
      try {
        outcomes[k].records = evaluate_example(model, ex, config, config.explain.plan.seed);
      } catch (const Error& e) {
        outcomes[k].failed = true;
        outcomes[k].failure = {ex.id, std::string(error_code_name(e.code())), e.what()};
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, order.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  CorpusReport report;
  report.seed = config.explain.plan.seed;
  for (auto& outcome : outcomes) {
    if (outcome.failed) {
      spdlog::warn("example '{}' excluded: {} {}", outcome.failure.example_id,
                   outcome.failure.code, outcome.failure.message);
      report.failures.push_back(std::move(outcome.failure));
      continue;
    }
    for (auto& rec : outcome.records) {
      report.clamped_tokens += rec.clamped;
      report.records.push_back(std::move(rec));
    }
  }
  if (report.records.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "every example in the sweep failed");
  }
  report.aggregates = aggregate_records(report.records);
  return report;
}

}  // namespace lerg
