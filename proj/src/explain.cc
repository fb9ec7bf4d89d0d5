#include "lerg/explain.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "mask_scorer.h"

namespace lerg {
namespace internal {

void MaskScorer::prefetch(std::span<const Mask> masks) {
  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> contexts;
  std::unordered_map<std::string, bool> queued;
  for (const auto& mask : masks) {
    auto k = key(mask);
    if (cache_.contains(k) || queued.contains(k)) continue;
    queued.emplace(k, true);
    contexts.push_back(
        perturbed_context(example_.context, mask, mode_, placeholder_));
    keys.push_back(std::move(k));
  }
  if (contexts.empty()) return;
  auto scores = model_.score_batch(contexts, example_.response);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    cache_.emplace(std::move(keys[k]), std::move(scores[k]));
  }
}

const StepLogProbs& MaskScorer::get(const Mask& mask) {
  auto it = cache_.find(key(mask));
  if (it == cache_.end()) {
    const Mask one[] = {mask};
    prefetch(one);
    it = cache_.find(key(mask));
  }
  return it->second;
}

}  // namespace internal

namespace {

using internal::MaskScorer;

const double kLogFloor = std::log(kProbabilityFloor);

void require_above_floor(const StepLogProbs& logprobs, const char* what) {
  for (std::size_t j = 0; j < logprobs.size(); ++j) {
    if (logprobs[j] < kLogFloor) {
      throw Error(ErrorCode::kReferenceUnderflow,
                  std::string(what) + " probability at step " +
                      std::to_string(j) + " is below the floor " +
                      std::to_string(kProbabilityFloor));
    }
  }
}

MaskScorer make_scorer(const Generator& model, const Example& example,
                       const ExplainOptions& options) {
  validate_example(example);
  return MaskScorer(model, example, options.mode, options.placeholder);
}

std::vector<double> kernel_weights(std::span<const Mask> masks,
                                   const ExplainOptions& options,
                                   std::size_t size) {
  if (!options.kernel_weighting) return {};
  const double width = options.kernel_width > 0.0
                           ? options.kernel_width
                           : static_cast<double>(size) / 2.0;
  std::vector<double> w;
  w.reserve(masks.size());
  for (const auto& mask : masks) w.push_back(distance_kernel(mask, width));
  return w;
}

ExplanationMatrix to_matrix(const SurrogateFit& fit, Method method,
                            const ExplainOptions& options) {
  ExplanationMatrix phi(static_cast<std::size_t>(fit.coefficients.rows()),
                        static_cast<std::size_t>(fit.coefficients.cols()), method,
                        options.plan.sample_count, options.plan.seed);
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    for (std::size_t j = 0; j < phi.cols(); ++j) {
      phi(i, j) = fit.coefficients(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j));
    }
  }
  return phi;
}

// Target value for one (sample, step) of a regression explainer.
enum class RegressionGain { kProbability, kRatio, kLogRatio };

ExplanationMatrix fit_regression(const Generator& model, const Example& example,
                                 const ExplainOptions& options,
                                 RegressionGain gain, Method method) {
  MaskScorer scorer = make_scorer(model, example, options);
  const std::size_t m = example.context_size();
  const std::size_t n = example.response_size();
  const auto masks = sample_uniform_masks(options.plan, m);

  StepLogProbs reference;
  if (gain != RegressionGain::kProbability) {
    std::vector<Mask> batch = masks;
    batch.push_back(Mask::full(m));
    scorer.prefetch(batch);
    reference = scorer.get(Mask::full(m));
    require_above_floor(reference, "full-input");
  } else {
    scorer.prefetch(masks);
  }

  Eigen::MatrixXd targets(static_cast<Eigen::Index>(masks.size()),
                          static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < masks.size(); ++r) {
    const auto& logp = scorer.get(masks[r]);
    if (gain == RegressionGain::kLogRatio) require_above_floor(logp, "perturbed");
    for (std::size_t j = 0; j < n; ++j) {
      double value = 0.0;
      switch (gain) {
        case RegressionGain::kProbability: value = std::exp(logp[j]); break;
        case RegressionGain::kRatio: value = std::exp(logp[j] - reference[j]); break;
        case RegressionGain::kLogRatio: value = logp[j] - reference[j]; break;
      }
      targets(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = value;
    }
  }
  const auto weights = kernel_weights(masks, options, m);
  const auto fit = fit_linear_surrogate(masks, targets, weights, options.ridge,
                                        options.intercept);
  return to_matrix(fit, method, options);
}

// Samples for every target index, drawn from independent per-index streams.
std::vector<std::vector<Mask>> shapley_samples(const ExplainOptions& options,
                                               std::size_t size) {
  std::vector<std::vector<Mask>> per_target(size);
  for (std::size_t i = 0; i < size; ++i) {
    per_target[i] = sample_shapley_masks(options.plan, size, i);
  }
  return per_target;
}

void prefetch_pairs(MaskScorer& scorer,
                    const std::vector<std::vector<Mask>>& per_target) {
  std::vector<Mask> all;
  for (std::size_t i = 0; i < per_target.size(); ++i) {
    for (const auto& mask : per_target[i]) {
      all.push_back(mask);
      all.push_back(mask.with(i, true));
    }
  }
  scorer.prefetch(all);
}

// Scores for all 2^M masks, row index = Mask::to_index().
std::vector<StepLogProbs> score_all_subsets(const Generator& model,
                                            const Example& example,
                                            const ExplainOptions& options) {
  const std::size_t m = example.context_size();
  if (m > kMaxEnumerationSize) {
    throw Error(ErrorCode::kTooLarge,
                "exact estimators enumerate 2^M subsets and are capped at M = " +
                    std::to_string(kMaxEnumerationSize) + ", got M = " +
                    std::to_string(m));
  }
  const std::uint64_t count = std::uint64_t{1} << m;
  std::vector<StepLogProbs> table;
  table.reserve(count);
  constexpr std::uint64_t kChunk = 4096;
  std::vector<std::vector<std::string>> contexts;
  for (std::uint64_t start = 0; start < count; start += kChunk) {
    const std::uint64_t stop = std::min(count, start + kChunk);
    contexts.clear();
    for (std::uint64_t idx = start; idx < stop; ++idx) {
      contexts.push_back(perturbed_context(example.context, Mask::from_index(idx, m),
                                           options.mode, options.placeholder));
    }
    auto scores = model.score_batch(contexts, example.response);
    for (auto& s : scores) table.push_back(std::move(s));
  }
  return table;
}

}  // namespace

ExplanationMatrix fit_lime(const Generator& model, const Example& example,
                           const ExplainOptions& options) {
  return fit_regression(model, example, options, RegressionGain::kProbability,
                        Method::kLime);
}

ExplanationMatrix fit_lerg_l(const Generator& model, const Example& example,
                             const ExplainOptions& options) {
  return fit_regression(model, example, options,
                        options.ratio_target == RatioTarget::kRatio
                            ? RegressionGain::kRatio
                            : RegressionGain::kLogRatio,
                        Method::kLergL);
}

ExplanationMatrix sampled_shapley(const Generator& model, const Example& example,
                                  bool weighted, const ExplainOptions& options) {
  MaskScorer scorer = make_scorer(model, example, options);
  const std::size_t m = example.context_size();
  const std::size_t n = example.response_size();
  const auto per_target = shapley_samples(options, m);
  prefetch_pairs(scorer, per_target);

  ExplanationMatrix phi(m, n, weighted ? Method::kShapley : Method::kShapleyW,
                        options.plan.sample_count, options.plan.seed);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double total_weight = 0.0;
    for (const auto& without : per_target[i]) {
      // Samples arrive with probability proportional to 1 / C(M-1, s);
      // multiplying by C(M-1, s) makes every subset count equally.
      const double w =
          weighted ? 1.0 : binomial(m - 1, without.kept_count());
      const auto& lo = scorer.get(without);
      const auto& hi = scorer.get(without.with(i, true));
      for (std::size_t j = 0; j < n; ++j) {
        acc[j] += w * (std::exp(hi[j]) - std::exp(lo[j]));
      }
      total_weight += w;
    }
    for (std::size_t j = 0; j < n; ++j) phi(i, j) = acc[j] / total_weight;
  }
  return phi;
}

ExplanationMatrix lerg_s(const Generator& model, const Example& example,
                         const ExplainOptions& options) {
  MaskScorer scorer = make_scorer(model, example, options);
  const std::size_t m = example.context_size();
  const std::size_t n = example.response_size();
  const auto per_target = shapley_samples(options, m);
  prefetch_pairs(scorer, per_target);

  ExplanationMatrix phi(m, n, Method::kLergS, options.plan.sample_count,
                        options.plan.seed);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& without : per_target[i]) {
      const auto& lo = scorer.get(without);
      const auto& hi = scorer.get(without.with(i, true));
      require_above_floor(lo, "perturbed");
      require_above_floor(hi, "perturbed");
      for (std::size_t j = 0; j < n; ++j) acc[j] += hi[j] - lo[j];
    }
    const auto samples = static_cast<double>(per_target[i].size());
    for (std::size_t j = 0; j < n; ++j) phi(i, j) = acc[j] / samples;
  }
  return phi;
}

ExplanationMatrix exact_shapley(const Generator& model, const Example& example,
                                bool log_gain, ShapleyConvention convention,
                                const ExplainOptions& options) {
  validate_example(example);
  const std::size_t m = example.context_size();
  const std::size_t n = example.response_size();
  const auto table = score_all_subsets(model, example, options);
  if (log_gain) {
    for (const auto& row : table) require_above_floor(row, "subset");
  }

  std::vector<double> weight_by_size(m);
  for (std::size_t s = 0; s < m; ++s) {
    weight_by_size[s] = convention == ShapleyConvention::kClassical
                            ? shapley_subset_weight(m, s)
                            : truncated_subset_probability(m, s);
  }

  ExplanationMatrix phi(m, n, Method::kExactShapley, table.size(),
                        options.plan.seed);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const std::uint64_t bit = std::uint64_t{1} << i;
    for (std::uint64_t idx = 0; idx < table.size(); ++idx) {
      if (idx & bit) continue;
      const double w = weight_by_size[static_cast<std::size_t>(std::popcount(idx))];
      if (w == 0.0) continue;
      const auto& lo = table[idx];
      const auto& hi = table[idx | bit];
      for (std::size_t j = 0; j < n; ++j) {
        const double gain =
            log_gain ? hi[j] - lo[j] : std::exp(hi[j]) - std::exp(lo[j]);
        acc[j] += w * gain;
      }
    }
    for (std::size_t j = 0; j < n; ++j) phi(i, j) = acc[j];
  }
  return phi;
}

ExplanationMatrix exact_lerg_s(const Generator& model, const Example& example,
                               const ExplainOptions& options) {
  auto base = exact_shapley(model, example, /*log_gain=*/true,
                            ShapleyConvention::kTruncatedRange, options);
  ExplanationMatrix phi(base.rows(), base.cols(), Method::kExactLergS,
                        base.sample_count(), base.seed());
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    for (std::size_t j = 0; j < phi.cols(); ++j) phi(i, j) = base(i, j);
  }
  return phi;
}

ExplanationMatrix explain(Method method, const Generator& model,
                          const Example& example, const ExplainOptions& options) {
  switch (method) {
    case Method::kLime: return fit_lime(model, example, options);
    case Method::kLergL: return fit_lerg_l(model, example, options);
    case Method::kShapley: return sampled_shapley(model, example, true, options);
    case Method::kShapleyW: return sampled_shapley(model, example, false, options);
    case Method::kLergS: return lerg_s(model, example, options);
    case Method::kExactShapley:
      return exact_shapley(model, example, false, ShapleyConvention::kClassical,
                           options);
    case Method::kExactLergS: return exact_lerg_s(model, example, options);
  }
  throw Error(ErrorCode::kValidationError, "unknown method");
}

std::vector<std::size_t> top_k_segments(const Saliency& saliency, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::kValidationError, "ratio must be in (0, 1]");
  }
  const std::size_t m = saliency.scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return saliency.scores[a] > saliency.scores[b];
  });
  order.resize(top_k_count(ratio, m));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace lerg
