#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lerg/core.h"
#include "lerg/models.h"
#include "lerg/perturb.h"
#include "lerg/regression.h"

namespace lerg {

// Probabilities below this floor are rejected by the estimators before any
// log or ratio is taken.
inline constexpr double kProbabilityFloor = 1e-12;

enum class ShapleyConvention {
  kTruncatedRange,  // P(x~) = 1 / ((M-1) C(M-1, |x~|)), |x~| in {0..M-2}
  kClassical,       // |x~|! (M - |x~| - 1)! / M!, |x~| in {0..M-1}
};

// Regression target of the ratio explainer.
enum class RatioTarget {
  kRatio,     // P(y_j | x~) / P(y_j | x)
  kLogRatio,  // log P(y_j | x~) - log P(y_j | x)
};

struct ExplainOptions {
  PerturbPlan plan;
  PerturbMode mode = PerturbMode::kDelete;
  std::string placeholder = "<mask>";
  // Regression explainers only.
  bool kernel_weighting = false;
  double kernel_width = 0.0;  // <= 0 means M / 2
  RatioTarget ratio_target = RatioTarget::kRatio;
  double ridge = kDefaultRidge;
  bool intercept = true;
};

// LIME: per-step least squares of P(y_j | x~, y_<j) on the mask indicators.
ExplanationMatrix fit_lime(const Generator& model, const Example& example,
                           const ExplainOptions& options = {});

// LERG_L: per-step least squares of P(y_j | x~) / P(y_j | x). Throws
// ReferenceUnderflow if any full-input step probability is below the floor.
ExplanationMatrix fit_lerg_l(const Generator& model, const Example& example,
                             const ExplainOptions& options = {});

// Monte Carlo Shapley on probability differences over x~ drawn from the
// truncated subset distribution. weighted = false (Shapley-w) reweights the
// same samples so every subset counts equally.
ExplanationMatrix sampled_shapley(const Generator& model, const Example& example,
                                  bool weighted,
                                  const ExplainOptions& options = {});

// LERG_S: mean over sampled x~ of log P(y_j | x~ + x_i) - log P(y_j | x~).
ExplanationMatrix lerg_s(const Generator& model, const Example& example,
                         const ExplainOptions& options = {});

// Exhaustive weighted sum over all x~ subset of x \ {x_i}. Throws TooLarge
// for M > kMaxEnumerationSize.
ExplanationMatrix exact_shapley(const Generator& model, const Example& example,
                                bool log_gain, ShapleyConvention convention,
                                const ExplainOptions& options = {});

// Exact counterpart of lerg_s: log gains under the truncated distribution.
ExplanationMatrix exact_lerg_s(const Generator& model, const Example& example,
                               const ExplainOptions& options = {});

ExplanationMatrix explain(Method method, const Generator& model,
                          const Example& example,
                          const ExplainOptions& options = {});

// ceil(ratio * M) indices with the highest scores (ties to the lower index),
// returned in positional order.
std::vector<std::size_t> top_k_segments(const Saliency& saliency, double ratio);

}  // namespace lerg
