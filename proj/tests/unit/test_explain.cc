#include <gtest/gtest.h>

#include <cmath>

#include "helpers.h"
#include "lerg/explain.h"
#include "lerg/synthetic.h"

namespace lerg {
namespace {

using testing::factorial;
using testing::FunctionModel;
using testing::subset_tokens;

// Weighted marginal gains computed from scratch: every subset of the other
// segments, scored by direct model calls, weighted by `weight(M, s)`.
template <typename Weight>
std::vector<std::vector<double>> brute_force(const Generator& model, const Example& ex,
                                             bool log_gain, Weight weight) {
  const std::size_t m = ex.context_size();
  const std::size_t n = ex.response_size();
  std::vector<std::vector<double>> phi(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (unsigned long bits = 0; bits < (1UL << m); ++bits) {
      if (bits >> i & 1UL) continue;
      const double w = weight(static_cast<int>(m), std::popcount(bits));
      const auto lo = model.score(subset_tokens(ex.context, bits), ex.response);
      const auto hi = model.score(subset_tokens(ex.context, bits | 1UL << i), ex.response);
      for (std::size_t j = 0; j < n; ++j) {
        phi[i][j] += w * (log_gain ? hi[j] - lo[j] : std::exp(hi[j]) - std::exp(lo[j]));
      }
    }
  }
  return phi;
}

double classical_weight(int m, int s) {
  return factorial(s) * factorial(m - s - 1) / factorial(m);
}

double truncated_weight(int m, int s) {
  if (s == m - 1) return m == 1 ? 1.0 : 0.0;
  return factorial(s) * factorial(m - 1 - s) / (factorial(m - 1) * (m - 1));
}

double max_diff(const ExplanationMatrix& phi, const std::vector<std::vector<double>>& ref) {
  double d = 0.0;
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    for (std::size_t j = 0; j < phi.cols(); ++j) d = std::max(d, std::abs(phi(i, j) - ref[i][j]));
  }
  return d;
}

TEST(ExactShapley, MatchesBruteForceOracle) {
  const auto inst = ngram_instances(4, 21, 3, 7);
  for (const auto& ex : inst.examples) {
    const auto& model = *inst.model;
    EXPECT_LT(max_diff(exact_shapley(model, ex, false, ShapleyConvention::kClassical),
                       brute_force(model, ex, false, classical_weight)), 1e-12);
    EXPECT_LT(max_diff(exact_shapley(model, ex, true, ShapleyConvention::kClassical),
                       brute_force(model, ex, true, classical_weight)), 1e-12);
    EXPECT_LT(max_diff(exact_shapley(model, ex, false, ShapleyConvention::kTruncatedRange),
                       brute_force(model, ex, false, truncated_weight)), 1e-12);
    EXPECT_LT(max_diff(exact_lerg_s(model, ex), brute_force(model, ex, true, truncated_weight)),
              1e-12);
  }
}

TEST(ExactShapley, EfficiencyTelescopes) {
  const auto inst = ngram_instances(6, 5);
  for (const auto& ex : inst.examples) {
    const auto full = inst.model->score(ex.context.segments(), ex.response);
    const auto empty = inst.model->score({}, ex.response);
    const auto log_phi = exact_shapley(*inst.model, ex, true, ShapleyConvention::kClassical);
    const auto prob_phi = exact_shapley(*inst.model, ex, false, ShapleyConvention::kClassical);
    for (std::size_t j = 0; j < ex.response_size(); ++j) {
      double log_sum = 0.0, prob_sum = 0.0;
      for (std::size_t i = 0; i < ex.context_size(); ++i) {
        log_sum += log_phi(i, j);
        prob_sum += prob_phi(i, j);
      }
      EXPECT_NEAR(log_sum, full[j] - empty[j], 1e-10);
      EXPECT_NEAR(prob_sum, std::exp(full[j]) - std::exp(empty[j]), 1e-12);
    }
  }
}

TEST(ExactShapley, CapAndSingleSegment) {
  std::vector<std::string> ctx;
  for (int i = 0; i < 21; ++i) ctx.push_back("w" + std::to_string(i));
  FunctionModel flat([](const auto&, const auto&) { return StepLogProbs{-1.0}; }, true);
  const Example big{"big", SegmentedText::from_tokens(ctx), SegmentedText::from_tokens({"y"})};
  try {
    exact_lerg_s(flat, big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooLarge);
  }
  AdditiveToy toy(AdditiveToySpec{{"a"}, {"y"}, {-2.0}, {{0.75}}});
  EXPECT_NEAR(exact_lerg_s(toy, toy.example())(0, 0), 0.75, 1e-15);
}

TEST(LergS, AdditiveToyIsRecoveredExactly) {
  Rng rng(31);
  for (int k = 0; k < 20; ++k) {
    const std::size_t m = rng.uniform_int(2, 12), n = rng.uniform_int(1, 6);
    AdditiveToy toy(random_additive_spec(m, n, rng));
    ExplainOptions options;
    options.plan.seed = k;
    options.plan.sample_count = 64;
    const auto phi = lerg_s(toy, toy.example(), options);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_NEAR(phi(i, j), toy.spec().weights[i][j], 1e-9);
      }
    }
  }
}

TEST(LergS, ConvergesToExactValue) {
  const auto inst = ngram_instances(3, 2, 6, 9);
  for (const auto& ex : inst.examples) {
    const auto exact = exact_lerg_s(*inst.model, ex);
    ExplainOptions options;
    options.plan.sample_count = 4000;
    options.plan.seed = 12;
    EXPECT_LT(lerg_s(*inst.model, ex, options).max_abs_diff(exact), 0.05);
  }
}

TEST(SampledShapley, WeightedConvergesToTruncatedShapley) {
  const auto inst = ngram_instances(3, 4, 6, 9);
  for (const auto& ex : inst.examples) {
    const auto exact =
        exact_shapley(*inst.model, ex, false, ShapleyConvention::kTruncatedRange);
    ExplainOptions options;
    options.plan.sample_count = 4000;
    EXPECT_LT(sampled_shapley(*inst.model, ex, true, options).max_abs_diff(exact), 0.01);
  }
}

TEST(SampledShapley, UnweightedConvergesToPlainSubsetMean) {
  // Every subset of size <= M - 2 of the other segments counts equally.
  const auto inst = ngram_instances(2, 6, 6, 8);
  for (const auto& ex : inst.examples) {
    const int m = static_cast<int>(ex.context_size());
    double subsets = 0.0;
    for (int s = 0; s <= m - 2; ++s) subsets += binomial(m - 1, s);
    const auto ref = brute_force(*inst.model, ex, false, [&](int mm, int s) {
      return s <= mm - 2 ? 1.0 / subsets : 0.0;
    });
    ExplainOptions options;
    options.plan.sample_count = 8000;
    const auto phi = sampled_shapley(*inst.model, ex, false, options);
    EXPECT_EQ(phi.method(), Method::kShapleyW);
    EXPECT_LT(max_diff(phi, ref), 0.01);
  }
}

TEST(Estimators, DeterministicPerSeed) {
  const auto inst = ngram_instances(1, 9, 8, 8);
  const auto& ex = inst.examples.front();
  ExplainOptions options;
  options.plan.sample_count = 200;
  options.plan.seed = 5;
  for (Method method : {Method::kLime, Method::kLergL, Method::kShapley, Method::kShapleyW,
                        Method::kLergS}) {
    const auto a = explain(method, *inst.model, ex, options);
    const auto b = explain(method, *inst.model, ex, options);
    EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    auto other = options;
    other.plan.seed = 6;
    EXPECT_GT(explain(method, *inst.model, ex, other).max_abs_diff(a), 0.0);
    EXPECT_TRUE(a.all_finite());
    EXPECT_EQ(a.method(), method);
  }
}

TEST(Estimators, DegenerateAndUnderflow) {
  FunctionModel flat([](const auto&, const auto&) { return StepLogProbs{-1.0}; }, true);
  const Example one{"one", SegmentedText::from_tokens({"a"}), SegmentedText::from_tokens({"y"})};
  try {
    lerg_s(flat, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
  FunctionModel tiny([](const auto& c, const auto&) {
    return StepLogProbs{c.size() == 3 ? -40.0 : -1.0};
  }, true);
  const Example three{"three", SegmentedText::from_tokens({"a", "b", "c"}),
                      SegmentedText::from_tokens({"y"})};
  try {
    fit_lerg_l(tiny, three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kReferenceUnderflow);
  }
  FunctionModel tiny_empty([](const auto& c, const auto&) {
    return StepLogProbs{c.empty() ? -40.0 : -1.0};
  }, true);
  EXPECT_THROW(lerg_s(tiny_empty, three), Error);
  EXPECT_NO_THROW(fit_lime(tiny, three));
}

// log P(y_j | x~) = log(base_j + sum_i z_i beta_ij)
FunctionModel planted_probability_model(std::vector<std::string> context,
                                        std::vector<double> base,
                                        std::vector<std::vector<double>> beta) {
  return FunctionModel(
      [context, base, beta](const std::vector<std::string>& kept, const SegmentedText&) {
        StepLogProbs out(base.size());
        for (std::size_t j = 0; j < base.size(); ++j) {
          double p = base[j];
          for (std::size_t i = 0; i < context.size(); ++i) {
            if (std::find(kept.begin(), kept.end(), context[i]) != kept.end()) p += beta[i][j];
          }
          out[j] = std::log(p);
        }
        return out;
      },
      true);
}

TEST(Regression, LimeAndLergLRecoverPlantedGains) {
  Rng rng(77);
  for (int k = 0; k < 10; ++k) {
    const std::size_t m = rng.uniform_int(4, 10), n = rng.uniform_int(1, 4);
    std::vector<std::string> ctx;
    for (std::size_t i = 0; i < m; ++i) ctx.push_back("s" + std::to_string(i));
    std::vector<double> base(n);
    std::vector<std::vector<double>> beta(m, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
      base[j] = 0.05 + 0.05 * rng.uniform_real();
      for (std::size_t i = 0; i < m; ++i) beta[i][j] = 0.8 / m * rng.uniform_real();
    }
    auto model = planted_probability_model(ctx, base, beta);
    const Example ex{"p", SegmentedText::from_tokens(ctx), SegmentedText::from_tokens(
                                                               std::vector<std::string>(n, "y"))};
    ExplainOptions options;
    options.plan.seed = k;
    const auto lime = fit_lime(model, ex, options);
    const auto lergl = fit_lerg_l(model, ex, options);
    for (std::size_t j = 0; j < n; ++j) {
      double full = base[j];
      for (std::size_t i = 0; i < m; ++i) full += beta[i][j];
      for (std::size_t i = 0; i < m; ++i) {
        EXPECT_NEAR(lime(i, j), beta[i][j], 1e-3);
        EXPECT_NEAR(lergl(i, j), beta[i][j] / full, 1e-3);
      }
    }
    options.kernel_weighting = true;
    EXPECT_LT(fit_lime(model, ex, options).max_abs_diff(lime), 1e-4);
  }
}

TEST(Regression, LogRatioTargetRecoversAdditiveToy) {
  Rng rng(8);
  AdditiveToy toy(random_additive_spec(7, 3, rng));
  ExplainOptions options;
  options.ratio_target = RatioTarget::kLogRatio;
  const auto phi = fit_lerg_l(toy, toy.example(), options);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(phi(i, j), toy.spec().weights[i][j], 1e-6);
  }
}

TEST(Perturbation, PlaceholderModeMatchesDeletionOnToys) {
  Rng rng(3);
  AdditiveToy toy(random_additive_spec(6, 2, rng));
  ExplainOptions options;
  options.mode = PerturbMode::kPlaceholder;
  EXPECT_LT(lerg_s(toy, toy.example(), options).max_abs_diff(lerg_s(toy, toy.example())),
            1e-12);
}

TEST(TopK, HighestScoresInPositionalOrder) {
  const Saliency s{{0.1, 0.9, 0.5, 0.9, -1.0}, Reduction::kSumOverJ};
  EXPECT_EQ(top_k_segments(s, 0.2), (std::vector<std::size_t>{1}));
  EXPECT_EQ(top_k_segments(s, 0.4), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(top_k_segments(s, 0.6), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(top_k_segments(s, 1.0).size(), 5u);
  EXPECT_THROW(top_k_segments(s, 0.0), Error);
  EXPECT_THROW(top_k_segments(s, 1.5), Error);
}

TEST(Properties, DominanceOrderingsOnConstructedInstances) {
  Rng rng(12);
  for (int k = 0; k < 10; ++k) {
    const auto c = consistency_instance(rng.uniform_int(2, 7), 3, rng);
    const auto phi = exact_lerg_s(*c.model, c.example);
    EXPECT_GT(phi(c.segment, c.step), phi(c.segment, c.other_step));
    const auto d = cause_instance(rng.uniform_int(2, 7), 2, rng);
    const auto psi = exact_lerg_s(*d.model, d.example);
    EXPECT_GT(psi(d.segment, d.step), psi(d.other_segment, d.step));
  }
}

}  // namespace
}  // namespace lerg
