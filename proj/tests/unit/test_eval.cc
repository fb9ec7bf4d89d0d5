#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.h"
#include "lerg/eval.h"
#include "lerg/report.h"
#include "lerg/synthetic.h"

namespace lerg {
namespace {

using testing::FunctionModel;

SweepConfig small_config() {
  SweepConfig config;
  config.methods = {Method::kLergS, Method::kLime};
  config.ratios = {0.1, 0.2, 0.5, 1.0};
  config.explain.plan.sample_count = 100;
  config.explain.plan.seed = 9;
  config.random_trials = 4;
  return config;
}

TEST(Metrics, PplAAtFullRatioIsFullPerplexity) {
  const auto inst = ngram_instances(5, 1);
  for (const auto& ex : inst.examples) {
    const Saliency s{std::vector<double>(ex.context_size(), 0.0), Reduction::kSumOverJ};
    const auto full = full_perplexity(*inst.model, ex);
    EXPECT_NEAR(ppl_a(*inst.model, ex, s, 1.0), full.value, 1e-12);
    const auto logp = inst.model->score(ex.context.segments(), ex.response);
    double nll = 0.0;
    for (double v : logp) nll -= v;
    EXPECT_NEAR(full.value, std::exp(nll / logp.size()), 1e-12);
  }
}

TEST(Metrics, InputInvariantModelGivesExactlyOne) {
  FunctionModel flat([](const auto&, const SegmentedText& r) {
    return StepLogProbs(r.size(), -2.5);
  }, true);
  const auto ex = testing::make_example("e", "a b c d e", "x y z");
  const Saliency s{{0.3, 0.1, 0.9, 0.2, 0.4}, Reduction::kSumOverJ};
  for (double ratio : {0.1, 0.2, 0.4, 0.6, 0.8}) {
    EXPECT_EQ(pplc_r(flat, ex, s, ratio), 1.0);
  }
  EXPECT_NEAR(ppl_a(flat, ex, s, 0.2), std::exp(2.5), 1e-12);
}

TEST(Metrics, PplcRMatchesDefinition) {
  const auto inst = ngram_instances(3, 2);
  for (const auto& ex : inst.examples) {
    const std::vector<std::size_t> removed{0, 2};
    const auto v = perplexity_change_of_removal(*inst.model, ex, removed);
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < ex.context_size(); ++i) {
      if (i != 0 && i != 2) rest.push_back(ex.context[i]);
    }
    const auto full = inst.model->score(ex.context.segments(), ex.response);
    const auto part = inst.model->score(rest, ex.response);
    double mean = 0.0;
    for (std::size_t j = 0; j < full.size(); ++j) mean += full[j] - part[j];
    mean /= full.size();
    EXPECT_NEAR(v.value, std::exp(mean), 1e-12);
    EXPECT_EQ(v.tokens, ex.response_size());
  }
}

TEST(Metrics, RemovingEverythingIsDegenerate) {
  const auto ex = testing::make_example("e", "only", "x");
  FunctionModel flat([](const auto&, const auto&) { return StepLogProbs{-1.0}; }, true);
  const Saliency s{{1.0}, Reduction::kSumOverJ};
  try {
    pplc_r(flat, ex, s, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
  EXPECT_THROW(pplc_r(flat, ex, s, 1.0), Error);
}

TEST(Metrics, ClampIsCountedAndApplied) {
  FunctionModel steep([](const std::vector<std::string>& c, const auto&) {
    return StepLogProbs{c.size() < 2 ? -60.0 : -1.0, -1.0};
  }, true);
  const auto ex = testing::make_example("e", "a b", "x y");
  const std::vector<std::size_t> removed{0};
  const auto v = perplexity_change_of_removal(steep, ex, removed);
  EXPECT_EQ(v.clamped, 1u);
  EXPECT_NEAR(v.log_sum, -1.0 - std::log(kMetricProbabilityClamp), 1e-12);
}

TEST(Metrics, RequireNormalizedModel) {
  FunctionModel raw([](const auto&, const auto&) { return StepLogProbs{-1.0}; }, false);
  const auto ex = testing::make_example("e", "a b", "x");
  EXPECT_THROW(full_perplexity(raw, ex), Error);
}

TEST(Metrics, PplcRMonotoneOnMonotoneToysByEnumeration) {
  // With W >= 0, removing a superset never lowers PPLC_R, so every nested
  // top-k chain yields a nondecreasing curve.
  Rng rng(14);
  for (int k = 0; k < 5; ++k) {
    const std::size_t m = rng.uniform_int(2, 8);
    AdditiveToy toy(random_additive_spec(m, 3, rng, /*nonnegative_weights=*/true));
    ASSERT_TRUE(toy.manifest().normalized);
    const auto ex = toy.example();
    const std::uint64_t full = (1ULL << m) - 1;
    std::vector<double> value(1ULL << m, 0.0);
    for (std::uint64_t removed = 0; removed < full; ++removed) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < m; ++i) {
        if (removed >> i & 1ULL) idx.push_back(i);
      }
      value[removed] = perplexity_change_of_removal(toy, ex, idx).value;
    }
    for (std::uint64_t t = 0; t < full; ++t) {
      for (std::uint64_t s = t;; s = (s - 1) & t) {  // every subset s of t
        ASSERT_LE(value[s], value[t] + 1e-15);
        if (s == 0) break;
      }
    }
  }
}

TEST(RandomBaseline, MeanOfTrialValues) {
  const auto inst = ngram_instances(1, 3, 8, 8);
  const auto& ex = inst.examples.front();
  const std::vector<double> ratios{0.25, 0.5};
  const auto curve = random_baseline_curve(*inst.model, ex, Metric::kPplcR, ratios, 6, 4);
  ASSERT_EQ(curve.values.size(), 2u);
  EXPECT_EQ(curve.baseline, Baseline::kRandom);
  const auto again = random_baseline_curve(*inst.model, ex, Metric::kPplcR, ratios, 6, 4);
  EXPECT_EQ(curve.values, again.values);
}

TEST(Sweep, RecordsRecomposeFromRawSums) {
  const auto inst = ngram_instances(6, 4);
  const auto report = sweep(*inst.model, inst.examples, small_config());
  EXPECT_TRUE(report.failures.empty());
  for (const auto& rec : report.records) {
    EXPECT_NEAR(recompose_value(rec), rec.value, 1e-12 * rec.value);
    if (rec.method == "random") {
      EXPECT_EQ(rec.log_sums.size(), 4u);
    } else {
      ASSERT_EQ(rec.log_sums.size(), 1u);
      EXPECT_NEAR(std::exp(rec.log_sums[0] / rec.tokens), rec.value, 1e-12 * rec.value);
    }
    if (rec.metric == Metric::kPplcR) EXPECT_LT(rec.ratio, 1.0);
  }
  for (const auto& agg : report.aggregates) {
    EXPECT_NEAR(std::exp(agg.log_sum / agg.tokens), agg.token_mean, 1e-12 * agg.token_mean);
  }
}

TEST(Sweep, PplAAtOneMatchesFullPerplexityColumn) {
  const auto inst = ngram_instances(4, 6);
  const auto report = sweep(*inst.model, inst.examples, small_config());
  std::map<std::string, double> full;
  for (const auto& rec : report.records) {
    if (rec.method == "full") full[rec.example_id] = rec.value;
  }
  int checked = 0;
  for (const auto& rec : report.records) {
    if (rec.metric == Metric::kPplA && rec.ratio == 1.0 && rec.method != "full") {
      EXPECT_NEAR(rec.value, full.at(rec.example_id), 1e-12);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 4 * 3);
}

std::string serialize(const CorpusReport& report) {
  return report_json(report, Stamp{{}, "x"});
}

TEST(Sweep, InvariantToOrderAndThreads) {
  const auto inst = ngram_instances(8, 7);
  auto config = small_config();
  const auto baseline = serialize(sweep(*inst.model, inst.examples, config));
  auto reversed = inst.examples;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(serialize(sweep(*inst.model, reversed, config)), baseline);
  config.threads = 3;
  EXPECT_EQ(serialize(sweep(*inst.model, inst.examples, config)), baseline);
  // A subset keeps each example's own numbers.
  const std::vector<Example> one{inst.examples[3]};
  config.threads = 1;
  const auto single = sweep(*inst.model, one, config);
  const auto all = sweep(*inst.model, inst.examples, config);
  for (const auto& rec : single.records) {
    const auto it = std::find_if(all.records.begin(), all.records.end(), [&](const auto& r) {
      return r.example_id == rec.example_id && r.method == rec.method &&
             r.metric == rec.metric && r.ratio == rec.ratio;
    });
    ASSERT_NE(it, all.records.end());
    EXPECT_EQ(it->log_sums, rec.log_sums);
  }
}

TEST(Sweep, FailuresAreReportedNotFatal) {
  const auto inst = ngram_instances(3, 5);
  auto corpus = inst.examples;
  corpus.push_back(testing::make_example("tiny", "hello", "yes"));
  const auto report = sweep(*inst.model, corpus, small_config());
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].example_id, "tiny");
  EXPECT_EQ(report.failures[0].code, "DegenerateInput");
}

TEST(Sweep, InputErrors) {
  const auto inst = ngram_instances(2, 5);
  EXPECT_THROW(sweep(*inst.model, std::vector<Example>{}, small_config()), Error);
  auto dup = inst.examples;
  dup.push_back(dup.front());
  EXPECT_THROW(sweep(*inst.model, dup, small_config()), Error);
  auto bad_ratio = small_config();
  bad_ratio.ratios = {0.0};
  EXPECT_THROW(sweep(*inst.model, inst.examples, bad_ratio), Error);
}

}  // namespace
}  // namespace lerg
