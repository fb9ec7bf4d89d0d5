#include "lerg/oracle.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lerg/explain.h"
#include "lerg/perturb.h"
#include "lerg/synthetic.h"

namespace lerg {
namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool consistency_premise(const DominanceInstance& inst) {
  const auto& t = inst.model->table();
  const std::uint64_t bit = std::uint64_t{1} << inst.segment;
  for (std::uint64_t idx = 0; idx < t.size(); ++idx) {
    if (idx & bit) continue;
    const double strong = t[idx | bit][inst.step] - t[idx][inst.step];
    const double weak = t[idx | bit][inst.other_step] - t[idx][inst.other_step];
    if (!(strong > weak)) return false;
  }
  return true;
}

bool cause_premise(const DominanceInstance& inst) {
  const auto& t = inst.model->table();
  const std::uint64_t a = std::uint64_t{1} << inst.segment;
  const std::uint64_t b = std::uint64_t{1} << inst.other_segment;
  for (std::uint64_t idx = 0; idx < t.size(); ++idx) {
    if (idx & (a | b)) continue;
    if (!(t[idx | a][inst.step] > t[idx | b][inst.step])) return false;
  }
  return true;
}

OracleCheck efficiency_check(const OracleSuiteOptions& options) {
  OracleCheck check{"efficiency", true, 0.0, 1e-9, ""};
  const auto inst = ngram_instances(options.instances, options.seed);
  for (const auto& ex : inst.examples) {
    const auto phi = exact_shapley(*inst.model, ex, true, ShapleyConvention::kClassical);
    const auto full = inst.model->score(ex.context.segments(), ex.response);
    const auto empty = inst.model->score({}, ex.response);
    double expected = 0.0;
    for (std::size_t j = 0; j < full.size(); ++j) expected += full[j] - empty[j];
    check.measured = std::max(check.measured, std::abs(phi.total() - expected));
  }
  check.passed = check.measured <= check.threshold;
  check.detail = "max |sum(phi) - (log P(y|x) - log P(y))| over " +
                 std::to_string(inst.examples.size()) + " n-gram instances";
  return check;
}

OracleCheck additive_check(const OracleSuiteOptions& options) {
  OracleCheck check{"additive_exactness", true, 0.0, 1e-9, ""};
  Rng rng(options.seed);
  for (std::size_t k = 0; k < options.instances; ++k) {
    const std::size_t m = rng.uniform_int(2, 10);
    const std::size_t n = rng.uniform_int(1, 5);
    AdditiveToy toy(random_additive_spec(m, n, rng));
    const Example ex = toy.example();
    ExplainOptions eo;
    eo.plan.sample_count = 200;
    eo.plan.seed = rng.next_u64();
    for (const auto& phi : {lerg_s(toy, ex, eo), exact_lerg_s(toy, ex, eo)}) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          check.measured = std::max(
              check.measured, std::abs(phi(i, j) - toy.spec().weights[i][j]));
        }
      }
    }
  }
  check.passed = check.measured <= check.threshold;
  check.detail = "max |phi - W| for lerg-s and exact-lerg-s";
  return check;
}

OracleCheck dominance_check(const OracleSuiteOptions& options, bool consistency) {
  OracleCheck check{consistency ? "consistency" : "cause_identification", true,
                    0.0, 1.0, ""};
  Rng rng(options.seed ^ (consistency ? 0x2222 : 0x3333));
  std::size_t held = 0;
  std::size_t premises = 0;
  for (std::size_t k = 0; k < options.instances; ++k) {
    const std::size_t m = rng.uniform_int(2, 8);
    const std::size_t n = rng.uniform_int(2, 4);
    const auto inst = consistency ? consistency_instance(m, n, rng)
                                  : cause_instance(m, n, rng);
    const bool premise = consistency ? consistency_premise(inst) : cause_premise(inst);
    if (!premise) continue;
    ++premises;
    bool ok = true;
    for (const auto& phi :
         {exact_lerg_s(*inst.model, inst.example),
          exact_shapley(*inst.model, inst.example, true, ShapleyConvention::kClassical)}) {
      ok = ok && (consistency
                      ? phi(inst.segment, inst.step) > phi(inst.segment, inst.other_step)
                      : phi(inst.segment, inst.step) > phi(inst.other_segment, inst.step));
    }
    held += ok ? 1 : 0;
  }
  check.measured = premises == 0 ? 0.0 : static_cast<double>(held) / premises;
  check.passed = premises == options.instances && held == premises;
  check.detail = std::to_string(held) + "/" + std::to_string(premises) +
                 " instances ordered as required (premises verified by enumeration)";
  return check;
}

OracleCheck convergence_check(const OracleSuiteOptions& options, bool log_gain) {
  OracleCheck check{log_gain ? "convergence_lerg_s" : "convergence_shapley", false,
                    0.0, 0.0, ""};
  const auto inst = ngram_instances(1, options.seed + 7, 6, 8);
  const Example& ex = inst.examples.front();
  const auto exact =
      log_gain ? exact_lerg_s(*inst.model, ex)
               : exact_shapley(*inst.model, ex, false, ShapleyConvention::kTruncatedRange);
  std::vector<double> small_err;
  std::vector<double> large_err;
  for (std::size_t s = 0; s < options.convergence_seeds; ++s) {
    ExplainOptions eo;
    eo.plan.seed = options.seed * 1000 + s;
    eo.plan.sample_count = options.small_samples;
    const auto small = log_gain ? lerg_s(*inst.model, ex, eo)
                                : sampled_shapley(*inst.model, ex, true, eo);
    eo.plan.sample_count = options.large_samples;
    const auto large = log_gain ? lerg_s(*inst.model, ex, eo)
                                : sampled_shapley(*inst.model, ex, true, eo);
    small_err.push_back(small.max_abs_diff(exact));
    large_err.push_back(large.max_abs_diff(exact));
  }
  check.measured = median(large_err);
  check.threshold = median(small_err);
  check.passed = check.measured < check.threshold;
  std::ostringstream detail;
  detail << "median max-abs error m=" << options.large_samples << " vs m="
         << options.small_samples << " over " << options.convergence_seeds << " seeds";
  check.detail = detail.str();
  return check;
}

}  // namespace

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& options) {
  return {efficiency_check(options),           additive_check(options),
          dominance_check(options, true),      dominance_check(options, false),
          convergence_check(options, true),    convergence_check(options, false)};
}

}  // namespace lerg
