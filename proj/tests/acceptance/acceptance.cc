// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lerg/commands.h"
#include "lerg/eval.h"
#include "lerg/explain.h"
#include "lerg/synthetic.h"

namespace {

using namespace lerg;
namespace fs = std::filesystem;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExplainOptions with_samples(std::size_t samples, std::uint64_t seed) {
  ExplainOptions options;
  options.plan.sample_count = samples;
  options.plan.seed = seed;
  return options;
}

// 1. Both LERG_S estimators return W on additive toys.
Outcome additive_exactness() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t m = rng.uniform_int(2, 12), n = rng.uniform_int(1, 6);
    const AdditiveToy toy(random_additive_spec(m, n, rng));
    const Example ex = toy.example();
    const auto sampled = lerg_s(toy, ex, with_samples(1000, k));
    const auto exact = exact_lerg_s(toy, ex);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = toy.spec().weights[i][j];
        worst = std::max({worst, std::abs(sampled(i, j) - w), std::abs(exact(i, j) - w)});
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-9 && elapsed < 10.0,
          fmt("max |phi - W| = %.3g over 50 instances (<= 1e-9), %.2fs (< 10s)", worst, elapsed)};
}

// 2. Monte Carlo estimators converge to their enumeration oracles.
Outcome convergence() {
  const auto start = std::chrono::steady_clock::now();
  const auto inst = ngram_instances(20, 202, 4, 10);
  std::vector<double> lerg_small, lerg_large, shap_small, shap_large;
  double lerg_max = 0.0, shap_max = 0.0;
  for (std::size_t k = 0; k < inst.examples.size(); ++k) {
    const auto& ex = inst.examples[k];
    const auto& model = *inst.model;
    const auto lerg_exact = exact_lerg_s(model, ex);
    const auto shap_exact = exact_shapley(model, ex, false, ShapleyConvention::kTruncatedRange);
    const auto err = [&](const ExplanationMatrix& exact, std::size_t m, bool lerg) {
      const auto opts = with_samples(m, 1000 * k + m);
      const auto est = lerg ? lerg_s(model, ex, opts) : sampled_shapley(model, ex, true, opts);
      return est.max_abs_diff(exact);
    };
    lerg_max = std::max(lerg_max, err(lerg_exact, 1000, true));
    shap_max = std::max(shap_max, err(shap_exact, 1000, false));
    lerg_small.push_back(err(lerg_exact, 250, true));
    lerg_large.push_back(err(lerg_exact, 4000, true));
    shap_small.push_back(err(shap_exact, 250, false));
    shap_large.push_back(err(shap_exact, 4000, false));
  }
  const double elapsed = seconds_since(start);
  const bool ok = lerg_max <= 0.05 && shap_max <= 0.05 &&
                  median(lerg_large) < median(lerg_small) &&
                  median(shap_large) < median(shap_small) && elapsed < 120.0;
  return {ok, fmt("lerg_s max err@1000 %.4f, median %.4f@4000 < %.4f@250; "
                  "shapley max err@1000 %.4f, median %.4f@4000 < %.4f@250; %.1fs (< 120s)",
                  lerg_max, median(lerg_large), median(lerg_small), shap_max,
                  median(shap_large), median(shap_small), elapsed)};
}

// 3. Classical log-gain Shapley telescopes to the full log-likelihood change.
Outcome efficiency() {
  double worst = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed : {202, 303}) {
    const auto inst = ngram_instances(20, seed, 1, 12);
    for (const auto& ex : inst.examples) {
      const auto phi = exact_shapley(*inst.model, ex, true, ShapleyConvention::kClassical);
      const auto full = inst.model->score(ex.context.segments(), ex.response);
      const auto empty = inst.model->score({}, ex.response);
      double expected = 0.0;
      for (std::size_t j = 0; j < full.size(); ++j) expected += full[j] - empty[j];
      worst = std::max(worst, std::abs(phi.total() - expected));
      ++count;
    }
  }
  return {worst <= 1e-9,
          fmt("max |sum phi - (log P(y|x) - log P(y))| = %.3g over %zu instances (<= 1e-9)",
              worst, count)};
}

// Premise checks by enumerating every subset of the tabulated scores.
bool consistency_premise(const DominanceInstance& inst) {
  const auto& t = inst.model->table();
  const std::uint64_t bit = std::uint64_t{1} << inst.segment;
  for (std::uint64_t s = 0; s < t.size(); ++s) {
    if (s & bit) continue;
    if (!(t[s | bit][inst.step] - t[s][inst.step] >
          t[s | bit][inst.other_step] - t[s][inst.other_step])) {
      return false;
    }
  }
  return true;
}

bool cause_premise(const DominanceInstance& inst) {
  const auto& t = inst.model->table();
  const std::uint64_t a = std::uint64_t{1} << inst.segment;
  const std::uint64_t b = std::uint64_t{1} << inst.other_segment;
  for (std::uint64_t s = 0; s < t.size(); ++s) {
    if (s & (a | b)) continue;
    if (!(t[s | a][inst.step] > t[s | b][inst.step])) return false;
  }
  return true;
}

// 4. Exact estimators order dominance instances as required.
Outcome dominance() {
  Rng rng(404);
  std::size_t premises = 0, held = 0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t m = rng.uniform_int(2, 10), n = rng.uniform_int(2, 5);
    const auto c = consistency_instance(m, n, rng);
    if (consistency_premise(c)) {
      ++premises;
      const auto a = exact_lerg_s(*c.model, c.example);
      const auto b = exact_shapley(*c.model, c.example, true, ShapleyConvention::kClassical);
      held += a(c.segment, c.step) > a(c.segment, c.other_step) &&
              b(c.segment, c.step) > b(c.segment, c.other_step);
    }
    const auto d = cause_instance(m, n, rng);
    if (cause_premise(d)) {
      ++premises;
      const auto a = exact_lerg_s(*d.model, d.example);
      const auto b = exact_shapley(*d.model, d.example, true, ShapleyConvention::kClassical);
      held += a(d.segment, d.step) > a(d.other_segment, d.step) &&
              b(d.segment, d.step) > b(d.other_segment, d.step);
    }
  }
  return {premises == 100 && held == premises,
          fmt("%zu/%zu orderings held, %zu/100 premises verified by enumeration", held,
              premises, premises)};
}

// Step probabilities linear in the kept segments.
class PlantedModel final : public Generator {
 public:
  PlantedModel(std::vector<std::string> context, std::vector<double> base,
               std::vector<std::vector<double>> beta)
      : context_(std::move(context)), base_(std::move(base)), beta_(std::move(beta)) {
    manifest_.normalized = true;
  }
  const Manifest& manifest() const override { return manifest_; }

 protected:
  std::vector<StepLogProbs> score_batch_impl(std::span<const std::vector<std::string>> contexts,
                                             const SegmentedText&) const override {
    std::vector<StepLogProbs> out;
    for (const auto& kept : contexts) {
      StepLogProbs row(base_.size());
      for (std::size_t j = 0; j < base_.size(); ++j) {
        double p = base_[j];
        for (std::size_t i = 0; i < context_.size(); ++i) {
          if (std::find(kept.begin(), kept.end(), context_[i]) != kept.end()) p += beta_[i][j];
        }
        row[j] = std::log(p);
      }
      out.push_back(std::move(row));
    }
    return out;
  }

 private:
  std::vector<std::string> context_;
  std::vector<double> base_;
  std::vector<std::vector<double>> beta_;
  Manifest manifest_;
};

// 5. LIME and LERG_L recover planted linear gains.
Outcome regression_recovery() {
  Rng rng(505);
  double lime_err = 0.0, lergl_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t m = rng.uniform_int(4, 10), n = rng.uniform_int(1, 5);
    std::vector<std::string> ctx;
    for (std::size_t i = 0; i < m; ++i) ctx.push_back("s" + std::to_string(i));
    std::vector<double> base(n);
    std::vector<std::vector<double>> beta(m, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
      base[j] = 0.05 + 0.05 * rng.uniform_real();
      for (std::size_t i = 0; i < m; ++i) beta[i][j] = 0.8 / m * rng.uniform_real();
    }
    const PlantedModel model(ctx, base, beta);
    const Example ex{"planted", SegmentedText::from_tokens(ctx),
                     SegmentedText::from_tokens(std::vector<std::string>(n, "y"))};
    const auto opts = with_samples(1000, k);
    const auto lime = fit_lime(model, ex, opts);
    const auto lergl = fit_lerg_l(model, ex, opts);
    for (std::size_t j = 0; j < n; ++j) {
      double full = base[j];
      for (std::size_t i = 0; i < m; ++i) full += beta[i][j];
      for (std::size_t i = 0; i < m; ++i) {
        lime_err = std::max(lime_err, std::abs(lime(i, j) - beta[i][j]));
        lergl_err = std::max(lergl_err, std::abs(lergl(i, j) - beta[i][j] / full));
      }
    }
  }
  return {lime_err <= 1e-3 && lergl_err <= 1e-3,
          fmt("max coefficient error lime %.3g, lerg-l %.3g over 20 instances, 4 <= M <= 10 "
              "(<= 1e-3)",
              lime_err, lergl_err)};
}

class ConstantModel final : public Generator {
 public:
  ConstantModel() { manifest_.normalized = true; }
  const Manifest& manifest() const override { return manifest_; }

 protected:
  std::vector<StepLogProbs> score_batch_impl(std::span<const std::vector<std::string>> contexts,
                                             const SegmentedText& response) const override {
    StepLogProbs row;
    for (std::size_t j = 0; j < response.size(); ++j) row.push_back(-0.25 - 0.5 * j);
    return std::vector<StepLogProbs>(contexts.size(), row);
  }

 private:
  Manifest manifest_;
};

// 6. Metric identities.
Outcome metric_identities() {
  const auto inst = ngram_instances(30, 606, 2, 10);
  const auto& model = *inst.model;
  const std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};

  double ppl_a_err = 0.0;
  for (const auto& ex : inst.examples) {
    const auto phi = lerg_s(model, ex, with_samples(200, 1));
    const double a = ppl_a(model, ex, saliency_of(phi), 1.0);
    ppl_a_err = std::max(ppl_a_err, std::abs(a - full_perplexity(model, ex).value));
  }

  const ConstantModel flat;
  bool invariant_exact = true;
  for (const auto& ex : inst.examples) {
    const auto phi = lerg_s(flat, ex, with_samples(100, 2));
    const auto sal = saliency_of(phi);
    for (double r : ratios) {
      if (ex.context_size() > 1 || r * ex.context_size() < 1.0) {
        if (ex.context_size() > top_k_count(r, ex.context_size())) {
          invariant_exact = invariant_exact && pplc_r(flat, ex, sal, r) == 1.0;
        }
      }
    }
    const auto random = random_baseline_curve(flat, ex, Metric::kPplcR, ratios, 5, 3);
    for (double v : random.values) invariant_exact = invariant_exact && v == 1.0;
  }

  SweepConfig config;
  config.methods = {Method::kLergS, Method::kLime};
  config.metrics = {Metric::kPplcR, Metric::kPplA};
  config.ratios = {0.1, 0.2, 0.3, 0.5, 1.0};
  config.random_trials = 4;
  config.explain = with_samples(200, 7);
  const auto report = sweep(model, inst.examples, config);
  const auto j = nlohmann::json::parse(report_json(report, Stamp{}));
  double recompose_err = 0.0;
  std::size_t checked = 0;
  std::map<std::string, double> full_sums;
  for (const auto& r : j["records"]) {
    const auto tokens = r["tokens"].get<double>();
    const auto sums = r["log_sums"].get<std::vector<double>>();
    double v = 0.0;
    for (double s : sums) v += std::exp(s / tokens);
    v /= static_cast<double>(sums.size());
    recompose_err = std::max(recompose_err, std::abs(v - r["value"].get<double>()));
    ++checked;
    if (r["method"] == "full") full_sums[r["example_id"]] = sums.front();
  }
  for (const auto& ex : inst.examples) {
    const auto scores = model.score(ex.context.segments(), ex.response);
    double neg = 0.0;
    for (double s : scores) neg -= s;
    recompose_err = std::max(recompose_err, std::abs(full_sums.at(ex.id) - neg));
  }
  for (const auto& a : j["aggregates"]) {
    const double v = std::exp(a["log_sum"].get<double>() / a["tokens"].get<double>());
    recompose_err = std::max(recompose_err, std::abs(v - a["token_mean"].get<double>()));
    ++checked;
  }
  const bool ok = ppl_a_err <= 1e-12 && invariant_exact && recompose_err <= 1e-12 &&
                  report.failures.empty();
  return {ok, fmt("|PPL_A(1.0) - PPL| max %.3g; input-invariant PPLC_R == 1.0: %s; "
                  "recompose max err %.3g over %zu stored values",
                  ppl_a_err, invariant_exact ? "yes" : "no", recompose_err, checked)};
}

// 7. LERG_S beats the random baseline on a synthetic corpus.
Outcome directional() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  constexpr int kSeeds = 10;
  bool pointwise = true;
  std::vector<double> pplc_margin, ppla_margin;
  for (int s = 0; s < kSeeds; ++s) {
    const auto inst = ngram_instances(100, 7000 + s);
    SweepConfig config;
    config.methods = {Method::kLergS};
    config.ratios = ratios;
    config.explain = with_samples(1000, s);
    const auto report = sweep(*inst.model, inst.examples, config);
    if (!report.failures.empty()) return {false, "sweep reported failures"};
    std::map<std::pair<std::string, int>, std::map<double, double>> curve;
    for (const auto& a : report.aggregates) {
      curve[{a.method, static_cast<int>(a.metric)}][a.ratio] = a.token_mean;
    }
    const auto& lc = curve[{"lerg-s", static_cast<int>(Metric::kPplcR)}];
    const auto& rc = curve[{"random", static_cast<int>(Metric::kPplcR)}];
    const auto& la = curve[{"lerg-s", static_cast<int>(Metric::kPplA)}];
    const auto& ra = curve[{"random", static_cast<int>(Metric::kPplA)}];
    for (double r : ratios) {
      pointwise = pointwise && lc.at(r) >= rc.at(r) && la.at(r) <= ra.at(r);
    }
    pplc_margin.push_back(lc.at(0.2) - rc.at(0.2));
    ppla_margin.push_back(ra.at(0.2) - la.at(0.2));
  }
  const auto mean_se = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size() - 1;
    return std::pair{mean, std::sqrt(var / v.size())};
  };
  const auto [pc_mean, pc_se] = mean_se(pplc_margin);
  const auto [pa_mean, pa_se] = mean_se(ppla_margin);
  const double elapsed = seconds_since(start);
  const bool ok = pointwise && pc_mean > 2 * pc_se && pa_mean > 2 * pa_se && elapsed < 600.0;
  return {ok, fmt("pointwise on every seed: %s; ratio 0.2 margin PPLC_R %.4f (2 SE %.4f), "
                  "PPL_A %.4f (2 SE %.4f) over %d seeds; %.1fs (< 600s)",
                  pointwise ? "yes" : "no", pc_mean, 2 * pc_se, pa_mean, 2 * pa_se, kSeeds,
                  elapsed)};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    files[e.path().filename().string()] = read_file(e.path());
  }
  return files;
}

// 8. Reruns with the same config and seed are byte-identical.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "lerg_acceptance_determinism";
  fs::remove_all(root);
  run_synth_corpus(40, 8, root / "corpus.jsonl");
  run_train_ngram(root / "corpus.jsonl", root / "ngram.json", true, "whitespace");

  RunConfig config;
  config.model.kind = "ngram";
  config.model.file = (root / "ngram.json").string();
  config.corpus = (root / "corpus.jsonl").string();
  config.methods = {Method::kLime, Method::kLergL, Method::kShapley, Method::kShapleyW,
                    Method::kLergS, Method::kExactLergS};
  config.samples = 300;
  config.seed = 88;
  bool same = true;
  std::size_t files = 0;
  for (const char* command : {"explain", "eval"}) {
    config.command = command;
    std::vector<std::map<std::string, std::string>> runs;
    for (int k = 0; k < 3; ++k) {
      config.out = (root / (std::string(command) + std::to_string(k))).string();
      if (config.command == "explain") {
        run_explain(config);
      } else {
        run_eval(config, k == 2 ? 4 : 1);
      }
      runs.push_back(read_tree(config.out));
    }
    same = same && runs[0] == runs[1] && runs[0] == runs[2];
    files += runs[0].size();
  }
  fs::remove_all(root);
  return {same && files > 0,
          fmt("%zu explain/eval artifacts byte-identical across reruns and thread counts: %s",
              files, same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"additive exactness", additive_exactness},
      {"Monte Carlo convergence", convergence},
      {"efficiency", efficiency},
      {"consistency and cause identification", dominance},
      {"regression recovery", regression_recovery},
      {"metric identities", metric_identities},
      {"directional result", directional},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[k].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failed += !outcome.passed;
    std::printf("criterion %zu %s: %s [%s] (%.2fs)\n", k + 1, outcome.passed ? "PASS" : "FAIL",
                criteria[k].first.c_str(), outcome.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%s: %zu/%zu criteria passed\n", failed == 0 ? "PASS" : "FAIL",
              criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
