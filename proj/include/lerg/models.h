#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lerg/core.h"

namespace lerg {

// Scores from normalized models may exceed 0 by at most this much.
inline constexpr double kNormalizationTolerance = 1e-9;

enum class ModelKind { kAdditiveToy, kNgram, kRemote, kTabular, kCustom };

std::string_view model_kind_name(ModelKind kind);

struct Manifest {
  ModelKind kind = ModelKind::kCustom;
  // True when scores are log-probabilities (every value <= 0). Perplexity
  // metrics refuse generators that do not declare this.
  bool normalized = false;
  std::size_t max_batch = 1 << 20;
  std::string vocabulary_policy;
  std::string description;
};

// The black-box conditional generator being explained. Implementations must
// be stateless: the same (context, response) always yields the same scores.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual const Manifest& manifest() const = 0;

  // log P(y_j | context, y_<j) for j = 1..N. An empty context is the
  // unconditioned case.
  StepLogProbs score(std::span<const std::string> context,
                     const SegmentedText& response) const;

  // Element k equals score(contexts[k], response). Any invalid element fails
  // the whole batch; the error message names its index.
  std::vector<StepLogProbs> score_batch(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const;

 protected:
  virtual std::vector<StepLogProbs> score_batch_impl(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const = 0;
};

// Base for test doubles defined over a fixed, duplicate-free list of context
// segments. A queried context is mapped back to an inclusion mask by in-order
// matching; placeholder tokens count as absent.
class MaskedToy : public Generator {
 public:
  const std::vector<std::string>& reference_context() const {
    return context_;
  }
  std::size_t response_size() const { return response_size_; }

  Mask mask_for(std::span<const std::string> context) const;

 protected:
  MaskedToy(std::vector<std::string> context, std::size_t response_size,
            std::string placeholder);

  virtual StepLogProbs score_mask(const Mask& mask) const = 0;

  std::vector<StepLogProbs> score_batch_impl(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const override;

 private:
  std::vector<std::string> context_;
  std::size_t response_size_;
  std::string placeholder_;
};

// Step j under mask z scores exactly base_j + sum_i z_i * weights[i][j].
struct AdditiveToySpec {
  std::vector<std::string> context;   // M distinct segments
  std::vector<std::string> response;  // optional, N tokens
  std::vector<double> base;           // N
  std::vector<std::vector<double>> weights;  // M x N
};

class AdditiveToy final : public MaskedToy {
 public:
  // Validates shapes, finiteness and base_j + sum_i W_ij <= 0. The model is
  // declared normalized iff every subset score is <= 0.
  explicit AdditiveToy(AdditiveToySpec spec,
                       std::string placeholder = "<mask>");

  const Manifest& manifest() const override { return manifest_; }
  const AdditiveToySpec& spec() const { return spec_; }

  // The example this toy was built for, if the spec carries a response.
  Example example(std::string id = "additive") const;

 protected:
  StepLogProbs score_mask(const Mask& mask) const override;

 private:
  AdditiveToySpec spec_;
  Manifest manifest_;
};

// {"kind": "additive", "context": [...], "response": [...], "base": [...],
//  "weights": [[...], ...]}
std::string additive_to_json(const AdditiveToySpec& spec);
AdditiveToySpec additive_from_json(std::string_view text);

// Arbitrary per-subset scores: table[mask.to_index()][j].
class TabularToy final : public MaskedToy {
 public:
  TabularToy(std::vector<std::string> context,
             std::vector<std::vector<double>> table, bool normalized,
             std::string placeholder = "<mask>");

  const Manifest& manifest() const override { return manifest_; }
  const std::vector<std::vector<double>>& table() const { return table_; }

 protected:
  StepLogProbs score_mask(const Mask& mask) const override;

 private:
  std::vector<std::vector<double>> table_;
  Manifest manifest_;
};

struct NgramHyperparams {
  double add_k = 0.5;
  double lambda = 0.5;  // weight of the response bigram component
};

inline constexpr std::string_view kUnknownToken = "<unk>";
inline constexpr std::string_view kStartToken = "<s>";

// Counts behind the n-gram reference model. Response vocabulary plus one
// out-of-vocabulary bucket; ordered maps keep serialization deterministic.
struct NgramModelSpec {
  NgramHyperparams hyperparams;
  std::vector<std::string> vocabulary;  // sorted, includes <unk>
  // bigram[prev][word], prev may be <s>
  std::map<std::string, std::map<std::string, long long>> bigram;
  // association[context word][response word]
  std::map<std::string, std::map<std::string, long long>> association;
};

NgramModelSpec train_ngram(std::span<const Example> corpus,
                           const NgramHyperparams& hyperparams = {});

std::string ngram_to_json(const NgramModelSpec& spec);
NgramModelSpec ngram_from_json(std::string_view text);

// P(w | context, prev) = lambda * P_bigram(w | prev)
//                        + (1 - lambda) * P_assoc(w | context)
// with add-k smoothing on both components:
//   P_bigram(w | prev)   = (c(prev, w) + k) / (c(prev) + k V)
//   P_assoc(w | context) = (k + sum_c A(c, w)) / (k V + sum_c A(c, .))
class NgramModel final : public Generator {
 public:
  explicit NgramModel(NgramModelSpec spec);

  const Manifest& manifest() const override { return manifest_; }
  const NgramModelSpec& spec() const { return spec_; }
  std::size_t vocabulary_size() const { return spec_.vocabulary.size(); }

  double probability(std::span<const std::string> context,
                     std::string_view prev, std::string_view word) const;

 protected:
  std::vector<StepLogProbs> score_batch_impl(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const override;

 private:
  int word_id(std::string_view word) const;  // OOV -> <unk>
  int history_id(std::string_view word) const;

  NgramModelSpec spec_;
  Manifest manifest_;
  std::unordered_map<std::string, int> vocab_index_;
  int unknown_id_ = 0;
  int start_id_ = 0;
  // Dense tables indexed by id.
  std::vector<std::vector<double>> bigram_counts_;  // [history][word]
  std::vector<double> bigram_totals_;
  std::unordered_map<std::string, std::vector<std::pair<int, double>>>
      association_rows_;
  std::unordered_map<std::string, double> association_totals_;
};

}  // namespace lerg
