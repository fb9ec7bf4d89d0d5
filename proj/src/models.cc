#include "lerg/models.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace lerg {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAdditiveToy: return "additive";
    case ModelKind::kNgram: return "ngram";
    case ModelKind::kRemote: return "remote";
    case ModelKind::kTabular: return "tabular";
    case ModelKind::kCustom: return "custom";
  }
  return "unknown";
}

StepLogProbs Generator::score(std::span<const std::string> context,
                              const SegmentedText& response) const {
  std::vector<std::vector<std::string>> batch;
  batch.emplace_back(context.begin(), context.end());
  return std::move(score_batch(batch, response).front());
}

std::vector<StepLogProbs> Generator::score_batch(
    std::span<const std::vector<std::string>> contexts,
    const SegmentedText& response) const {
  if (response.empty()) {
    throw Error(ErrorCode::kValidationError, "response must be non-empty");
  }
  if (contexts.empty()) return {};
  std::vector<StepLogProbs> out = score_batch_impl(contexts, response);
  if (out.size() != contexts.size()) {
    throw Error(ErrorCode::kModelProtocolError,
                "generator returned " + std::to_string(out.size()) +
                    " score vectors for a batch of " +
                    std::to_string(contexts.size()));
  }
  const bool normalized = manifest().normalized;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].size() != response.size()) {
      throw Error(ErrorCode::kModelProtocolError,
                  "batch element " + std::to_string(k) + " has " +
                      std::to_string(out[k].size()) + " steps, expected " +
                      std::to_string(response.size()));
    }
    for (double v : out[k]) {
      if (!std::isfinite(v) || (normalized && v > kNormalizationTolerance)) {
        throw Error(ErrorCode::kScoreDomainError,
                    "batch element " + std::to_string(k) +
                        " has an invalid log-probability " +
                        std::to_string(v));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toys

MaskedToy::MaskedToy(std::vector<std::string> context,
                     std::size_t response_size, std::string placeholder)
    : context_(std::move(context)),
      response_size_(response_size),
      placeholder_(std::move(placeholder)) {
  if (response_size_ == 0) {
    throw Error(ErrorCode::kValidationError, "toy response size must be >= 1");
  }
  std::set<std::string> seen;
  for (const auto& s : context_) {
    if (!seen.insert(s).second) {
      throw Error(ErrorCode::kValidationError,
                  "toy context segments must be distinct; '" + s +
                      "' repeats");
    }
    if (s == placeholder_) {
      throw Error(ErrorCode::kValidationError,
                  "toy context may not contain the placeholder token");
    }
  }
}

Mask MaskedToy::mask_for(std::span<const std::string> context) const {
  std::vector<std::uint8_t> bits(context_.size(), 0);
  std::size_t next = 0;
  for (const auto& token : context) {
    if (token == placeholder_) continue;
    while (next < context_.size() && context_[next] != token) ++next;
    if (next == context_.size()) {
      throw Error(ErrorCode::kValidationError,
                  "context segment '" + token +
                      "' is not an in-order member of the toy's context");
    }
    bits[next++] = 1;
  }
  return Mask(std::move(bits));
}

std::vector<StepLogProbs> MaskedToy::score_batch_impl(
    std::span<const std::vector<std::string>> contexts,
    const SegmentedText& response) const {
  if (response.size() != response_size_) {
    throw Error(ErrorCode::kValidationError,
                "toy expects a response of " + std::to_string(response_size_) +
                    " segments, got " + std::to_string(response.size()));
  }
  std::vector<StepLogProbs> out;
  out.reserve(contexts.size());
  for (const auto& ctx : contexts) out.push_back(score_mask(mask_for(ctx)));
  return out;
}

AdditiveToy::AdditiveToy(AdditiveToySpec spec, std::string placeholder)
    : MaskedToy(spec.context, spec.base.size(), std::move(placeholder)),
      spec_(std::move(spec)) {
  const std::size_t m = spec_.context.size();
  const std::size_t n = spec_.base.size();
  if (spec_.weights.size() != m) {
    throw Error(ErrorCode::kValidationError,
                "additive toy weights must have one row per context segment");
  }
  if (!spec_.response.empty() && spec_.response.size() != n) {
    throw Error(ErrorCode::kValidationError,
                "additive toy response length differs from base length");
  }
  bool all_subsets_valid = true;
  for (std::size_t j = 0; j < n; ++j) {
    double full = spec_.base[j];
    double worst = spec_.base[j];
    if (!std::isfinite(full)) {
      throw Error(ErrorCode::kValidationError, "non-finite base score");
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (spec_.weights[i].size() != n) {
        throw Error(ErrorCode::kValidationError,
                    "additive toy weight row has the wrong length");
      }
      const double w = spec_.weights[i][j];
      if (!std::isfinite(w)) {
        throw Error(ErrorCode::kValidationError, "non-finite weight");
      }
      full += w;
      worst += std::max(w, 0.0);
    }
    if (full > kNormalizationTolerance) {
      throw Error(ErrorCode::kValidationError,
                  "additive toy full-input score exceeds 0 at step " +
                      std::to_string(j));
    }
    all_subsets_valid = all_subsets_valid && worst <= kNormalizationTolerance;
  }
  manifest_.kind = ModelKind::kAdditiveToy;
  manifest_.normalized = all_subsets_valid;
  manifest_.vocabulary_policy = "closed: reference context segments";
  manifest_.description = "additive log-score test double";
}

Example AdditiveToy::example(std::string id) const {
  if (spec_.response.empty()) {
    throw Error(ErrorCode::kValidationError,
                "additive toy spec has no response tokens");
  }
  return Example{std::move(id), SegmentedText::from_tokens(spec_.context),
                 SegmentedText::from_tokens(spec_.response)};
}

StepLogProbs AdditiveToy::score_mask(const Mask& mask) const {
  StepLogProbs out = spec_.base;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.test(i)) continue;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += spec_.weights[i][j];
  }
  return out;
}

TabularToy::TabularToy(std::vector<std::string> context,
                       std::vector<std::vector<double>> table, bool normalized,
                       std::string placeholder)
    : MaskedToy(context, table.empty() ? 0 : table.front().size(),
                std::move(placeholder)),
      table_(std::move(table)) {
  if (context.size() > 20) {
    throw Error(ErrorCode::kTooLarge, "tabular toy supports at most 20 segments");
  }
  if (table_.size() != (std::size_t{1} << context.size())) {
    throw Error(ErrorCode::kValidationError,
                "tabular toy needs one row per subset (2^M rows)");
  }
  for (const auto& row : table_) {
    if (row.size() != response_size()) {
      throw Error(ErrorCode::kValidationError, "ragged tabular toy table");
    }
  }
  manifest_.kind = ModelKind::kTabular;
  manifest_.normalized = normalized;
  manifest_.vocabulary_policy = "closed: reference context segments";
  manifest_.description = "per-subset lookup table test double";
}

StepLogProbs TabularToy::score_mask(const Mask& mask) const {
  return table_[mask.to_index()];
}

// ---------------------------------------------------------------------------
// N-gram reference model

NgramModelSpec train_ngram(std::span<const Example> corpus,
                           const NgramHyperparams& hyperparams) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "cannot train on an empty corpus");
  }
  if (hyperparams.add_k <= 0.0 || hyperparams.lambda < 0.0 ||
      hyperparams.lambda > 1.0) {
    throw Error(ErrorCode::kValidationError,
                "n-gram hyperparameters need add_k > 0 and lambda in [0,1]");
  }
  NgramModelSpec spec;
  spec.hyperparams = hyperparams;
  std::set<std::string> vocab{std::string(kUnknownToken)};
  for (const auto& ex : corpus) {
    std::string prev(kStartToken);
    for (const auto& w : ex.response.segments()) {
      vocab.insert(w);
      ++spec.bigram[prev][w];
      prev = w;
    }
    // Every (context occurrence, response occurrence) pair counts once.
    for (const auto& c : ex.context.segments()) {
      for (const auto& w : ex.response.segments()) ++spec.association[c][w];
    }
  }
  spec.vocabulary.assign(vocab.begin(), vocab.end());
  return spec;
}

std::string additive_to_json(const AdditiveToySpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = "additive";
  j["context"] = spec.context;
  j["response"] = spec.response;
  j["base"] = spec.base;
  j["weights"] = spec.weights;
  return j.dump(1) + "\n";
}

AdditiveToySpec additive_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("kind", std::string()) != "additive") {
      throw Error(ErrorCode::kParseError, "model file is not an additive toy");
    }
    AdditiveToySpec spec;
    spec.context = j.at("context").get<std::vector<std::string>>();
    if (j.contains("response")) {
      spec.response = j.at("response").get<std::vector<std::string>>();
    }
    spec.base = j.at("base").get<std::vector<double>>();
    spec.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError,
                std::string("malformed additive toy: ") + e.what());
  }
}

std::string ngram_to_json(const NgramModelSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = "ngram";
  j["add_k"] = spec.hyperparams.add_k;
  j["lambda"] = spec.hyperparams.lambda;
  j["vocabulary"] = spec.vocabulary;
  j["bigram"] = spec.bigram;
  j["association"] = spec.association;
  return j.dump(1) + "\n";
}

NgramModelSpec ngram_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("kind", std::string()) != "ngram") {
      throw Error(ErrorCode::kParseError, "model file is not an n-gram model");
    }
    NgramModelSpec spec;
    spec.hyperparams.add_k = j.at("add_k").get<double>();
    spec.hyperparams.lambda = j.at("lambda").get<double>();
    spec.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    spec.bigram = j.at("bigram")
                      .get<std::map<std::string, std::map<std::string, long long>>>();
    spec.association =
        j.at("association")
            .get<std::map<std::string, std::map<std::string, long long>>>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError,
                std::string("malformed n-gram model: ") + e.what());
  }
}

NgramModel::NgramModel(NgramModelSpec spec) : spec_(std::move(spec)) {
  auto& vocab = spec_.vocabulary;
  if (std::find(vocab.begin(), vocab.end(), kUnknownToken) == vocab.end()) {
    vocab.emplace_back(kUnknownToken);
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    vocab_index_.emplace(vocab[k], static_cast<int>(k));
  }
  unknown_id_ = vocab_index_.at(std::string(kUnknownToken));
  start_id_ = static_cast<int>(vocab.size());
  const std::size_t v = vocab.size();

  bigram_counts_.assign(v + 1, std::vector<double>(v, 0.0));
  bigram_totals_.assign(v + 1, 0.0);
  for (const auto& [prev, row] : spec_.bigram) {
    const int h = history_id(prev);
    for (const auto& [w, c] : row) {
      bigram_counts_[h][word_id(w)] += static_cast<double>(c);
      bigram_totals_[h] += static_cast<double>(c);
    }
  }
  for (const auto& [ctx, row] : spec_.association) {
    std::vector<std::pair<int, double>> entries;
    double total = 0.0;
    for (const auto& [w, c] : row) {
      entries.emplace_back(word_id(w), static_cast<double>(c));
      total += static_cast<double>(c);
    }
    association_rows_.emplace(ctx, std::move(entries));
    association_totals_.emplace(ctx, total);
  }

  manifest_.kind = ModelKind::kNgram;
  manifest_.normalized = true;
  manifest_.vocabulary_policy =
      "closed response vocabulary of " + std::to_string(v) +
      " entries; out-of-vocabulary words map to <unk>";
  manifest_.description = "interpolated add-k bigram + context association";
}

int NgramModel::word_id(std::string_view word) const {
  const auto it = vocab_index_.find(std::string(word));
  return it == vocab_index_.end() ? unknown_id_ : it->second;
}

int NgramModel::history_id(std::string_view word) const {
  return word == kStartToken ? start_id_ : word_id(word);
}

double NgramModel::probability(std::span<const std::string> context,
                               std::string_view prev,
                               std::string_view word) const {
  const double k = spec_.hyperparams.add_k;
  const double lambda = spec_.hyperparams.lambda;
  const double v = static_cast<double>(vocabulary_size());
  const int h = history_id(prev);
  const int w = word_id(word);
  const double p_bigram =
      (bigram_counts_[h][w] + k) / (bigram_totals_[h] + k * v);
  double numerator = k;
  double denominator = k * v;
  for (const auto& c : context) {
    const auto row = association_rows_.find(c);
    if (row == association_rows_.end()) continue;
    denominator += association_totals_.at(c);
    for (const auto& [id, count] : row->second) {
      if (id == w) numerator += count;
    }
  }
  return lambda * p_bigram + (1.0 - lambda) * numerator / denominator;
}

std::vector<StepLogProbs> NgramModel::score_batch_impl(
    std::span<const std::vector<std::string>> contexts,
    const SegmentedText& response) const {
  const double k = spec_.hyperparams.add_k;
  const double lambda = spec_.hyperparams.lambda;
  const std::size_t v = vocabulary_size();
  const std::size_t n = response.size();

  std::vector<int> word_ids(n);
  std::vector<int> history_ids(n);
  for (std::size_t j = 0; j < n; ++j) {
    word_ids[j] = word_id(response[j]);
    history_ids[j] = j == 0 ? start_id_ : word_id(response[j - 1]);
  }
  std::vector<double> p_bigram(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int h = history_ids[j];
    p_bigram[j] = (bigram_counts_[h][word_ids[j]] + k) /
                  (bigram_totals_[h] + k * static_cast<double>(v));
  }

  std::vector<StepLogProbs> out;
  out.reserve(contexts.size());
  std::vector<double> assoc(v);
  for (const auto& ctx : contexts) {
    std::fill(assoc.begin(), assoc.end(), 0.0);
    double denominator = k * static_cast<double>(v);
    for (const auto& c : ctx) {
      const auto row = association_rows_.find(c);
      if (row == association_rows_.end()) continue;
      denominator += association_totals_.at(c);
      for (const auto& [id, count] : row->second) assoc[id] += count;
    }
    StepLogProbs scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double p_assoc = (k + assoc[word_ids[j]]) / denominator;
      scores[j] = std::log(lambda * p_bigram[j] + (1.0 - lambda) * p_assoc);
    }
    out.push_back(std::move(scores));
  }
  return out;
}

}  // namespace lerg
