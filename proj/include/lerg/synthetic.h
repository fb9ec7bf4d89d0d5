#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "lerg/core.h"
#include "lerg/models.h"
#include "lerg/rng.h"

namespace lerg {

// Topic-driven toy dialogues: each context holds a few topic cue words among
// distinct filler words, and the response mixes topic words with generic
// replies. Context segments within one example are distinct.
struct SyntheticCorpusOptions {
  std::size_t min_context = 6;
  std::size_t max_context = 10;
  std::size_t min_response = 3;
  std::size_t max_response = 6;
  std::size_t cues_per_context = 2;
  double topic_word_rate = 0.6;
  std::string id_prefix = "d";
};

std::vector<Example> synthetic_dialogues(std::size_t count, std::uint64_t seed,
                                         const SyntheticCorpusOptions& options = {});

// Random additive toy with M distinct segments and N steps whose scores all
// stay within [log 1e-12, 0] for every subset.
AdditiveToySpec random_additive_spec(std::size_t context_size,
                                     std::size_t response_size, Rng& rng,
                                     bool nonnegative_weights = false);

// Trained n-gram model plus held-out examples to explain.
struct NgramInstances {
  std::unique_ptr<NgramModel> model;
  std::vector<Example> examples;
};

NgramInstances ngram_instances(std::size_t count, std::uint64_t seed,
                               std::size_t min_context = 4,
                               std::size_t max_context = 10);

// Per-subset table where, for every x~ subset of x \ {x_target}, the log gain
// of adding x_target at step `strong` exceeds the one at step `weak`.
struct DominanceInstance {
  std::unique_ptr<TabularToy> model;
  Example example;
  std::size_t segment = 0;        // i
  std::size_t other_segment = 0;  // i' (cause instances)
  std::size_t step = 0;           // j
  std::size_t other_step = 0;     // j' (consistency instances)
};

DominanceInstance consistency_instance(std::size_t context_size,
                                       std::size_t response_size, Rng& rng);

// For every x~ subset of x \ {x_i, x_i'}: log P(y_j | x~ + x_i) >
// log P(y_j | x~ + x_i').
DominanceInstance cause_instance(std::size_t context_size,
                                 std::size_t response_size, Rng& rng);

}  // namespace lerg
