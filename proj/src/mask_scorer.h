#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lerg/core.h"
#include "lerg/models.h"
#include "lerg/perturb.h"

namespace lerg::internal {

// Scores perturbations of one example, each distinct mask at most once.
// Generators are stateless, so the cache never changes a value.
class MaskScorer {
 public:
  MaskScorer(const Generator& model, const Example& example, PerturbMode mode,
             std::string placeholder)
      : model_(model),
        example_(example),
        mode_(mode),
        placeholder_(std::move(placeholder)) {}

  // Scores every uncached mask in one batch call, in first-seen order.
  void prefetch(std::span<const Mask> masks);

  const StepLogProbs& get(const Mask& mask);

  std::size_t size() const { return cache_.size(); }

 private:
  static std::string key(const Mask& mask) {
    return std::string(mask.bits().begin(), mask.bits().end());
  }

  const Generator& model_;
  const Example& example_;
  PerturbMode mode_;
  std::string placeholder_;
  std::unordered_map<std::string, StepLogProbs> cache_;
};

}  // namespace lerg::internal
