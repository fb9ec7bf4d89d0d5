#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lerg/core.h"
#include "lerg/models.h"

namespace lerg::testing {

// Generator backed by a plain function of (context tokens, response).
class FunctionModel final : public Generator {
 public:
  using Fn = std::function<StepLogProbs(const std::vector<std::string>&,
                                        const SegmentedText&)>;
  FunctionModel(Fn fn, bool normalized) : fn_(std::move(fn)) {
    manifest_.kind = ModelKind::kCustom;
    manifest_.normalized = normalized;
  }
  const Manifest& manifest() const override { return manifest_; }

 protected:
  std::vector<StepLogProbs> score_batch_impl(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const override {
    std::vector<StepLogProbs> out;
    for (const auto& c : contexts) out.push_back(fn_(c, response));
    return out;
  }

 private:
  Fn fn_;
  Manifest manifest_;
};

inline Example make_example(const std::string& id, const std::string& context,
                            const std::string& response) {
  return Example{id, segment_whitespace(context), segment_whitespace(response)};
}

// n! as a double, computed by repeated multiplication.
inline double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Kept tokens of `context` for the subset encoded by `bits` (bit i = keep i).
inline std::vector<std::string> subset_tokens(const SegmentedText& context,
                                              unsigned long bits) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (bits >> i & 1UL) out.push_back(context[i]);
  }
  return out;
}

}  // namespace lerg::testing
