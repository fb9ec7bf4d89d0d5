#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lerg/core.h"
#include "lerg/rng.h"

namespace lerg {

// Hard cap on exhaustive subset enumeration (2^M masks).
inline constexpr std::size_t kMaxEnumerationSize = 20;

struct PerturbPlan {
  std::size_t sample_count = 1000;
  // At most floor(max_masked_ratio * M) segments are removed by the
  // neighbourhood sampler.
  double max_masked_ratio = 0.5;
  std::uint64_t seed = 0;
};

// How a mask is turned into model input.
enum class PerturbMode {
  kDelete,       // removed segments vanish, the rest keep their order
  kPlaceholder,  // removed segments are replaced by a placeholder token
};

std::vector<std::string> perturbed_context(const SegmentedText& context,
                                           const Mask& mask,
                                           PerturbMode mode = PerturbMode::kDelete,
                                           std::string_view placeholder = "<mask>");

// Neighbourhood sampler for the regression explainers. Each mask removes s
// segments, s uniform on {1..floor(ratio*M)}, positions uniform without
// replacement.
std::vector<Mask> sample_uniform_masks(const PerturbPlan& plan, std::size_t size);
std::vector<Mask> sample_uniform_masks(const PerturbPlan& plan, std::size_t size,
                                       Rng& rng);

// s! (M - s - 1)! / M!
double shapley_subset_weight(std::size_t total, std::size_t subset_size);

// Probability of one particular subset of size s drawn from the remaining
// M - 1 segments: 1 / ((M - 1) C(M - 1, s)) for s in {0..M-2}, zero for
// s = M - 1.
double truncated_subset_probability(std::size_t total, std::size_t subset_size);

double binomial(std::size_t n, std::size_t k);

// Draws x~ from the remaining segments x \ {x_target}: size uniform on
// {0..M-2}, then a uniform subset of that size. Bit `target` is always 0.
std::vector<Mask> sample_shapley_masks(const PerturbPlan& plan, std::size_t size,
                                       std::size_t target, Rng& rng);
// Uses the stream Rng::split(plan.seed, target).
std::vector<Mask> sample_shapley_masks(const PerturbPlan& plan, std::size_t size,
                                       std::size_t target);

// All 2^M masks (2^(M-1) with bit `exclude` fixed to 0) in lexicographic
// order of (bit 0, bit 1, ...). Throws TooLarge above kMaxEnumerationSize.
std::vector<Mask> enumerate_all_masks(std::size_t size,
                                      std::optional<std::size_t> exclude = {});

// {full mask, empty mask}, the only way to request the all-zeros mask.
std::vector<Mask> boundary_masks(std::size_t size);

// exp(-D^2 / width^2) with D the Hamming distance to the full mask.
double distance_kernel(const Mask& mask, double width);

}  // namespace lerg
