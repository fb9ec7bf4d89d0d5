#include "lerg/perturb.h"

#include <cmath>
#include <numeric>

namespace lerg {
namespace {

void require_perturbable(std::size_t size) {
  if (size < 2) {
    throw Error(ErrorCode::kDegenerateInput,
                "need at least 2 context segments to perturb, got " +
                    std::to_string(size));
  }
}

// Chooses `count` distinct positions from `pool` (partial Fisher-Yates).
void remove_random(std::vector<std::size_t>& pool, std::size_t count, Rng& rng,
                   std::vector<std::uint8_t>& bits, std::uint8_t value) {
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t pick = k + rng.uniform_below(pool.size() - k);
    std::swap(pool[k], pool[pick]);
    bits[pool[k]] = value;
  }
}

}  // namespace

std::vector<std::string> perturbed_context(const SegmentedText& context,
                                           const Mask& mask, PerturbMode mode,
                                           std::string_view placeholder) {
  if (mask.size() != context.size()) {
    throw Error(ErrorCode::kValidationError,
                "mask length does not match context length");
  }
  std::vector<std::string> out;
  out.reserve(context.size());
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (mask.test(i)) {
      out.push_back(context[i]);
    } else if (mode == PerturbMode::kPlaceholder) {
      out.emplace_back(placeholder);
    }
  }
  return out;
}

std::vector<Mask> sample_uniform_masks(const PerturbPlan& plan, std::size_t size) {
  Rng rng(plan.seed);
  return sample_uniform_masks(plan, size, rng);
}

std::vector<Mask> sample_uniform_masks(const PerturbPlan& plan, std::size_t size,
                                       Rng& rng) {
  require_perturbable(size);
  if (!(plan.max_masked_ratio > 0.0 && plan.max_masked_ratio <= 1.0)) {
    throw Error(ErrorCode::kValidationError, "max_masked_ratio must be in (0, 1]");
  }
  const auto max_removed = static_cast<std::size_t>(
      std::floor(plan.max_masked_ratio * static_cast<double>(size) + 1e-9));
  // Removing every segment is never a neighbourhood sample.
  const std::size_t upper = std::min(max_removed, size - 1);
  if (upper < 1) {
    throw Error(ErrorCode::kDegenerateInput,
                "max_masked_ratio allows no segment to be removed");
  }
  std::vector<Mask> masks;
  masks.reserve(plan.sample_count);
  std::vector<std::size_t> pool(size);
  for (std::size_t s = 0; s < plan.sample_count; ++s) {
    const std::size_t removed = rng.uniform_int(1, upper);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::uint8_t> bits(size, 1);
    remove_random(pool, removed, rng, bits, 0);
    masks.emplace_back(std::move(bits));
  }
  return masks;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (std::size_t t = 1; t <= k; ++t) {
    out = out * static_cast<double>(n - k + t) / static_cast<double>(t);
  }
  return std::round(out);
}

double shapley_subset_weight(std::size_t total, std::size_t subset_size) {
  if (subset_size >= total) {
    throw Error(ErrorCode::kDomainError,
                "subset size must be < total (" + std::to_string(subset_size) +
                    " >= " + std::to_string(total) + ")");
  }
  // s!(M-s-1)!/M! = 1 / (M * C(M-1, s))
  return 1.0 / (static_cast<double>(total) * binomial(total - 1, subset_size));
}

double truncated_subset_probability(std::size_t total, std::size_t subset_size) {
  if (subset_size >= total) {
    throw Error(ErrorCode::kDomainError, "subset size must be < total");
  }
  if (total == 1) return 1.0;  // only the empty subset exists
  if (subset_size + 1 == total) return 0.0;
  return 1.0 / (static_cast<double>(total - 1) * binomial(total - 1, subset_size));
}

std::vector<Mask> sample_shapley_masks(const PerturbPlan& plan, std::size_t size,
                                       std::size_t target, Rng& rng) {
  require_perturbable(size);
  if (target >= size) {
    throw Error(ErrorCode::kValidationError, "target index out of range");
  }
  std::vector<Mask> masks;
  masks.reserve(plan.sample_count);
  std::vector<std::size_t> pool;
  for (std::size_t s = 0; s < plan.sample_count; ++s) {
    const std::size_t kept = rng.uniform_below(size - 1);  // {0..M-2}
    pool.clear();
    for (std::size_t i = 0; i < size; ++i) {
      if (i != target) pool.push_back(i);
    }
    std::vector<std::uint8_t> bits(size, 0);
    remove_random(pool, kept, rng, bits, 1);
    masks.emplace_back(std::move(bits));
  }
  return masks;
}

std::vector<Mask> sample_shapley_masks(const PerturbPlan& plan, std::size_t size,
                                       std::size_t target) {
  Rng rng = Rng::split(plan.seed, target);
  return sample_shapley_masks(plan, size, target, rng);
}

std::vector<Mask> enumerate_all_masks(std::size_t size,
                                      std::optional<std::size_t> exclude) {
  if (size > kMaxEnumerationSize) {
    throw Error(ErrorCode::kTooLarge,
                "exhaustive enumeration is capped at " +
                    std::to_string(kMaxEnumerationSize) + " segments, got " +
                    std::to_string(size));
  }
  if (exclude && *exclude >= size) {
    throw Error(ErrorCode::kValidationError, "excluded index out of range");
  }
  std::vector<std::size_t> free_bits;
  for (std::size_t i = 0; i < size; ++i) {
    if (!exclude || i != *exclude) free_bits.push_back(i);
  }
  const std::size_t free = free_bits.size();
  const std::uint64_t count = std::uint64_t{1} << free;
  std::vector<Mask> masks;
  masks.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::vector<std::uint8_t> bits(size, 0);
    // The first free bit is the most significant digit of k.
    for (std::size_t f = 0; f < free; ++f) {
      bits[free_bits[f]] = (k >> (free - 1 - f)) & 1U;
    }
    masks.emplace_back(std::move(bits));
  }
  return masks;
}

std::vector<Mask> boundary_masks(std::size_t size) {
  return {Mask::full(size), Mask::empty(size)};
}

double distance_kernel(const Mask& mask, double width) {
  const double d = static_cast<double>(mask.removed_count());
  return std::exp(-(d * d) / (width * width));
}

}  // namespace lerg
