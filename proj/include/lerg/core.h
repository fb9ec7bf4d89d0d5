#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lerg/error.h"

namespace lerg {

// Byte offsets [start, end) into the UTF-8 source string.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

// Ordered text units with their positions in the source string.
class SegmentedText {
 public:
  SegmentedText() = default;
  // Throws ValidationError if segments is empty, sizes differ, or offsets
  // are not strictly increasing and non-overlapping.
  SegmentedText(std::vector<std::string> segments, std::vector<Span> offsets);

  // Segments with synthetic offsets as if joined by single spaces.
  static SegmentedText from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  const std::vector<std::string>& segments() const { return segments_; }
  const std::vector<Span>& offsets() const { return offsets_; }
  const std::string& operator[](std::size_t i) const { return segments_[i]; }

  std::string joined(std::string_view separator = " ") const;

 private:
  std::vector<std::string> segments_;
  std::vector<Span> offsets_;
};

using Segmenter = std::function<SegmentedText(std::string_view)>;

// Maximal runs of non-whitespace (ASCII whitespace) characters.
SegmentedText segment_whitespace(std::string_view text);

// One segment per non-whitespace UTF-8 code point.
SegmentedText segment_characters(std::string_view text);

// Looks up a segmenter by name ("whitespace", "char").
Segmenter segmenter_by_name(std::string_view name);

struct Example {
  std::string id;
  SegmentedText context;   // x, length M
  SegmentedText response;  // y, length N

  std::size_t context_size() const { return context.size(); }
  std::size_t response_size() const { return response.size(); }
};

// Throws ValidationError unless M >= 1 and N >= 1.
void validate_example(const Example& example);

// Binary inclusion vector: bit i is 1 iff context segment i is kept.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> bits);

  static Mask full(std::size_t size);
  static Mask empty(std::size_t size);

  std::size_t size() const { return bits_.size(); }
  std::size_t kept_count() const { return kept_count_; }
  std::size_t removed_count() const { return bits_.size() - kept_count_; }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  Mask with(std::size_t i, bool value) const;

  // Packs the bits into an integer, bit i of the result = bit i of the mask.
  // Only valid for masks of size <= 64.
  std::uint64_t to_index() const;
  static Mask from_index(std::uint64_t index, std::size_t size);

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.bits_ == b.bits_;
  }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t kept_count_ = 0;
};

// Natural-log per-step conditional probabilities log P(y_j | context, y_<j).
using StepLogProbs = std::vector<double>;

enum class Method {
  kLime,
  kLergL,
  kShapley,
  kShapleyW,
  kLergS,
  kExactShapley,
  kExactLergS,
};

std::string_view method_name(Method method);  // CLI spelling, e.g. "lerg-s"
Method parse_method(std::string_view name);   // throws ValidationError

// Attribution of input segment i (row) to response step j (column).
class ExplanationMatrix {
 public:
  ExplanationMatrix() = default;
  ExplanationMatrix(std::size_t rows, std::size_t cols, Method method,
                    std::size_t sample_count, std::uint64_t seed);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return phi_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return phi_[i * cols_ + j];
  }
  std::span<const double> values() const { return phi_; }

  Method method() const { return method_; }
  std::size_t sample_count() const { return sample_count_; }
  std::uint64_t seed() const { return seed_; }

  bool all_finite() const;
  double max_abs_diff(const ExplanationMatrix& other) const;
  double total() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> phi_;
  Method method_ = Method::kLergS;
  std::size_t sample_count_ = 0;
  std::uint64_t seed_ = 0;
};

enum class Reduction { kSumOverJ, kMaxOverJ };

struct Saliency {
  std::vector<double> scores;
  Reduction reduction = Reduction::kSumOverJ;
};

Saliency saliency_of(const ExplanationMatrix& phi,
                     Reduction reduction = Reduction::kSumOverJ);

// Number of segments selected by a top-k% rule: ceil(ratio * size), guarded
// against floating-point noise in the product.
std::size_t top_k_count(double ratio, std::size_t size);

}  // namespace lerg
