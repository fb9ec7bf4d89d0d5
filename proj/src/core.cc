#include "lerg/core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lerg {
namespace {

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte; treat as its own unit
}

}  // namespace

SegmentedText::SegmentedText(std::vector<std::string> segments,
                             std::vector<Span> offsets)
    : segments_(std::move(segments)), offsets_(std::move(offsets)) {
  if (segments_.empty()) {
    throw Error(ErrorCode::kValidationError, "segmented text has no segments");
  }
  if (segments_.size() != offsets_.size()) {
    throw Error(ErrorCode::kValidationError,
                "segment and offset counts differ");
  }
  for (std::size_t i = 0; i < offsets_.size(); ++i) {
    if (offsets_[i].end <= offsets_[i].start ||
        (i > 0 && offsets_[i].start < offsets_[i - 1].end)) {
      throw Error(ErrorCode::kValidationError,
                  "segment offsets must be increasing and non-overlapping");
    }
  }
}

SegmentedText SegmentedText::from_tokens(std::vector<std::string> tokens) {
  std::vector<Span> offsets;
  offsets.reserve(tokens.size());
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    if (t.empty()) {
      throw Error(ErrorCode::kValidationError, "empty segment");
    }
    offsets.push_back({pos, pos + t.size()});
    pos += t.size() + 1;
  }
  return SegmentedText(std::move(tokens), std::move(offsets));
}

std::string SegmentedText::joined(std::string_view separator) const {
  std::string out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i > 0) out += separator;
    out += segments_[i];
  }
  return out;
}

SegmentedText segment_whitespace(std::string_view text) {
  std::vector<std::string> segments;
  std::vector<Span> offsets;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    if (i == text.size()) break;
    const std::size_t start = i;
    while (i < text.size() && !is_ascii_space(text[i])) ++i;
    segments.emplace_back(text.substr(start, i - start));
    offsets.push_back({start, i});
  }
  if (segments.empty()) {
    throw Error(ErrorCode::kEmptyText, "text has no non-whitespace content");
  }
  return SegmentedText(std::move(segments), std::move(offsets));
}

SegmentedText segment_characters(std::string_view text) {
  std::vector<std::string> segments;
  std::vector<Span> offsets;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_ascii_space(text[i])) {
      ++i;
      continue;
    }
    const std::size_t len =
        std::min(utf8_length(static_cast<unsigned char>(text[i])),
                 text.size() - i);
    segments.emplace_back(text.substr(i, len));
    offsets.push_back({i, i + len});
    i += len;
  }
  if (segments.empty()) {
    throw Error(ErrorCode::kEmptyText, "text has no non-whitespace content");
  }
  return SegmentedText(std::move(segments), std::move(offsets));
}

Segmenter segmenter_by_name(std::string_view name) {
  if (name == "whitespace") return segment_whitespace;
  if (name == "char") return segment_characters;
  throw Error(ErrorCode::kValidationError,
              "unknown segmenter '" + std::string(name) + "'");
}

void validate_example(const Example& example) {
  if (example.context.empty()) {
    throw Error(ErrorCode::kValidationError,
                "example '" + example.id + "' has an empty context");
  }
  if (example.response.empty()) {
    throw Error(ErrorCode::kValidationError,
                "example '" + example.id + "' has an empty response");
  }
}

Mask::Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
  kept_count_ = static_cast<std::size_t>(
      std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::full(std::size_t size) {
  return Mask(std::vector<std::uint8_t>(size, 1));
}

Mask Mask::empty(std::size_t size) {
  return Mask(std::vector<std::uint8_t>(size, 0));
}

Mask Mask::with(std::size_t i, bool value) const {
  Mask out = *this;
  if (out.test(i) != value) {
    out.bits_[i] = value ? 1 : 0;
    if (value) {
      ++out.kept_count_;
    } else {
      --out.kept_count_;
    }
  }
  return out;
}

std::uint64_t Mask::to_index() const {
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) index |= std::uint64_t{1} << i;
  }
  return index;
}

Mask Mask::from_index(std::uint64_t index, std::size_t size) {
  std::vector<std::uint8_t> bits(size);
  for (std::size_t i = 0; i < size; ++i) bits[i] = (index >> i) & 1U;
  return Mask(std::move(bits));
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kLime: return "lime";
    case Method::kLergL: return "lerg-l";
    case Method::kShapley: return "shapley";
    case Method::kShapleyW: return "shapley-w";
    case Method::kLergS: return "lerg-s";
    case Method::kExactShapley: return "exact-shapley";
    case Method::kExactLergS: return "exact-lerg-s";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kLime, Method::kLergL, Method::kShapley,
                   Method::kShapleyW, Method::kLergS, Method::kExactShapley,
                   Method::kExactLergS}) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::kValidationError,
              "unknown method '" + std::string(name) + "'");
}

ExplanationMatrix::ExplanationMatrix(std::size_t rows, std::size_t cols,
                                     Method method, std::size_t sample_count,
                                     std::uint64_t seed)
    : rows_(rows),
      cols_(cols),
      phi_(rows * cols, 0.0),
      method_(method),
      sample_count_(sample_count),
      seed_(seed) {}

bool ExplanationMatrix::all_finite() const {
  return std::all_of(phi_.begin(), phi_.end(),
                     [](double v) { return std::isfinite(v); });
}

double ExplanationMatrix::max_abs_diff(const ExplanationMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) {
    throw Error(ErrorCode::kValidationError, "matrix dimensions differ");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < phi_.size(); ++k) {
    worst = std::max(worst, std::abs(phi_[k] - other.phi_[k]));
  }
  return worst;
}

double ExplanationMatrix::total() const {
  return std::accumulate(phi_.begin(), phi_.end(), 0.0);
}

Saliency saliency_of(const ExplanationMatrix& phi, Reduction reduction) {
  Saliency out;
  out.reduction = reduction;
  out.scores.resize(phi.rows());
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    double acc = reduction == Reduction::kSumOverJ
                     ? 0.0
                     : -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < phi.cols(); ++j) {
      acc = reduction == Reduction::kSumOverJ ? acc + phi(i, j)
                                              : std::max(acc, phi(i, j));
    }
    out.scores[i] = acc;
  }
  return out;
}

std::size_t top_k_count(double ratio, std::size_t size) {
  const double raw = ratio * static_cast<double>(size);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, size);
}

}  // namespace lerg
