#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lerg/core.h"
#include "lerg/eval.h"
#include "lerg/oracle.h"

namespace lerg {

inline constexpr int kReportSchema = 1;

// ---------------------------------------------------------------------------
// Corpus ingestion

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::kParseError;
  std::string message;
};

struct IngestResult {
  std::vector<Example> examples;  // file order
  std::vector<IngestIssue> issues;
};

// Each non-blank line is {"id": str, "context": str, "response": str}.
// Strict mode throws the first issue as an Error whose message names the
// line; lenient mode skips bad lines and records them. Throws EmptyFile if
// the input has no non-blank line.
IngestResult ingest_jsonl_text(std::string_view text, bool strict,
                               const Segmenter& segmenter = segment_whitespace);
IngestResult ingest_jsonl(const std::filesystem::path& path, bool strict,
                          const Segmenter& segmenter = segment_whitespace);

std::string read_file(const std::filesystem::path& path);  // IoError
void write_file(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------------------
// Run configuration

struct ModelSpec {
  std::string kind = "ngram";  // additive | ngram | remote
  std::string file;            // additive / ngram model file
  std::string endpoint;        // remote over HTTP
  std::string server_cmd;      // remote over stdio
};

struct RunConfig {
  std::string command;  // explain | eval
  ModelSpec model;
  std::string corpus;                // JSONL path, optional for additive
  std::vector<std::string> examples;  // explain: selected ids, empty = all
  std::vector<Method> methods{Method::kLergS};
  std::size_t samples = 1000;
  double max_mask_ratio = 0.5;
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<Metric> metrics{Metric::kPplcR, Metric::kPplA};
  bool include_random = true;
  std::size_t random_trials = 10;
  Reduction reduction = Reduction::kSumOverJ;
  std::uint64_t seed = 0;
  std::string segmenter = "whitespace";
  bool strict = true;
  // Not part of the reproducibility stamp, so a rerun into another
  // directory yields identical bytes.
  std::string out = "lerg-out";
};

nlohmann::ordered_json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

// Reads a config from a standalone config file, a JSON artifact carrying a
// "config" member, or a CSV artifact with a "# config: " line.
RunConfig config_from_artifact(const std::filesystem::path& path);

ExplainOptions explain_options(const RunConfig& config);
SweepConfig sweep_config(const RunConfig& config, std::size_t threads);

// ---------------------------------------------------------------------------
// Emitters. Every artifact carries the config stamp and the input hash.

struct Stamp {
  nlohmann::ordered_json config;
  std::string inputs_sha256;
};

// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
std::string csv_field(std::string_view text);

// Rows are input segments, columns are response segments.
std::string explanation_csv(const ExplanationMatrix& phi, const Example& example,
                            const Stamp& stamp);

// Input segments along the horizontal axis, response segments down the
// vertical axis, diverging colors scaled by the matrix max |phi|.
std::string explanation_svg(const ExplanationMatrix& phi, const Example& example,
                            const Stamp& stamp);

nlohmann::ordered_json explanation_json(const ExplanationMatrix& phi,
                                        const Example& example);

// example_id,method,metric,ratio,value. Aggregate rows use the ids
// "corpus:token_mean" and "corpus:example_mean".
std::string report_csv(const CorpusReport& report, const Stamp& stamp);
std::string report_json(const CorpusReport& report, const Stamp& stamp);

// Corpus token-mean curve per method for one metric.
std::string curves_svg(const CorpusReport& report, Metric metric,
                       const Stamp& stamp);

std::string oracle_json(const std::vector<OracleCheck>& checks,
                        const OracleSuiteOptions& options);

}  // namespace lerg
