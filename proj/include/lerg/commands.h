#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lerg/models.h"
#include "lerg/oracle.h"
#include "lerg/remote.h"
#include "lerg/report.h"

namespace lerg {

// Model, selected examples and the hash of every input byte they came from.
struct LoadedInputs {
  std::unique_ptr<Generator> model;
  std::vector<Example> examples;
  std::vector<IngestIssue> issues;
  std::string inputs_sha256;
};

LoadedInputs load_inputs(const RunConfig& config,
                         const RemoteOptions& remote = {});

// Writes <id>.<method>.csv and .svg per example and method, plus
// explain.json. Returns the written paths in write order.
std::vector<std::filesystem::path> run_explain(const RunConfig& config,
                                               const RemoteOptions& remote = {});

// Writes report.csv, report.json and curves_<METRIC>.svg.
std::vector<std::filesystem::path> run_eval(const RunConfig& config,
                                            std::size_t threads = 1,
                                            const RemoteOptions& remote = {});

// Trains the n-gram reference model on a JSONL corpus and writes it as JSON.
void run_train_ngram(const std::filesystem::path& corpus,
                     const std::filesystem::path& out, bool strict,
                     const std::string& segmenter,
                     const NgramHyperparams& hyperparams = {});

// Writes a synthetic JSONL dialogue corpus.
void run_synth_corpus(std::size_t count, std::uint64_t seed,
                      const std::filesystem::path& out);

// File-name-safe form of an example id.
std::string safe_file_stem(std::string_view id);

}  // namespace lerg
