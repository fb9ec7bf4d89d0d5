#include "lerg/commands.h"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "lerg/explain.h"
#include "lerg/synthetic.h"

namespace lerg {
namespace {

std::unique_ptr<Generator> load_model(const ModelSpec& spec, std::string& hashed,
                                      const RemoteOptions& remote) {
  if (spec.kind == "additive" || spec.kind == "ngram") {
    if (spec.file.empty()) {
      throw Error(ErrorCode::kValidationError,
                  "--model " + spec.kind + " needs --model-file");
    }
    const std::string text = read_file(spec.file);
    hashed += "model:" + sha256_hex(text) + "\n";
    if (spec.kind == "additive") {
      return std::make_unique<AdditiveToy>(additive_from_json(text));
    }
    return std::make_unique<NgramModel>(ngram_from_json(text));
  }
  if (spec.kind == "remote") {
    if (spec.endpoint.empty() == spec.server_cmd.empty()) {
      throw Error(ErrorCode::kValidationError,
                  "--model remote needs exactly one of --endpoint or --server-cmd");
    }
    hashed += "remote:" + spec.endpoint + spec.server_cmd + "\n";
    return spec.endpoint.empty()
               ? std::unique_ptr<Generator>(RemoteGenerator::over_stdio(spec.server_cmd, remote))
               : std::unique_ptr<Generator>(RemoteGenerator::over_http(spec.endpoint, remote));
  }
  throw Error(ErrorCode::kValidationError, "unknown model kind '" + spec.kind + "'");
}

Stamp make_stamp(const RunConfig& config, const LoadedInputs& inputs) {
  return Stamp{config_to_json(config), inputs.inputs_sha256};
}

}  // namespace

std::string safe_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

LoadedInputs load_inputs(const RunConfig& config, const RemoteOptions& remote) {
  LoadedInputs inputs;
  std::string hashed;
  if (!config.corpus.empty()) {
    const std::string text = read_file(config.corpus);
    hashed += "corpus:" + sha256_hex(text) + "\n";
    auto ingested =
        ingest_jsonl_text(text, config.strict, segmenter_by_name(config.segmenter));
    inputs.examples = std::move(ingested.examples);
    inputs.issues = std::move(ingested.issues);
  }
  inputs.model = load_model(config.model, hashed, remote);
  if (config.corpus.empty()) {
    const auto* toy = dynamic_cast<const AdditiveToy*>(inputs.model.get());
    if (toy == nullptr) {
      throw Error(ErrorCode::kValidationError, "--corpus is required for this model");
    }
    inputs.examples.push_back(toy->example());
  }
  if (!config.examples.empty()) {
    std::vector<Example> selected;
    for (const auto& id : config.examples) {
      const auto it = std::find_if(inputs.examples.begin(), inputs.examples.end(),
                                   [&](const Example& e) { return e.id == id; });
      if (it == inputs.examples.end()) {
        throw Error(ErrorCode::kValidationError, "no example with id '" + id + "'");
      }
      selected.push_back(*it);
    }
    inputs.examples = std::move(selected);
  }
  inputs.inputs_sha256 = sha256_hex(hashed);
  return inputs;
}

std::vector<std::filesystem::path> run_explain(const RunConfig& config,
                                               const RemoteOptions& remote) {
  const auto inputs = load_inputs(config, remote);
  if (inputs.examples.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "no examples to explain");
  }
  const Stamp stamp = make_stamp(config, inputs);
  const std::filesystem::path out(config.out);
  std::vector<std::filesystem::path> written;
  std::set<std::string> stems;
  nlohmann::ordered_json explanations = nlohmann::ordered_json::array();

  for (const auto& ex : inputs.examples) {
    std::string stem = safe_file_stem(ex.id);
    while (!stems.insert(stem).second) stem += "_";
    ExplainOptions options = explain_options(config);
    options.plan.seed = example_seed(config.seed, ex.id);
    for (Method method : config.methods) {
      spdlog::debug("explaining '{}' with {}", ex.id, method_name(method));
      const auto phi = explain(method, *inputs.model, ex, options);
      const auto base = out / (stem + "." + std::string(method_name(method)));
      written.push_back(base.string() + ".csv");
      write_file(written.back(), explanation_csv(phi, ex, stamp));
      written.push_back(base.string() + ".svg");
      write_file(written.back(), explanation_svg(phi, ex, stamp));
      explanations.push_back(explanation_json(phi, ex));
    }
  }

  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["config"] = stamp.config;
  j["inputs_sha256"] = stamp.inputs_sha256;
  j["explanations"] = explanations;
  written.push_back(out / "explain.json");
  write_file(written.back(), j.dump(1) + "\n");
  return written;
}

std::vector<std::filesystem::path> run_eval(const RunConfig& config, std::size_t threads,
                                            const RemoteOptions& remote) {
  const auto inputs = load_inputs(config, remote);
  if (inputs.examples.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "no valid examples to evaluate");
  }
  auto report = sweep(*inputs.model, inputs.examples, sweep_config(config, threads));
  for (const auto& issue : inputs.issues) {
    report.failures.push_back({"line " + std::to_string(issue.line),
                               std::string(error_code_name(issue.code)), issue.message});
  }
  const Stamp stamp = make_stamp(config, inputs);
  const std::filesystem::path out(config.out);
  std::vector<std::filesystem::path> written;
  written.push_back(out / "report.csv");
  write_file(written.back(), report_csv(report, stamp));
  written.push_back(out / "report.json");
  write_file(written.back(), report_json(report, stamp));
  for (Metric metric : config.metrics) {
    written.push_back(out / ("curves_" + std::string(metric_name(metric)) + ".svg"));
    write_file(written.back(), curves_svg(report, metric, stamp));
  }
  return written;
}

void run_train_ngram(const std::filesystem::path& corpus,
                     const std::filesystem::path& out, bool strict,
                     const std::string& segmenter,
                     const NgramHyperparams& hyperparams) {
  const auto ingested = ingest_jsonl(corpus, strict, segmenter_by_name(segmenter));
  write_file(out, ngram_to_json(train_ngram(ingested.examples, hyperparams)));
}

void run_synth_corpus(std::size_t count, std::uint64_t seed,
                      const std::filesystem::path& out) {
  std::string text;
  for (const auto& ex : synthetic_dialogues(count, seed)) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["context"] = ex.context.joined();
    j["response"] = ex.response.joined();
    text += j.dump() + "\n";
  }
  write_file(out, text);
}

}  // namespace lerg
