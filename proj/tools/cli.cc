#include "cli.h"

#include <cstdlib>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lerg/commands.h"
#include "lerg/error.h"
#include "lerg/oracle.h"

namespace lerg {
namespace {

void configure_logging() {
  static const bool done = [] {
    auto logger = spdlog::stderr_color_mt("lerg");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("LERG_LOG")) {
      spdlog::set_level(spdlog::level::from_str(level));
    }
    return true;
  }();
  (void)done;
}

void print_error(std::ostream& err, std::string_view code, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = {{"code", code}, {"message", message}};
  err << j.dump() << "\n";
}

// Flags shared by explain and eval. Values only override the base config
// when given on the command line.
struct RunFlags {
  std::string config_path;
  std::string model, model_file, endpoint, server_cmd, corpus, out, segmenter;
  std::vector<std::string> methods, examples, metrics;
  std::size_t samples = 0;
  double max_mask_ratio = 0.0;
  std::vector<double> ratios;
  std::uint64_t seed = 0;
  bool strict = true;
  std::size_t trials = 0;
  bool no_random = false;
  std::string reduction;
  std::size_t threads = 1;
  int max_inflight = 4;

  std::vector<CLI::Option*> options;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool eval) {
  cmd->add_option("--config", f.config_path,
                  "Rerun from a config file or an artifact's embedded config");
  f.options = {
      cmd->add_option("--model", f.model, "additive | ngram | remote")
          ->check(CLI::IsMember({"additive", "ngram", "remote"})),
      cmd->add_option("--model-file", f.model_file, "Additive or n-gram model JSON"),
      cmd->add_option("--endpoint", f.endpoint, "Remote model base URL"),
      cmd->add_option("--server-cmd", f.server_cmd, "Remote model stdio command"),
      cmd->add_option("--corpus", f.corpus, "JSONL corpus"),
      cmd->add_option("--method", f.methods,
                      "lime, lerg-l, shapley, shapley-w, lerg-s, exact-shapley, exact-lerg-s"),
      cmd->add_option("--samples", f.samples, "Perturbations per example (1000)"),
      cmd->add_option("--max-mask-ratio", f.max_mask_ratio,
                      "Largest fraction of segments removed (0.5)"),
      cmd->add_option("--seed", f.seed, "Master seed"),
      cmd->add_option("--out", f.out, "Output directory"),
      cmd->add_flag("--strict,!--lenient", f.strict, "Fail on malformed corpus lines"),
      cmd->add_option("--segmenter", f.segmenter, "whitespace | char")
          ->check(CLI::IsMember({"whitespace", "char"})),
  };
  if (eval) {
    f.options.push_back(cmd->add_option("--ratios", f.ratios, "Top-k ratios, comma separated")
                            ->delimiter(','));
    f.options.push_back(
        cmd->add_option("--metrics", f.metrics, "PPLC_R, PPL_A")->delimiter(','));
    f.options.push_back(cmd->add_option("--trials", f.trials, "Random baseline trials (10)"));
    f.options.push_back(cmd->add_flag("--no-random", f.no_random, "Skip the random baseline"));
    f.options.push_back(cmd->add_option("--reduction", f.reduction, "sum | max")
                            ->check(CLI::IsMember({"sum", "max"})));
    cmd->add_option("--threads", f.threads, "Worker threads over examples")
        ->check(CLI::PositiveNumber);
  } else {
    f.options.push_back(cmd->add_option("--example", f.examples, "Example id to explain"));
  }
  cmd->add_option("--max-inflight", f.max_inflight, "Pipelined remote requests")
      ->check(CLI::PositiveNumber);
}

bool given(const CLI::App* cmd, const std::string& name) {
  return cmd->get_option(name)->count() > 0;
}

RunConfig resolve_config(const CLI::App* cmd, const RunFlags& f, const std::string& command) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : config_from_artifact(f.config_path);
  c.command = command;
  if (given(cmd, "--model")) c.model.kind = f.model;
  if (given(cmd, "--model-file")) c.model.file = f.model_file;
  if (given(cmd, "--endpoint")) c.model.endpoint = f.endpoint;
  if (given(cmd, "--server-cmd")) c.model.server_cmd = f.server_cmd;
  if (given(cmd, "--corpus")) c.corpus = f.corpus;
  if (given(cmd, "--method")) {
    c.methods.clear();
    for (const auto& m : f.methods) c.methods.push_back(parse_method(m));
  }
  if (given(cmd, "--samples")) c.samples = f.samples;
  if (given(cmd, "--max-mask-ratio")) c.max_mask_ratio = f.max_mask_ratio;
  if (given(cmd, "--seed")) c.seed = f.seed;
  if (given(cmd, "--out")) c.out = f.out;
  if (given(cmd, "--strict")) c.strict = f.strict;
  if (given(cmd, "--segmenter")) c.segmenter = f.segmenter;
  if (command == "eval") {
    if (given(cmd, "--ratios")) c.ratios = f.ratios;
    if (given(cmd, "--metrics")) {
      c.metrics.clear();
      for (const auto& m : f.metrics) c.metrics.push_back(parse_metric(m));
    }
    if (given(cmd, "--trials")) c.random_trials = f.trials;
    if (given(cmd, "--no-random")) c.include_random = false;
    if (given(cmd, "--reduction")) {
      c.reduction = f.reduction == "max" ? Reduction::kMaxOverJ : Reduction::kSumOverJ;
    }
  } else if (given(cmd, "--example")) {
    c.examples = f.examples;
  }
  if (c.samples == 0) throw Error(ErrorCode::kValidationError, "--samples must be >= 1");
  if (!(c.max_mask_ratio > 0.0 && c.max_mask_ratio <= 1.0)) {
    throw Error(ErrorCode::kValidationError, "--max-mask-ratio must be in (0, 1]");
  }
  if (c.methods.empty()) throw Error(ErrorCode::kValidationError, "no --method given");
  return c;
}

RemoteOptions remote_options(const RunFlags& f) {
  RemoteOptions options;
  options.max_inflight = static_cast<std::size_t>(f.max_inflight);
  return options;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Local explanations for conditional sequence generation", "lerg"};
  app.require_subcommand(1);

  RunFlags explain_flags;
  auto* explain_cmd = app.add_subcommand("explain", "Write the attribution matrix per example");
  add_run_flags(explain_cmd, explain_flags, false);

  RunFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Run the perplexity sweep over a corpus");
  add_run_flags(eval_cmd, eval_flags, true);

  OracleSuiteOptions oracle;
  std::string oracle_out;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the exactness and convergence checks");
  oracle_cmd->add_option("--seed", oracle.seed);
  oracle_cmd->add_option("--instances", oracle.instances)->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--convergence-seeds", oracle.convergence_seeds)
      ->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--small-samples", oracle.small_samples)->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--large-samples", oracle.large_samples)->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--out", oracle_out, "Also write the report to this file");

  std::string train_corpus, train_out, train_segmenter = "whitespace";
  bool train_strict = true;
  NgramHyperparams hyper;
  auto* train_cmd = app.add_subcommand("train-ngram", "Train the n-gram reference model");
  train_cmd->add_option("--corpus", train_corpus)->required();
  train_cmd->add_option("--out", train_out, "Model JSON path")->required();
  train_cmd->add_option("--add-k", hyper.add_k);
  train_cmd->add_option("--lambda", hyper.lambda);
  train_cmd->add_flag("--strict,!--lenient", train_strict);
  train_cmd->add_option("--segmenter", train_segmenter)
      ->check(CLI::IsMember({"whitespace", "char"}));

  std::size_t synth_count = 100;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "Write a synthetic JSONL dialogue corpus");
  synth_cmd->add_option("--count", synth_count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--out", synth_out, "JSONL path")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, error_code_name(ErrorCode::kValidationError), e.what());
    return exit_code_for(ErrorCode::kValidationError);
  }

  try {
    if (*explain_cmd) {
      const auto config = resolve_config(explain_cmd, explain_flags, "explain");
      for (const auto& path : run_explain(config, remote_options(explain_flags))) {
        out << path.string() << "\n";
      }
    } else if (*eval_cmd) {
      const auto config = resolve_config(eval_cmd, eval_flags, "eval");
      for (const auto& path :
           run_eval(config, eval_flags.threads, remote_options(eval_flags))) {
        out << path.string() << "\n";
      }
    } else if (*oracle_cmd) {
      const std::string report = oracle_json(run_oracle_suite(oracle), oracle);
      if (!oracle_out.empty()) write_file(oracle_out, report);
      out << report;
    } else if (*train_cmd) {
      run_train_ngram(train_corpus, train_out, train_strict, train_segmenter, hyper);
      out << train_out << "\n";
    } else if (*synth_cmd) {
      run_synth_corpus(synth_count, synth_seed, synth_out);
      out << synth_out << "\n";
    }
  } catch (const Error& e) {
    print_error(err, error_code_name(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error(err, "InternalError", e.what());
    return 1;
  }
  return 0;
}

}  // namespace lerg
