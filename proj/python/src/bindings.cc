#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lerg/commands.h"
#include "lerg/eval.h"
#include "lerg/explain.h"
#include "lerg/oracle.h"
#include "lerg/report.h"
#include "lerg/synthetic.h"

namespace py = pybind11;

namespace lerg {
namespace {

// Generator backed by a Python callable
//   score(contexts: list[list[str]], response: list[str]) -> list[list[float]]
class CallbackModel final : public Generator {
 public:
  using Fn = std::function<std::vector<StepLogProbs>(
      const std::vector<std::vector<std::string>>&, const std::vector<std::string>&)>;

  CallbackModel(Fn fn, bool normalized, std::size_t max_batch) : fn_(std::move(fn)) {
    manifest_.kind = ModelKind::kCustom;
    manifest_.normalized = normalized;
    manifest_.max_batch = max_batch;
    manifest_.description = "python callback";
  }
  const Manifest& manifest() const override { return manifest_; }

 protected:
  std::vector<StepLogProbs> score_batch_impl(std::span<const std::vector<std::string>> contexts,
                                             const SegmentedText& response) const override {
    py::gil_scoped_acquire gil;
    return fn_({contexts.begin(), contexts.end()}, response.segments());
  }

 private:
  Fn fn_;
  Manifest manifest_;
};

py::array_t<double> to_numpy(const ExplanationMatrix& phi) {
  py::array_t<double> out({phi.rows(), phi.cols()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    for (std::size_t j = 0; j < phi.cols(); ++j) view(i, j) = phi(i, j);
  }
  return out;
}

ExplanationMatrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                             Method method) {
  if (a.ndim() != 2) throw Error(ErrorCode::kValidationError, "phi must be 2-D");
  ExplanationMatrix phi(a.shape(0), a.shape(1), method, 0, 0);
  const auto view = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    for (py::ssize_t j = 0; j < a.shape(1); ++j) phi(i, j) = view(i, j);
  }
  return phi;
}

ExplainOptions make_options(std::size_t samples, double max_mask_ratio, std::uint64_t seed) {
  ExplainOptions options;
  options.plan.sample_count = samples;
  options.plan.max_masked_ratio = max_mask_ratio;
  options.plan.seed = seed;
  return options;
}

py::object parse_json(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

}  // namespace
}  // namespace lerg

PYBIND11_MODULE(_lerg, m) {
  using namespace lerg;
  m.doc() = "Local explanations for conditional sequence generation";

  static py::exception<Error> error(m, "LergError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string message = std::string(error_code_name(e.code())) + ": " + e.what();
      PyErr_SetString(error.ptr(), message.c_str());
    }
  });

  py::class_<Example>(m, "Example")
      .def(py::init([](std::string id, const std::string& context, const std::string& response,
                       const std::string& segmenter) {
             const auto seg = segmenter_by_name(segmenter);
             Example ex{std::move(id), seg(context), seg(response)};
             validate_example(ex);
             return ex;
           }),
           py::arg("id"), py::arg("context"), py::arg("response"),
           py::arg("segmenter") = "whitespace")
      .def_static("from_tokens",
                  [](std::string id, std::vector<std::string> context,
                     std::vector<std::string> response) {
                    Example ex{std::move(id), SegmentedText::from_tokens(std::move(context)),
                               SegmentedText::from_tokens(std::move(response))};
                    validate_example(ex);
                    return ex;
                  },
                  py::arg("id"), py::arg("context"), py::arg("response"))
      .def_readonly("id", &Example::id)
      .def_property_readonly("context", [](const Example& e) { return e.context.segments(); })
      .def_property_readonly("response", [](const Example& e) { return e.response.segments(); })
      .def("__repr__", [](const Example& e) {
        return "Example(id='" + e.id + "', M=" + std::to_string(e.context_size()) +
               ", N=" + std::to_string(e.response_size()) + ")";
      });

  py::class_<Generator>(m, "Generator")
      .def("score",
           [](const Generator& g, const std::vector<std::string>& context,
              const std::vector<std::string>& response) {
             return g.score(context, SegmentedText::from_tokens(response));
           },
           py::arg("context"), py::arg("response"))
      .def_property_readonly("normalized",
                             [](const Generator& g) { return g.manifest().normalized; });

  py::class_<AdditiveToy, Generator>(m, "AdditiveToy")
      .def_static("from_json",
                  [](const std::string& text) {
                    return std::make_unique<AdditiveToy>(additive_from_json(text));
                  })
      .def_static("random",
                  [](std::size_t m, std::size_t n, std::uint64_t seed) {
                    Rng rng(seed);
                    return std::make_unique<AdditiveToy>(random_additive_spec(m, n, rng));
                  },
                  py::arg("context_size"), py::arg("response_size"), py::arg("seed") = 0)
      .def("to_json", [](const AdditiveToy& t) { return additive_to_json(t.spec()); })
      .def("example", &AdditiveToy::example, py::arg("id") = "additive")
      .def_property_readonly("weights", [](const AdditiveToy& t) { return t.spec().weights; })
      .def_property_readonly("base", [](const AdditiveToy& t) { return t.spec().base; });

  py::class_<NgramModel, Generator>(m, "NgramModel")
      .def_static("from_json",
                  [](const std::string& text) {
                    return std::make_unique<NgramModel>(ngram_from_json(text));
                  })
      .def_static("train",
                  [](const std::vector<Example>& corpus, double add_k, double lambda) {
                    return std::make_unique<NgramModel>(
                        train_ngram(corpus, NgramHyperparams{add_k, lambda}));
                  },
                  py::arg("corpus"), py::arg("add_k") = 0.5, py::arg("lambda_") = 0.5)
      .def("to_json", [](const NgramModel& g) { return ngram_to_json(g.spec()); })
      .def_property_readonly("vocabulary_size", &NgramModel::vocabulary_size);

  py::class_<CallbackModel, Generator>(m, "CallbackModel")
      .def(py::init<CallbackModel::Fn, bool, std::size_t>(), py::arg("score"),
           py::arg("normalized") = true, py::arg("max_batch") = std::size_t{1} << 20);

  m.def("methods", [] {
    std::vector<std::string> names;
    for (Method method : {Method::kLime, Method::kLergL, Method::kShapley, Method::kShapleyW,
                          Method::kLergS, Method::kExactShapley, Method::kExactLergS}) {
      names.emplace_back(method_name(method));
    }
    return names;
  });

  m.def(
      "explain",
      [](const std::string& method, const Generator& model, const Example& example,
         std::size_t samples, double max_mask_ratio, std::uint64_t seed) {
        const auto phi = explain(parse_method(method), model, example,
                                 make_options(samples, max_mask_ratio, seed));
        return to_numpy(phi);
      },
      py::arg("method"), py::arg("model"), py::arg("example"), py::arg("samples") = 1000,
      py::arg("max_mask_ratio") = 0.5, py::arg("seed") = 0,
      "M x N attribution matrix; rows are input segments, columns response steps");

  m.def(
      "exact_shapley",
      [](const Generator& model, const Example& example, bool log_gain, bool classical) {
        return to_numpy(exact_shapley(model, example, log_gain,
                                      classical ? ShapleyConvention::kClassical
                                                : ShapleyConvention::kTruncatedRange));
      },
      py::arg("model"), py::arg("example"), py::arg("log_gain") = true,
      py::arg("classical") = true);

  m.def(
      "top_k_segments",
      [](const std::vector<double>& scores, double ratio) {
        return top_k_segments(Saliency{scores, Reduction::kSumOverJ}, ratio);
      },
      py::arg("scores"), py::arg("ratio"));

  m.def(
      "explanation_svg",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& phi,
         const Example& example, const std::string& method) {
        return explanation_svg(from_numpy(phi, parse_method(method)), example, Stamp{});
      },
      py::arg("phi"), py::arg("example"), py::arg("method") = "lerg-s");

  m.def(
      "evaluate",
      [](const Generator& model, const std::vector<Example>& corpus,
         const std::vector<std::string>& methods, const std::vector<double>& ratios,
         const std::vector<std::string>& metrics, std::size_t samples, std::size_t trials,
         bool include_random, std::uint64_t seed) {
        SweepConfig config;
        config.methods.clear();
        for (const auto& name : methods) config.methods.push_back(parse_method(name));
        config.metrics.clear();
        for (const auto& name : metrics) config.metrics.push_back(parse_metric(name));
        config.ratios = ratios;
        config.random_trials = trials;
        config.include_random = include_random;
        config.explain = make_options(samples, 0.5, seed);
        CorpusReport report;
        {
          py::gil_scoped_release release;
          report = sweep(model, corpus, config);
        }
        return parse_json(report_json(report, Stamp{}));
      },
      py::arg("model"), py::arg("corpus"), py::arg("methods") = std::vector<std::string>{"lerg-s"},
      py::arg("ratios") = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5},
      py::arg("metrics") = std::vector<std::string>{"PPLC_R", "PPL_A"},
      py::arg("samples") = 1000, py::arg("trials") = 10, py::arg("include_random") = true,
      py::arg("seed") = 0, "Perplexity sweep; returns the report as a dict");

  m.def("synthetic_dialogues", [](std::size_t count, std::uint64_t seed) {
    return synthetic_dialogues(count, seed);
  }, py::arg("count"), py::arg("seed") = 0);

  m.def(
      "read_corpus",
      [](const std::string& path, bool strict, const std::string& segmenter) {
        return ingest_jsonl(path, strict, segmenter_by_name(segmenter)).examples;
      },
      py::arg("path"), py::arg("strict") = true, py::arg("segmenter") = "whitespace");

  m.def(
      "oracle_check",
      [](std::uint64_t seed, std::size_t instances, std::size_t convergence_seeds) {
        OracleSuiteOptions options;
        options.seed = seed;
        options.instances = instances;
        options.convergence_seeds = convergence_seeds;
        std::vector<OracleCheck> checks;
        {
          py::gil_scoped_release release;
          checks = run_oracle_suite(options);
        }
        return parse_json(oracle_json(checks, options));
      },
      py::arg("seed") = 1, py::arg("instances") = 10, py::arg("convergence_seeds") = 20);
}
