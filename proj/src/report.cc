#include "lerg/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

namespace lerg {
namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  });
}

Example parse_line(std::string_view line, const Segmenter& segmenter) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw Error(ErrorCode::kParseError, "expected a JSON object");
  }
  for (const char* key : {"id", "context", "response"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw Error(ErrorCode::kParseError,
                  std::string("missing or non-string field '") + key + "'");
    }
  }
  Example ex;
  ex.id = j["id"].get<std::string>();
  if (ex.id.empty()) throw Error(ErrorCode::kValidationError, "empty id");
  for (const char* key : {"context", "response"}) {
    try {
      auto text = segmenter(j[key].get<std::string>());
      (std::string_view(key) == "context" ? ex.context : ex.response) = std::move(text);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyText) throw;
      throw Error(ErrorCode::kValidationError, std::string("empty ") + key);
    }
  }
  return ex;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string stamp_comment(const Stamp& stamp) {
  return "# config: " + stamp.config.dump() + "\n# inputs_sha256: " +
         stamp.inputs_sha256 + "\n";
}

std::string svg_metadata(const Stamp& stamp) {
  return "<metadata>" + xml_escape(stamp.config.dump()) + "</metadata>\n" +
         "<!-- inputs_sha256: " + stamp.inputs_sha256 + " -->\n";
}

std::string fixed(double value, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << value;
  return os.str();
}

// Signed value in [-1, 1] to a blue-white-red fill.
std::string diverging_color(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const auto channel = [](double v) {
    return static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  };
  int r = 255, g = 255, b = 255;
  if (t >= 0) {
    g = b = channel(1.0 - t);
  } else {
    r = g = channel(1.0 + t);
  }
  std::ostringstream os;
  os << "#" << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2)
     << g << std::setw(2) << b;
  return os.str();
}

std::string reduction_name(Reduction reduction) {
  return reduction == Reduction::kSumOverJ ? "sum" : "max";
}

Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::kSumOverJ;
  if (name == "max") return Reduction::kMaxOverJ;
  throw Error(ErrorCode::kValidationError,
              "unknown reduction '" + std::string(name) + "'");
}

}  // namespace

IngestResult ingest_jsonl_text(std::string_view text, bool strict,
                               const Segmenter& segmenter) {
  IngestResult result;
  std::size_t line_no = 0;
  bool any = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim_cr(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (is_blank(line)) continue;
    any = true;
    try {
      result.examples.push_back(parse_line(line, segmenter));
    } catch (const Error& e) {
      const std::string message = "line " + std::to_string(line_no) + ": " + e.what();
      if (strict) throw Error(e.code(), message);
      spdlog::warn("skipping {}", message);
      result.issues.push_back({line_no, e.code(), message});
    }
  }
  if (!any) throw Error(ErrorCode::kEmptyFile, "corpus has no records");
  return result;
}

IngestResult ingest_jsonl(const std::filesystem::path& path, bool strict,
                          const Segmenter& segmenter) {
  return ingest_jsonl_text(read_file(path), strict, segmenter);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "SHA-256 digest failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int k = 0; k < length; ++k) os << std::setw(2) << int{digest[k]};
  return os.str();
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  j["model"] = {{"kind", c.model.kind},
                {"file", c.model.file},
                {"endpoint", c.model.endpoint},
                {"server_cmd", c.model.server_cmd}};
  j["corpus"] = c.corpus;
  j["examples"] = c.examples;
  auto methods = nlohmann::ordered_json::array();
  for (Method m : c.methods) methods.push_back(std::string(method_name(m)));
  j["methods"] = methods;
  j["samples"] = c.samples;
  j["max_mask_ratio"] = c.max_mask_ratio;
  j["ratios"] = c.ratios;
  auto metrics = nlohmann::ordered_json::array();
  for (Metric m : c.metrics) metrics.push_back(std::string(metric_name(m)));
  j["metrics"] = metrics;
  j["include_random"] = c.include_random;
  j["random_trials"] = c.random_trials;
  j["reduction"] = reduction_name(c.reduction);
  j["seed"] = c.seed;
  j["segmenter"] = c.segmenter;
  j["strict"] = c.strict;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.command = j.value("command", c.command);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.kind = m.value("kind", c.model.kind);
      c.model.file = m.value("file", c.model.file);
      c.model.endpoint = m.value("endpoint", c.model.endpoint);
      c.model.server_cmd = m.value("server_cmd", c.model.server_cmd);
    }
    c.corpus = j.value("corpus", c.corpus);
    c.examples = j.value("examples", c.examples);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.samples = j.value("samples", c.samples);
    c.max_mask_ratio = j.value("max_mask_ratio", c.max_mask_ratio);
    c.ratios = j.value("ratios", c.ratios);
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j.at("metrics")) c.metrics.push_back(parse_metric(m.get<std::string>()));
    }
    c.include_random = j.value("include_random", c.include_random);
    c.random_trials = j.value("random_trials", c.random_trials);
    c.reduction = parse_reduction(j.value("reduction", std::string("sum")));
    c.seed = j.value("seed", c.seed);
    c.segmenter = j.value("segmenter", c.segmenter);
    c.strict = j.value("strict", c.strict);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed config: ") + e.what());
  }
  return c;
}

RunConfig config_from_artifact(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  constexpr std::string_view kMarker = "# config: ";
  if (text.starts_with(kMarker)) {
    const auto end = text.find('\n');
    return config_from_json(nlohmann::json::parse(
        text.substr(kMarker.size(), end - kMarker.size()), nullptr, false));
  }
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kParseError, path.string() + " holds no run config");
  }
  return config_from_json(j.contains("config") ? j.at("config") : j);
}

ExplainOptions explain_options(const RunConfig& config) {
  ExplainOptions options;
  options.plan.sample_count = config.samples;
  options.plan.max_masked_ratio = config.max_mask_ratio;
  options.plan.seed = config.seed;
  return options;
}

SweepConfig sweep_config(const RunConfig& config, std::size_t threads) {
  SweepConfig sc;
  sc.methods = config.methods;
  sc.include_random = config.include_random;
  sc.metrics = config.metrics;
  sc.ratios = config.ratios;
  sc.explain = explain_options(config);
  sc.random_trials = config.random_trials;
  sc.reduction = config.reduction;
  sc.threads = threads;
  return sc;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string explanation_csv(const ExplanationMatrix& phi, const Example& example,
                            const Stamp& stamp) {
  std::string out = stamp_comment(stamp);
  out += "# example: " + example.id + "\n# method: " +
         std::string(method_name(phi.method())) + "\n";
  out += "segment";
  for (const auto& y : example.response.segments()) out += "," + csv_field(y);
  out += "\n";
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    out += csv_field(example.context[i]);
    for (std::size_t j = 0; j < phi.cols(); ++j) out += "," + format_double(phi(i, j));
    out += "\n";
  }
  return out;
}

std::string explanation_svg(const ExplanationMatrix& phi, const Example& example,
                            const Stamp& stamp) {
  constexpr int kCellW = 44, kCellH = 26, kLeft = 130, kTop = 120, kBottom = 70;
  const int m = static_cast<int>(phi.rows());
  const int n = static_cast<int>(phi.cols());
  const int width = kLeft + m * kCellW + 20;
  const int height = kTop + n * kCellH + kBottom;
  double max_abs = 0.0;
  for (double v : phi.values()) max_abs = std::max(max_abs, std::abs(v));

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << svg_metadata(stamp);
  os << "<text x=\"8\" y=\"18\" font-size=\"14\">" << xml_escape(example.id) << " ("
     << method_name(phi.method()) << ")</text>\n";
  for (int i = 0; i < m; ++i) {
    const int cx = kLeft + i * kCellW + kCellW / 2;
    os << "<text transform=\"translate(" << cx << "," << kTop - 6
       << ") rotate(-60)\">" << xml_escape(example.context[i]) << "</text>\n";
  }
  for (int j = 0; j < n; ++j) {
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + j * kCellH + kCellH / 2 + 4
       << "\" text-anchor=\"end\">" << xml_escape(example.response[j]) << "</text>\n";
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) {
      const double v = phi(i, j);
      const double t = max_abs > 0.0 ? v / max_abs : 0.0;
      os << "<rect x=\"" << kLeft + i * kCellW << "\" y=\"" << kTop + j * kCellH
         << "\" width=\"" << kCellW << "\" height=\"" << kCellH << "\" fill=\""
         << diverging_color(t) << "\" stroke=\"#dddddd\"><title>"
         << xml_escape(example.context[i]) << " -> " << xml_escape(example.response[j])
         << ": " << format_double(v) << "</title></rect>\n";
    }
  }
  const int note_y = kTop + n * kCellH + 24;
  os << "<text x=\"8\" y=\"" << note_y << "\">colors scaled to [-" << fixed(max_abs, 4)
     << ", +" << fixed(max_abs, 4)
     << "] (max |phi| of this matrix, display only); red = positive, blue = negative</text>\n";
  os << "<text x=\"8\" y=\"" << note_y + 18
     << "\">horizontal: input segments; vertical: response segments</text>\n";
  os << "</svg>\n";
  return os.str();
}

nlohmann::ordered_json explanation_json(const ExplanationMatrix& phi,
                                        const Example& example) {
  nlohmann::ordered_json j;
  j["example_id"] = example.id;
  j["method"] = std::string(method_name(phi.method()));
  j["samples"] = phi.sample_count();
  j["seed"] = phi.seed();
  j["context"] = example.context.segments();
  j["response"] = example.response.segments();
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    std::vector<double> row(phi.cols());
    for (std::size_t j2 = 0; j2 < phi.cols(); ++j2) row[j2] = phi(i, j2);
    rows.push_back(row);
  }
  j["phi"] = rows;
  return j;
}

std::string report_csv(const CorpusReport& report, const Stamp& stamp) {
  std::string out = stamp_comment(stamp);
  out += "example_id,method,metric,ratio,value\n";
  const auto row = [&](std::string_view id, std::string_view method, Metric metric,
                       double ratio, double value) {
    out += csv_field(id) + "," + csv_field(method) + "," +
           std::string(metric_name(metric)) + "," + format_double(ratio) + "," +
           format_double(value) + "\n";
  };
  for (const auto& r : report.records) row(r.example_id, r.method, r.metric, r.ratio, r.value);
  for (const auto& a : report.aggregates) {
    row("corpus:token_mean", a.method, a.metric, a.ratio, a.token_mean);
  }
  for (const auto& a : report.aggregates) {
    row("corpus:example_mean", a.method, a.metric, a.ratio, a.example_mean);
  }
  return out;
}

std::string report_json(const CorpusReport& report, const Stamp& stamp) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["config"] = stamp.config;
  j["inputs_sha256"] = stamp.inputs_sha256;
  j["seed"] = report.seed;
  j["clamped_tokens"] = report.clamped_tokens;
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    records.push_back({{"example_id", r.example_id},
                       {"method", r.method},
                       {"metric", std::string(metric_name(r.metric))},
                       {"ratio", r.ratio},
                       {"tokens", r.tokens},
                       {"clamped", r.clamped},
                       {"log_sums", r.log_sums},
                       {"value", r.value}});
  }
  j["records"] = records;
  auto aggregates = nlohmann::ordered_json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"method", a.method},
                          {"metric", std::string(metric_name(a.metric))},
                          {"ratio", a.ratio},
                          {"examples", a.examples},
                          {"tokens", a.tokens},
                          {"log_sum", a.log_sum},
                          {"token_mean", a.token_mean},
                          {"example_mean", a.example_mean}});
  }
  j["aggregates"] = aggregates;
  auto failures = nlohmann::ordered_json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"example_id", f.example_id}, {"code", f.code}, {"message", f.message}});
  }
  j["failures"] = failures;
  return j.dump(1) + "\n";
}

std::string curves_svg(const CorpusReport& report, Metric metric, const Stamp& stamp) {
  constexpr int kLeft = 70, kTop = 40, kPlotW = 480, kPlotH = 300, kLegendW = 150;
  static const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                   "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& a : report.aggregates) {
    if (a.metric != metric) continue;
    series[a.method].emplace_back(a.ratio, a.token_mean);
    x_lo = std::min(x_lo, a.ratio);
    x_hi = std::max(x_hi, a.ratio);
    y_lo = std::min(y_lo, a.token_mean);
    y_hi = std::max(y_hi, a.token_mean);
  }
  if (series.empty()) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (x_hi - x_lo < 1e-12) x_lo -= 0.05, x_hi += 0.05;
  const double pad = std::max((y_hi - y_lo) * 0.08, 1e-6);
  y_lo -= pad;
  y_hi += pad;
  const auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * kPlotW; };
  const auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * kPlotH; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kPlotW + kLegendW
     << "\" height=\"" << kTop + kPlotH + 60
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << svg_metadata(stamp);
  os << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << metric_name(metric)
     << " (corpus token mean) vs ratio</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
     << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y_lo + (y_hi - y_lo) * t / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(py(y) + 4, 2)
       << "\" text-anchor=\"end\">" << fixed(y, 3) << "</text>\n";
  }
  std::vector<double> ticks;
  for (const auto& [name, points] : series) {
    for (const auto& p : points) ticks.push_back(p.first);
  }
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double x : ticks) {
    os << "<text x=\"" << fixed(px(x), 2) << "\" y=\"" << kTop + kPlotH + 18
       << "\" text-anchor=\"middle\">" << format_double(x) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kTop + kPlotH + 40
     << "\" text-anchor=\"middle\">ratio</text>\n";
  std::size_t k = 0;
  for (auto& [name, points] : series) {
    std::sort(points.begin(), points.end());
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t p = 0; p < points.size(); ++p) {
      os << (p ? " " : "") << fixed(px(points[p].first), 2) << ","
         << fixed(py(points[p].second), 2);
    }
    os << "\"/>\n";
    for (const auto& p : points) {
      os << "<circle cx=\"" << fixed(px(p.first), 2) << "\" cy=\"" << fixed(py(p.second), 2)
         << "\" r=\"3\" fill=\"" << color << "\"><title>" << xml_escape(name) << " "
         << format_double(p.first) << ": " << format_double(p.second)
         << "</title></circle>\n";
    }
    const int ly = kTop + 10 + static_cast<int>(k) * 18;
    os << "<line x1=\"" << kLeft + kPlotW + 12 << "\" y1=\"" << ly << "\" x2=\""
       << kLeft + kPlotW + 32 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + kPlotW + 38 << "\" y=\"" << ly + 4 << "\">"
       << xml_escape(name) << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

std::string oracle_json(const std::vector<OracleCheck>& checks,
                        const OracleSuiteOptions& options) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["options"] = {{"seed", options.seed},
                  {"instances", options.instances},
                  {"convergence_seeds", options.convergence_seeds},
                  {"small_samples", options.small_samples},
                  {"large_samples", options.large_samples}};
  bool all = true;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    arr.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"measured", c.measured},
                   {"threshold", c.threshold},
                   {"detail", c.detail}});
  }
  j["passed"] = all;
  j["checks"] = arr;
  return j.dump(1) + "\n";
}

}  // namespace lerg
