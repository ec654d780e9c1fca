#include "rmshift/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "rmshift/error.hpp"
#include "rmshift/hash.hpp"

namespace rmshift {
namespace {

template <typename T>
T Get(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(ErrorCode::kInvalidConfig, std::string("missing key '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

const Json& At(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(ErrorCode::kInvalidConfig, std::string("missing key '") + key + "'");
  }
  return *it;
}

template <typename T>
void GetIfPresent(const Json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

Json OptionalNumber(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> OptionalNumberFrom(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

Json OptionalString(const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); }

// --- text rendering helpers ---

size_t DisplayWidth(std::string_view s) {
  return static_cast<size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string AlignRows(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], DisplayWidth(row[c]));
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line.append(widths[c] - DisplayWidth(row[c]) + 2, ' ');
    }
    out += line + '\n';
  }
  return out;
}

std::string Percent(double v) { return fmt::format("{:.2f}%", 100.0 * v); }

std::string PercentStat(const Stat& s) {
  return fmt::format("{:.2f} ± {:.2f}%", 100.0 * s.mean, 100.0 * s.std);
}

std::string MetricTitle(const std::string& key) {
  if (key == "accuracy") return "Accuracy";
  if (key == "ece") return "ECE";
  if (key == "mean_confidence") return "Confidence";
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string base = key.substr(0, dot);
    const std::string method = key.substr(dot + 1);
    if (base == "auroc") return "AUROC (" + method + ")";
    if (base == "fpr_at_95") return "FPR@95 (" + method + ")";
  }
  return key;
}

std::pair<std::string, std::string> CategorySides(ShiftCategory c) {
  switch (c) {
    case ShiftCategory::kIdId: return {"ID", "ID"};
    case ShiftCategory::kOodId: return {"OOD", "ID"};
    case ShiftCategory::kIdOod: return {"ID", "OOD"};
    case ShiftCategory::kOodOod: return {"OOD", "OOD"};
  }
  return {"?", "?"};
}

std::string CategoryLabel(ShiftCategory c) {
  auto [p, r] = CategorySides(c);
  return p + "/" + r;
}

std::string FileSafe(std::string key) {
  std::replace(key.begin(), key.end(), '.', '_');
  return key;
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

// --- JSON ---

Json ToJson(const ReliabilityBin& bin) {
  Json j;
  j["index"] = bin.index;
  j["lower"] = bin.lower;
  j["upper"] = bin.upper;
  j["count"] = bin.count;
  j["accuracy"] = OptionalNumber(bin.accuracy);
  j["mean_confidence"] = OptionalNumber(bin.mean_confidence);
  return j;
}

Json ToJson(const EvalResult& result) {
  Json j;
  j["n"] = result.n;
  j["accuracy"] = result.accuracy;
  j["ece"] = result.ece;
  j["mean_confidence"] = result.mean_confidence;
  j["bins"] = Json::array();
  for (const auto& bin : result.bins) j["bins"].push_back(ToJson(bin));
  return j;
}

EvalResult EvalResultFromJson(const Json& j) {
  EvalResult r;
  r.n = Get<size_t>(j, "n");
  r.accuracy = Get<double>(j, "accuracy");
  r.ece = Get<double>(j, "ece");
  r.mean_confidence = Get<double>(j, "mean_confidence");
  for (const auto& b : At(j, "bins")) {
    ReliabilityBin bin;
    bin.index = Get<int>(b, "index");
    bin.lower = Get<double>(b, "lower");
    bin.upper = Get<double>(b, "upper");
    bin.count = Get<size_t>(b, "count");
    bin.accuracy = OptionalNumberFrom(b, "accuracy");
    bin.mean_confidence = OptionalNumberFrom(b, "mean_confidence");
    r.bins.push_back(bin);
  }
  return r;
}

Json ToJson(const DetectionResult& result) {
  Json j;
  j["method"] = std::string(OodMethodName(result.method));
  j["auroc"] = result.auroc;
  j["fpr_at_95"] = result.fpr_at_95;
  j["n_id"] = result.n_id;
  j["n_ood"] = result.n_ood;
  return j;
}

DetectionResult DetectionResultFromJson(const Json& j) {
  DetectionResult r;
  r.method = ParseOodMethod(Get<std::string>(j, "method"));
  r.auroc = Get<double>(j, "auroc");
  r.fpr_at_95 = Get<double>(j, "fpr_at_95");
  r.n_id = Get<size_t>(j, "n_id");
  r.n_ood = Get<size_t>(j, "n_ood");
  return r;
}

Json ToJson(const Stat& stat) {
  Json j;
  j["mean"] = stat.mean;
  j["std"] = stat.std;
  j["min"] = stat.min;
  j["max"] = stat.max;
  return j;
}

Stat StatFromJson(const Json& j) {
  return {Get<double>(j, "mean"), Get<double>(j, "std"), Get<double>(j, "min"),
          Get<double>(j, "max")};
}

Json ToJson(const BackendConfig& config) {
  Json j;
  j["kind"] = std::string(BackendKindName(config.kind));
  j["location"] = config.location;
  j["overlap_weight"] = config.overlap_weight;
  j["oov_weight"] = config.oov_weight;
  j["noise_weight"] = config.noise_weight;
  j["lexicon"] = OptionalString(config.lexicon_path);
  j["http_attempts"] = config.http_attempts;
  j["http_backoff_ms"] = config.http_backoff_ms;
  j["http_timeout_ms"] = config.http_timeout_ms;
  return j;
}

BackendConfig BackendConfigFromJson(const Json& j) {
  BackendConfig c;
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "backend must be an object");
  std::string kind(BackendKindName(c.kind));
  GetIfPresent(j, "kind", kind);
  c.kind = ParseBackendKind(kind);
  GetIfPresent(j, "location", c.location);
  GetIfPresent(j, "overlap_weight", c.overlap_weight);
  GetIfPresent(j, "oov_weight", c.oov_weight);
  GetIfPresent(j, "noise_weight", c.noise_weight);
  std::string lexicon;
  GetIfPresent(j, "lexicon", lexicon);
  if (!lexicon.empty()) c.lexicon_path = lexicon;
  GetIfPresent(j, "http_attempts", c.http_attempts);
  GetIfPresent(j, "http_backoff_ms", c.http_backoff_ms);
  GetIfPresent(j, "http_timeout_ms", c.http_timeout_ms);
  return c;
}

Json ToJson(const SweepConfig& config) {
  Json j;
  j["probabilities"] = config.probabilities;
  j["targets"] = Json::array();
  for (auto t : config.targets) j["targets"].push_back(std::string(ShiftTargetName(t)));
  j["trials"] = config.trials;
  j["base_seed"] = config.base_seed;
  j["bins"] = config.bins;
  j["methods"] = Json::array();
  for (auto m : config.methods) j["methods"].push_back(std::string(OodMethodName(m)));
  j["wordlist"] = OptionalString(config.wordlist_path);
  j["workers"] = config.workers;
  j["parallelism"] = config.parallelism;
  j["backend"] = ToJson(config.backend);
  return j;
}

SweepConfig SweepConfigFromJson(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "sweep config must be an object");
  SweepConfig c;
  GetIfPresent(j, "probabilities", c.probabilities);
  if (auto it = j.find("targets"); it != j.end() && !it->is_null()) {
    c.targets.clear();
    for (const auto& t : *it) c.targets.push_back(ParseShiftTarget(t.get<std::string>()));
  }
  GetIfPresent(j, "trials", c.trials);
  GetIfPresent(j, "base_seed", c.base_seed);
  GetIfPresent(j, "bins", c.bins);
  if (auto it = j.find("methods"); it != j.end() && !it->is_null()) {
    c.methods.clear();
    for (const auto& m : *it) c.methods.push_back(ParseOodMethod(m.get<std::string>()));
  }
  std::string wordlist;
  GetIfPresent(j, "wordlist", wordlist);
  if (!wordlist.empty()) c.wordlist_path = wordlist;
  GetIfPresent(j, "workers", c.workers);
  GetIfPresent(j, "parallelism", c.parallelism);
  if (auto it = j.find("backend"); it != j.end() && !it->is_null()) {
    c.backend = BackendConfigFromJson(*it);
  }
  return c;
}

SweepConfig LoadSweepConfig(const std::filesystem::path& path) {
  SweepConfig config = SweepConfigFromJson(LoadJsonFile(path));
  ValidateSweepConfig(config);
  return config;
}

Json ToJson(const SweepReport& report) {
  Json j;
  j["kind"] = "sweep";
  j["timestamp"] = report.timestamp;
  Json prov;
  prov["dataset_fingerprint"] = report.dataset_fingerprint;
  prov["n_records"] = report.n_records;
  prov["std_convention"] = report.std_convention;
  prov["config"] = ToJson(report.config);
  j["provenance"] = std::move(prov);
  j["reference"] = ToJson(report.reference);
  j["cells"] = Json::array();
  for (const auto& cell : report.cells) {
    Json c;
    c["target"] = std::string(ShiftTargetName(cell.target));
    c["probability"] = cell.probability;
    c["summary"] = Json::object();
    for (const auto& [key, stat] : cell.summary) c["summary"][key] = ToJson(stat);
    c["trials"] = Json::array();
    for (const auto& trial : cell.trials) {
      Json t;
      t["trial"] = trial.trial;
      t["seed"] = trial.seed;
      t["values"] = trial.values;
      c["trials"].push_back(std::move(t));
    }
    j["cells"].push_back(std::move(c));
  }
  return j;
}

SweepReport SweepReportFromJson(const Json& j) {
  if (Get<std::string>(j, "kind") != "sweep") {
    throw Error(ErrorCode::kInvalidConfig, "not a sweep report");
  }
  SweepReport r;
  GetIfPresent(j, "timestamp", r.timestamp);
  const Json& prov = At(j, "provenance");
  r.dataset_fingerprint = Get<std::string>(prov, "dataset_fingerprint");
  r.n_records = Get<size_t>(prov, "n_records");
  r.std_convention = Get<std::string>(prov, "std_convention");
  r.config = SweepConfigFromJson(At(prov, "config"));
  r.reference = EvalResultFromJson(At(j, "reference"));
  for (const auto& c : At(j, "cells")) {
    SweepCell cell;
    cell.target = ParseShiftTarget(Get<std::string>(c, "target"));
    cell.probability = Get<double>(c, "probability");
    for (const auto& [key, stat] : At(c, "summary").items()) {
      cell.summary[key] = StatFromJson(stat);
    }
    for (const auto& t : At(c, "trials")) {
      TrialResult trial;
      trial.trial = Get<int>(t, "trial");
      trial.seed = Get<uint64_t>(t, "seed");
      for (const auto& [key, value] : At(t, "values").items()) {
        trial.values[key] = value.get<double>();
      }
      cell.trials.push_back(std::move(trial));
    }
    r.cells.push_back(std::move(cell));
  }
  return r;
}

Json ToJson(const GridReport& report) {
  Json j;
  j["kind"] = "grid";
  j["timestamp"] = report.timestamp;
  Json opts;
  opts["id_language"] = report.options.id_language;
  opts["bins"] = report.options.bins;
  opts["methods"] = Json::array();
  for (auto m : report.options.methods) opts["methods"].push_back(std::string(OodMethodName(m)));
  opts["parallelism"] = report.options.parallelism;
  j["options"] = std::move(opts);
  j["std_convention"] = report.std_convention;
  j["cells"] = Json::array();
  for (const auto& cell : report.cells) {
    Json c;
    c["prompt_language"] = cell.languages.prompt;
    c["response_language"] = cell.languages.response;
    c["category"] = std::string(ShiftCategoryName(cell.category));
    c["eval"] = ToJson(cell.eval);
    c["detection"] = Json::object();
    for (const auto& [method, det] : cell.detection) c["detection"][method] = ToJson(det);
    j["cells"].push_back(std::move(c));
  }
  j["summary"] = Json::array();
  for (const auto& row : report.summary) {
    Json s;
    s["category"] = std::string(ShiftCategoryName(row.category));
    s["cells"] = row.cells;
    s["metrics"] = Json::object();
    for (const auto& [key, stat] : row.metrics) s["metrics"][key] = ToJson(stat);
    j["summary"].push_back(std::move(s));
  }
  return j;
}

GridReport GridReportFromJson(const Json& j) {
  if (Get<std::string>(j, "kind") != "grid") {
    throw Error(ErrorCode::kInvalidConfig, "not a grid report");
  }
  GridReport r;
  GetIfPresent(j, "timestamp", r.timestamp);
  const Json& opts = At(j, "options");
  r.options.id_language = Get<std::string>(opts, "id_language");
  r.options.bins = Get<int>(opts, "bins");
  r.options.methods.clear();
  for (const auto& m : At(opts, "methods")) {
    r.options.methods.push_back(ParseOodMethod(m.get<std::string>()));
  }
  r.options.parallelism = Get<size_t>(opts, "parallelism");
  r.std_convention = Get<std::string>(j, "std_convention");
  for (const auto& c : At(j, "cells")) {
    GridCell cell;
    cell.languages = {Get<std::string>(c, "prompt_language"),
                      Get<std::string>(c, "response_language")};
    cell.category = ParseShiftCategory(Get<std::string>(c, "category"));
    cell.eval = EvalResultFromJson(At(c, "eval"));
    for (const auto& [method, det] : At(c, "detection").items()) {
      cell.detection[method] = DetectionResultFromJson(det);
    }
    r.cells.push_back(std::move(cell));
  }
  for (const auto& s : At(j, "summary")) {
    GridSummaryRow row;
    row.category = ParseShiftCategory(Get<std::string>(s, "category"));
    row.cells = Get<size_t>(s, "cells");
    for (const auto& [key, stat] : At(s, "metrics").items()) {
      row.metrics[key] = StatFromJson(stat);
    }
    r.summary.push_back(std::move(row));
  }
  return r;
}

std::string ReproducibleContent(const SweepReport& report) {
  Json j = ToJson(report);
  j.erase("timestamp");
  return j.dump(2);
}

std::string ReportDigest(const SweepReport& report) {
  return HexDigest(Fnv1a(ReproducibleContent(report)));
}

ReportFormat ParseReportFormat(std::string_view name) {
  if (name == "structured" || name == "json") return ReportFormat::kStructured;
  if (name == "table") return ReportFormat::kTable;
  if (name == "plot") return ReportFormat::kPlot;
  throw Error(ErrorCode::kInvalidConfig, "unknown report format '" + std::string(name) + "'");
}

// --- sweep rendering ---

std::vector<std::string> SweepMetricKeys(const SweepReport& report) {
  std::vector<std::string> keys = {"mean_confidence", "accuracy", "ece"};
  for (auto m : report.config.methods) {
    keys.push_back(AurocKey(m));
    keys.push_back(FprKey(m));
  }
  return keys;
}

std::string RenderSweepTable(const SweepReport& report) {
  std::string out = fmt::format(
      "Perturbation sweep: {} records, {} trial(s) per cell, mean ± {} std in percent\n"
      "Unshifted reference: accuracy {}, ECE {}, confidence {}\n",
      report.n_records, report.config.trials, report.std_convention,
      Percent(report.reference.accuracy), Percent(report.reference.ece),
      Percent(report.reference.mean_confidence));
  for (const auto& key : SweepMetricKeys(report)) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"p"};
    for (auto t : report.config.targets) header.emplace_back(ShiftTargetName(t));
    rows.push_back(std::move(header));
    for (double p : report.config.probabilities) {
      std::vector<std::string> row = {fmt::format("{:.2f}", p)};
      for (auto t : report.config.targets) {
        const SweepCell* cell = report.Find(t, p);
        auto it = cell ? cell->summary.find(key) : decltype(cell->summary.end()){};
        row.push_back(cell && it != cell->summary.end() ? PercentStat(it->second) : "-");
      }
      rows.push_back(std::move(row));
    }
    out += "\n" + MetricTitle(key) + "\n" + AlignRows(rows);
  }
  return out;
}

std::string RenderSweepCsv(const SweepReport& report) {
  std::string out = "target,probability,metric,mean,std,min,max,trials\n";
  for (const auto& cell : report.cells) {
    for (const auto& [key, s] : cell.summary) {
      out += fmt::format("{},{},{},{},{},{},{},{}\n", ShiftTargetName(cell.target),
                         cell.probability, key, s.mean, s.std, s.min, s.max, cell.trials.size());
    }
  }
  return out;
}

std::string RenderSweepPlot(const SweepReport& report, const std::string& metric) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 70, kRight = 140, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double x_lo = report.config.probabilities.front();
  double x_hi = report.config.probabilities.back();
  if (x_hi <= x_lo) { x_lo -= 0.5; x_hi += 0.5; }
  double y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& cell : report.cells) {
    auto it = cell.summary.find(metric);
    if (it == cell.summary.end()) continue;
    y_lo = std::min(y_lo, it->second.mean - it->second.std);
    y_hi = std::max(y_hi, it->second.mean + it->second.std);
  }
  if (!std::isfinite(y_lo)) {
    throw Error(ErrorCode::kInvalidConfig, "metric '" + metric + "' is not in the report");
  }
  if (y_hi - y_lo < 1e-9) { y_lo -= 0.05; y_hi += 0.05; }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<title>{2} vs perturbation probability</title>\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{3:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{2}</text>\n",
      kWidth, kHeight, MetricTitle(metric), kLeft + plot_w / 2);
  svg += fmt::format(
      "<g class=\"axes\" stroke=\"black\">\n"
      "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\"/>\n"
      "<line x1=\"{0:.2f}\" y1=\"{3:.2f}\" x2=\"{0:.2f}\" y2=\"{1:.2f}\"/>\n</g>\n",
      kLeft, kTop + plot_h, kLeft + plot_w, kTop);
  for (double p : report.config.probabilities) {
    svg += fmt::format(
        "<text class=\"xtick\" x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.2f}</text>\n",
        sx(p), kTop + plot_h + 16, p);
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = y_lo + (y_hi - y_lo) * k / 4.0;
    svg += fmt::format(
        "<text class=\"ytick\" x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3f}</text>\n",
        kLeft - 6, sy(y) + 4, y);
  }
  svg += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">perturbation probability</text>\n",
      kLeft + plot_w / 2, kHeight - 10);

  size_t series = 0;
  for (auto target : report.config.targets) {
    const char* color = kColors[series % std::size(kColors)];
    std::string points;
    std::string marks;
    for (double p : report.config.probabilities) {
      const SweepCell* cell = report.Find(target, p);
      if (!cell) continue;
      auto it = cell->summary.find(metric);
      if (it == cell->summary.end()) continue;
      const Stat& s = it->second;
      points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", sx(p), sy(s.mean));
      marks += fmt::format(
          "<line class=\"errorbar\" x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\"/>\n"
          "<circle cx=\"{0:.2f}\" cy=\"{3:.2f}\" r=\"3\"/>\n",
          sx(p), sy(s.mean - s.std), sy(s.mean + s.std), sy(s.mean));
    }
    svg += fmt::format(
        "<g class=\"series\" data-target=\"{0}\" stroke=\"{1}\" fill=\"{1}\">\n"
        "<polyline fill=\"none\" stroke-width=\"2\" points=\"{2}\"/>\n{3}</g>\n",
        ShiftTargetName(target), color, points, marks);
    const double ly = kTop + 10 + 18.0 * series;
    svg += fmt::format(
        "<g class=\"legend\"><line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" "
        "stroke=\"{3}\" stroke-width=\"2\"/><text x=\"{4:.2f}\" y=\"{5:.2f}\">{6}</text></g>\n",
        kLeft + plot_w + 15, ly, kLeft + plot_w + 40, color, kLeft + plot_w + 46, ly + 4,
        ShiftTargetName(target));
    ++series;
  }
  svg += "</svg>\n";
  return svg;
}

// --- grid rendering ---

std::string RenderGridTable(const GridReport& report) {
  std::string out;
  {
    std::vector<std::vector<std::string>> rows = {
        {"Prompt", "Response", "Shift", "N", "Accuracy", "ECE"}};
    for (const auto& cell : report.cells) {
      rows.push_back({cell.languages.prompt, cell.languages.response,
                      CategoryLabel(cell.category), std::to_string(cell.eval.n),
                      Percent(cell.eval.accuracy), Percent(cell.eval.ece)});
    }
    out += fmt::format("Accuracy and calibration by language (ID language: {})\n",
                       report.options.id_language);
    out += AlignRows(rows);
  }
  {
    std::vector<std::vector<std::string>> rows = {
        {"Prompt", "Response", "Cells", "Accuracy", "ECE"}};
    for (const auto& row : report.summary) {
      auto [p, r] = CategorySides(row.category);
      rows.push_back({p, r, std::to_string(row.cells), PercentStat(row.metrics.at("accuracy")),
                      PercentStat(row.metrics.at("ece"))});
    }
    out += fmt::format("\nAccuracy and calibration by shift (mean ± {} std over cells)\n",
                       report.std_convention);
    out += AlignRows(rows);
  }
  for (OodMethod method : report.options.methods) {
    const std::string name(OodMethodName(method));
    std::vector<std::vector<std::string>> rows = {{"Prompt", "Response", "AUROC", "FPR@95"}};
    for (const auto& cell : report.cells) {
      auto it = cell.detection.find(name);
      if (it == cell.detection.end()) continue;
      rows.push_back({cell.languages.prompt, cell.languages.response,
                      Percent(it->second.auroc), Percent(it->second.fpr_at_95)});
    }
    if (rows.size() == 1) continue;
    out += fmt::format("\nOOD detection by language ({})\n", name);
    out += AlignRows(rows);

    std::vector<std::vector<std::string>> summary = {
        {"Prompt", "Response", "Cells", "AUROC", "FPR@95"}};
    for (const auto& row : report.summary) {
      auto a = row.metrics.find(AurocKey(method));
      auto f = row.metrics.find(FprKey(method));
      if (a == row.metrics.end() || f == row.metrics.end()) continue;
      auto [p, r] = CategorySides(row.category);
      summary.push_back({p, r, std::to_string(row.cells), PercentStat(a->second),
                         PercentStat(f->second)});
    }
    out += fmt::format("\nOOD detection by shift ({}, mean ± {} std over cells)\n", name,
                       report.std_convention);
    out += AlignRows(summary);
  }
  return out;
}

std::string RenderGridCsv(const GridReport& report) {
  std::string out = "prompt_language,response_language,category,n,accuracy,ece,mean_confidence";
  for (auto m : report.options.methods) {
    out += fmt::format(",auroc_{0},fpr_at_95_{0}", OodMethodName(m));
  }
  out += '\n';
  for (const auto& cell : report.cells) {
    out += fmt::format("{},{},{},{},{},{},{}", cell.languages.prompt, cell.languages.response,
                       ShiftCategoryName(cell.category), cell.eval.n, cell.eval.accuracy,
                       cell.eval.ece, cell.eval.mean_confidence);
    for (auto m : report.options.methods) {
      auto it = cell.detection.find(std::string(OodMethodName(m)));
      if (it == cell.detection.end()) {
        out += ",,";
      } else {
        out += fmt::format(",{},{}", it->second.auroc, it->second.fpr_at_95);
      }
    }
    out += '\n';
  }
  return out;
}

// --- files ---

Json LoadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kInvalidConfig, "'" + path.string() + "' is not valid JSON");
  }
  return j;
}

void WriteTextFile(const std::filesystem::path& path, std::string_view content) {
  auto out = OpenOut(path);
  out << content;
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path.string() + "' failed");
}

std::vector<std::filesystem::path> EmitReport(const SweepReport& report, ReportFormat format,
                                              const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  switch (format) {
    case ReportFormat::kStructured:
      written.push_back(out_dir / "sweep_report.json");
      WriteTextFile(written.back(), ToJson(report).dump(2) + "\n");
      break;
    case ReportFormat::kTable:
      written.push_back(out_dir / "sweep_table.txt");
      WriteTextFile(written.back(), RenderSweepTable(report));
      written.push_back(out_dir / "sweep_table.csv");
      WriteTextFile(written.back(), RenderSweepCsv(report));
      break;
    case ReportFormat::kPlot:
      for (const auto& key : SweepMetricKeys(report)) {
        written.push_back(out_dir / ("sweep_" + FileSafe(key) + ".svg"));
        WriteTextFile(written.back(), RenderSweepPlot(report, key));
      }
      break;
  }
  return written;
}

std::vector<std::filesystem::path> EmitReport(const GridReport& report, ReportFormat format,
                                              const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  switch (format) {
    case ReportFormat::kStructured:
      written.push_back(out_dir / "grid_report.json");
      WriteTextFile(written.back(), ToJson(report).dump(2) + "\n");
      break;
    case ReportFormat::kTable:
      written.push_back(out_dir / "grid_table.txt");
      WriteTextFile(written.back(), RenderGridTable(report));
      written.push_back(out_dir / "grid_table.csv");
      WriteTextFile(written.back(), RenderGridCsv(report));
      break;
    case ReportFormat::kPlot:
      throw Error(ErrorCode::kInvalidConfig,
                  "plots are drawn for sweep reports; use the table format for grids");
  }
  return written;
}

}  // namespace rmshift
