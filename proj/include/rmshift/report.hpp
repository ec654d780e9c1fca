#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rmshift/runner.hpp"

namespace rmshift {

using Json = nlohmann::ordered_json;

Json ToJson(const ReliabilityBin& bin);
Json ToJson(const EvalResult& result);
Json ToJson(const DetectionResult& result);
Json ToJson(const Stat& stat);
Json ToJson(const BackendConfig& config);
Json ToJson(const SweepConfig& config);
Json ToJson(const SweepReport& report);
Json ToJson(const GridReport& report);

EvalResult EvalResultFromJson(const Json& j);
DetectionResult DetectionResultFromJson(const Json& j);
Stat StatFromJson(const Json& j);
// Missing keys keep their defaults, so config files only need what differs.
BackendConfig BackendConfigFromJson(const Json& j);
SweepConfig SweepConfigFromJson(const Json& j);
SweepReport SweepReportFromJson(const Json& j);
GridReport GridReportFromJson(const Json& j);

// Throws kIoError, kInvalidConfig (unparseable or invalid).
SweepConfig LoadSweepConfig(const std::filesystem::path& path);

// Everything in the structured report except the timestamp. Two runs of the
// same config on the same dataset produce byte-identical output here.
std::string ReproducibleContent(const SweepReport& report);
std::string ReportDigest(const SweepReport& report);

enum class ReportFormat { kStructured, kTable, kPlot };
ReportFormat ParseReportFormat(std::string_view name);

// Aligned text tables: one block per metric, rows = probability,
// columns = shift target, cells = "mean ± std" in percent.
std::string RenderSweepTable(const SweepReport& report);
// Long format: target,probability,metric,mean,std,min,max,trials.
std::string RenderSweepCsv(const SweepReport& report);
// SVG line chart of one metric against perturbation probability, one series
// per target, error bars of one standard deviation.
std::string RenderSweepPlot(const SweepReport& report, const std::string& metric);
// Metric keys present in the report, in display order.
std::vector<std::string> SweepMetricKeys(const SweepReport& report);

// Per-language and per-category tables for accuracy/ECE and detection.
std::string RenderGridTable(const GridReport& report);
std::string RenderGridCsv(const GridReport& report);

// Writes the files for `format` under out_dir and returns their paths.
// Structured: <kind>_report.json. Table: <kind>_table.txt and .csv.
// Plot (sweep only): sweep_<metric>.svg per metric.
std::vector<std::filesystem::path> EmitReport(const SweepReport& report, ReportFormat format,
                                              const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> EmitReport(const GridReport& report, ReportFormat format,
                                              const std::filesystem::path& out_dir);

Json LoadJsonFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, std::string_view content);

}  // namespace rmshift
