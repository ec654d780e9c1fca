#include "rmshift/report.hpp"

#include <cstdlib>
#include <regex>

#include <gtest/gtest.h>

#include "rmshift/error.hpp"
#include "test_util.hpp"

namespace rmshift {
namespace {

using testing::MakeCorpus;
using testing::ReadFile;
using testing::TempDir;

const std::filesystem::path kGolden = RMSHIFT_GOLDEN_DIR;

SweepReport SmallSweep() {
  SweepConfig c;
  c.probabilities = {0.0, 0.5, 1.0};
  c.trials = 2;
  c.methods = {OodMethod::kEnergy, OodMethod::kMsp};
  SweepOptions o;
  o.timestamp = "2026-03-04T05:06:07Z";
  return RunSweep(c, MakeCorpus(40, 21), o);
}

// Hand-written 2x2 grid, so the golden file does not depend on any scorer.
GridReport TwoByTwo() {
  GridReport r;
  r.timestamp = "2026-03-04T05:06:07Z";
  auto cell = [](std::string p, std::string q, ShiftCategory c, double acc, double ece,
                 std::optional<std::pair<double, double>> det) {
    GridCell g;
    g.languages = {std::move(p), std::move(q)};
    g.category = c;
    g.eval.n = 500;
    g.eval.accuracy = acc;
    g.eval.ece = ece;
    g.eval.mean_confidence = acc + ece;
    if (det) g.detection["energy"] = {OodMethod::kEnergy, det->first, det->second, 500, 500};
    return g;
  };
  r.cells = {cell("en", "en", ShiftCategory::kIdId, 0.7112, 0.0421, std::nullopt),
             cell("en", "de", ShiftCategory::kIdOod, 0.6552, 0.0833, {{0.7426, 0.6120}}),
             cell("de", "en", ShiftCategory::kOodId, 0.6917, 0.0512, {{0.5531, 0.9040}}),
             cell("de", "de", ShiftCategory::kOodOod, 0.6301, 0.1040, {{0.7919, 0.5560}})};
  auto row = [](ShiftCategory c, const GridCell& g) {
    GridSummaryRow s;
    s.category = c;
    s.cells = 1;
    s.metrics["accuracy"] = {g.eval.accuracy, 0, g.eval.accuracy, g.eval.accuracy};
    s.metrics["ece"] = {g.eval.ece, 0, g.eval.ece, g.eval.ece};
    if (!g.detection.empty()) {
      const auto& d = g.detection.at("energy");
      s.metrics["auroc.energy"] = {d.auroc, 0, d.auroc, d.auroc};
      s.metrics["fpr_at_95.energy"] = {d.fpr_at_95, 0, d.fpr_at_95, d.fpr_at_95};
    }
    return s;
  };
  r.summary = {row(ShiftCategory::kIdId, r.cells[0]), row(ShiftCategory::kOodId, r.cells[2]),
               row(ShiftCategory::kIdOod, r.cells[1]), row(ShiftCategory::kOodOod, r.cells[3])};
  return r;
}

// Set RMSHIFT_UPDATE_GOLDEN=1 to rewrite the golden files after an intended change.
void ExpectGolden(const std::string& name, const std::string& actual) {
  const auto path = kGolden / name;
  if (std::getenv("RMSHIFT_UPDATE_GOLDEN")) WriteTextFile(path, actual);
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(actual, ReadFile(path));
}

TEST(SweepReportJson, RoundTrips) {
  const SweepReport r = SmallSweep();
  const Json j = ToJson(r);
  EXPECT_EQ(j["kind"], "sweep");
  EXPECT_EQ(j["provenance"]["std_convention"], "population");
  EXPECT_EQ(SweepReportFromJson(j), r);
  EXPECT_EQ(SweepReportFromJson(Json::parse(j.dump())), r);
}

TEST(SweepReportJson, ReproducibleContentIgnoresTimestamp) {
  SweepReport a = SmallSweep();
  SweepReport b = a;
  b.timestamp = "another time";
  EXPECT_EQ(ReproducibleContent(a), ReproducibleContent(b));
  EXPECT_EQ(ReportDigest(a), ReportDigest(b));
  EXPECT_EQ(ReproducibleContent(a).find("2026-03-04"), std::string::npos);
  b.cells[1].summary["accuracy"].mean += 1e-9;
  EXPECT_NE(ReportDigest(a), ReportDigest(b));
}

TEST(GridReportJson, RoundTrips) {
  const GridReport r = TwoByTwo();
  const Json j = ToJson(r);
  EXPECT_EQ(j["kind"], "grid");
  EXPECT_EQ(GridReportFromJson(Json::parse(j.dump())), r);
}

TEST(SweepConfigJson, MissingKeysKeepDefaults) {
  const SweepConfig c = SweepConfigFromJson(Json::parse(R"({"trials": 4})"));
  EXPECT_EQ(c.trials, 4);
  EXPECT_EQ(c.probabilities, DefaultProbabilityGrid());
  EXPECT_EQ(c.targets.size(), 3u);
  EXPECT_EQ(c.bins, 10);
  SweepConfig full;
  full.targets = {ShiftTarget::kResponse};
  full.backend.kind = BackendKind::kRemoteHttp;
  full.backend.location = "http://h:1";
  full.wordlist_path = "words.txt";
  EXPECT_EQ(SweepConfigFromJson(ToJson(full)), full);
}

TEST(LoadSweepConfig, Errors) {
  TempDir dir;
  testing::WriteFile(dir / "bad.json", "{not json");
  testing::WriteFile(dir / "invalid.json", R"({"probabilities": [0.5, 0.1]})");
  auto code = [](const std::filesystem::path& p) {
    try {
      LoadSweepConfig(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kEmptySet;
  };
  EXPECT_EQ(code(dir / "missing.json"), ErrorCode::kIoError);
  EXPECT_EQ(code(dir / "bad.json"), ErrorCode::kInvalidConfig);
  EXPECT_EQ(code(dir / "invalid.json"), ErrorCode::kInvalidConfig);
}

TEST(RenderSweepTable, OneBlockPerMetric) {
  const SweepReport r = SmallSweep();
  const std::string table = RenderSweepTable(r);
  for (const char* title : {"\nConfidence\n", "\nAccuracy\n", "\nECE\n", "\nAUROC (energy)\n",
                            "\nFPR@95 (energy)\n", "\nAUROC (msp)\n", "\nFPR@95 (msp)\n"}) {
    EXPECT_NE(table.find(title), std::string::npos) << title;
  }
  EXPECT_EQ(SweepMetricKeys(r).size(), 7u);
  EXPECT_NE(table.find("± "), std::string::npos);
  EXPECT_NE(table.find("response"), std::string::npos);
}

TEST(RenderSweepCsv, LongFormat) {
  const SweepReport r = SmallSweep();
  const std::string csv = RenderSweepCsv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "target,probability,metric,mean,std,min,max,trials");
  const size_t rows = std::count(csv.begin(), csv.end(), '\n') - 1;
  EXPECT_EQ(rows, 3u * 3u * 7u);
}

TEST(RenderSweepPlot, SeriesPerTarget) {
  const SweepReport r = SmallSweep();
  const std::string svg = RenderSweepPlot(r, "auroc.energy");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  const std::regex series("class=\"series\"");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), series), std::sregex_iterator()), 3);
  const std::regex bars("class=\"errorbar\"");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), bars), std::sregex_iterator()), 9);
  EXPECT_NE(svg.find("data-target=\"both\""), std::string::npos);
}

TEST(RenderGridTable, MatchesGolden) {
  ExpectGolden("grid_2x2_table.txt", RenderGridTable(TwoByTwo()));
  ExpectGolden("grid_2x2.csv", RenderGridCsv(TwoByTwo()));
}

TEST(EmitReport, WritesFiles) {
  TempDir dir;
  const SweepReport r = SmallSweep();
  EXPECT_EQ(EmitReport(r, ReportFormat::kStructured, dir.path()).size(), 1u);
  EXPECT_EQ(EmitReport(r, ReportFormat::kTable, dir.path()).size(), 2u);
  EXPECT_EQ(EmitReport(r, ReportFormat::kPlot, dir.path()).size(), 7u);
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep_auroc_energy.svg"));
  EXPECT_EQ(SweepReportFromJson(LoadJsonFile(dir / "sweep_report.json")), r);

  const GridReport g = TwoByTwo();
  EXPECT_EQ(EmitReport(g, ReportFormat::kTable, dir.path()).size(), 2u);
  EXPECT_EQ(ReadFile(dir / "grid_table.txt"), RenderGridTable(g));
  EXPECT_THROW(EmitReport(g, ReportFormat::kPlot, dir.path()), Error);
  EXPECT_EQ(ParseReportFormat("json"), ReportFormat::kStructured);
  EXPECT_THROW(ParseReportFormat("pdf"), Error);
}

}  // namespace
}  // namespace rmshift
