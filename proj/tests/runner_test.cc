#include "rmshift/runner.hpp"

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rmshift/error.hpp"
#include "rmshift/report.hpp"
#include "test_util.hpp"

namespace rmshift {
namespace {

using testing::MakeCorpus;
using testing::TempDir;

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIoError;
}

SweepConfig SmallConfig() {
  SweepConfig c;
  c.probabilities = {0.0, 0.25, 1.0};
  c.trials = 3;
  c.base_seed = 99;
  c.methods = {OodMethod::kEnergy, OodMethod::kMsp};
  return c;
}

SweepOptions Fixed() {
  SweepOptions o;
  o.timestamp = "2026-01-01T00:00:00Z";
  return o;
}

TEST(Summarize, PopulationStd) {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  const Stat s = Summarize(v);
  EXPECT_EQ(s.mean, 5.0);
  EXPECT_EQ(s.std, 2.0);
  EXPECT_EQ(s.min, 2.0);
  EXPECT_EQ(s.max, 9.0);
  const std::vector<double> one = {0.3};
  EXPECT_EQ(Summarize(one), (Stat{0.3, 0.0, 0.3, 0.3}));
  const std::vector<double> same = {0.1, 0.1, 0.1};
  EXPECT_EQ(Summarize(same), (Stat{0.1, 0.0, 0.1, 0.1}));
  EXPECT_EQ(CodeOf([] { Summarize({}); }), ErrorCode::kEmptySet);
}

TEST(Summarize, CategoryAggregates) {
  const std::vector<double> accuracy = {65.52, 65.17, 66.39};
  EXPECT_NEAR(Summarize(accuracy).mean, 65.69, 0.005);
  const std::vector<double> auroc = {74.26, 73.19, 71.08};
  EXPECT_NEAR(Summarize(auroc).std, 1.32, 0.005);  // sample std would be 1.62
}

TEST(TrialSeed, IndependentOfTrialCount) {
  EXPECT_EQ(TrialSeed(1, 3), TrialSeed(1, 3));
  EXPECT_NE(TrialSeed(1, 3), TrialSeed(1, 4));
  EXPECT_NE(TrialSeed(1, 3), TrialSeed(2, 3));
}

TEST(ValidateSweepConfig, RejectsBadConfigs) {
  auto with = [](auto edit) {
    SweepConfig c;
    edit(c);
    return CodeOf([&] { ValidateSweepConfig(c); });
  };
  EXPECT_EQ(with([](SweepConfig& c) { c.probabilities = {0.5, 0.25}; }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(with([](SweepConfig& c) { c.probabilities = {0.5, 0.5}; }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(with([](SweepConfig& c) { c.probabilities = {1.5}; }), ErrorCode::kInvalidProbability);
  EXPECT_EQ(with([](SweepConfig& c) { c.trials = 0; }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(with([](SweepConfig& c) { c.targets.clear(); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(with([](SweepConfig& c) { c.methods.clear(); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(with([](SweepConfig& c) { c.bins = 0; }), ErrorCode::kInvalidBinCount);
  EXPECT_NO_THROW(ValidateSweepConfig(SweepConfig{}));
}

TEST(RunSweep, ZeroProbabilityReproducesReference) {
  const PreferenceDataset d = MakeCorpus(80, 1);
  const SweepReport r = RunSweep(SmallConfig(), d, Fixed());
  for (ShiftTarget target : {ShiftTarget::kPrompt, ShiftTarget::kResponse, ShiftTarget::kBoth}) {
    const SweepCell* cell = r.Find(target, 0.0);
    ASSERT_NE(cell, nullptr);
    EXPECT_EQ(cell->summary.at("accuracy"), (Stat{r.reference.accuracy, 0, r.reference.accuracy,
                                                  r.reference.accuracy}));
    EXPECT_EQ(cell->summary.at("ece").mean, r.reference.ece);
    EXPECT_EQ(cell->summary.at("auroc.energy").mean, 0.5);
    EXPECT_EQ(cell->summary.at("auroc.msp").std, 0.0);
  }
  EXPECT_EQ(r.Find(ShiftTarget::kBoth, 0.5), nullptr);
}

TEST(RunSweep, SingleTrialHasZeroSpread) {
  SweepConfig c = SmallConfig();
  c.trials = 1;
  const SweepReport r = RunSweep(c, MakeCorpus(40, 2), Fixed());
  for (const auto& cell : r.cells) {
    for (const auto& [key, stat] : cell.summary) EXPECT_EQ(stat.std, 0.0) << key;
  }
}

TEST(RunSweep, SyntheticShiftRaisesEnergyAuroc) {
  SweepConfig c;
  c.trials = 3;
  c.targets = {ShiftTarget::kResponse};
  const SweepReport r = RunSweep(c, MakeCorpus(300, 3), Fixed());
  double last = 0.0;
  for (double p : c.probabilities) {
    const double auroc = r.Find(ShiftTarget::kResponse, p)->summary.at("auroc.energy").mean;
    EXPECT_GE(auroc, last) << p;
    last = auroc;
  }
  EXPECT_LT(r.Find(ShiftTarget::kResponse, 1.0)->summary.at("accuracy").mean,
            r.Find(ShiftTarget::kResponse, 0.0)->summary.at("accuracy").mean);
}

TEST(RunSweep, DeterministicAndWorkerIndependent) {
  const PreferenceDataset d = MakeCorpus(60, 4);
  SweepConfig c = SmallConfig();
  const SweepReport a = RunSweep(c, d, Fixed());
  const SweepReport b = RunSweep(c, d, Fixed());
  EXPECT_EQ(ReproducibleContent(a), ReproducibleContent(b));
  c.workers = 4;
  c.parallelism = 3;
  SweepOptions other = Fixed();
  other.timestamp = "later";
  const SweepReport p = RunSweep(c, d, other);
  EXPECT_EQ(p.cells, a.cells);
  EXPECT_EQ(p.reference, a.reference);
}

TEST(RunSweep, SummaryMatchesTrials) {
  const SweepReport r = RunSweep(SmallConfig(), MakeCorpus(60, 5), Fixed());
  for (const auto& cell : r.cells) {
    ASSERT_EQ(cell.trials.size(), 3u);
    for (const auto& [key, stat] : cell.summary) {
      std::vector<double> values;
      for (const auto& t : cell.trials) values.push_back(t.values.at(key));
      const auto [mean, std] = oracle::MeanStd(values);
      EXPECT_NEAR(stat.mean, mean, 1e-12) << key;
      EXPECT_NEAR(stat.std, std, 1e-12) << key;
    }
    for (int t = 0; t < 3; ++t) {
      EXPECT_EQ(cell.trials[t].trial, t);
      EXPECT_EQ(cell.trials[t].seed, TrialSeed(99, t));
    }
  }
}

TEST(RunSweep, DifferentSeedsDiffer) {
  const PreferenceDataset d = MakeCorpus(60, 6);
  SweepConfig c = SmallConfig();
  const SweepReport a = RunSweep(c, d, Fixed());
  c.base_seed = 100;
  const SweepReport b = RunSweep(c, d, Fixed());
  EXPECT_NE(a.Find(ShiftTarget::kBoth, 0.25)->trials, b.Find(ShiftTarget::kBoth, 0.25)->trials);
}

TEST(RunSweep, ResumesFromCheckpoint) {
  TempDir dir;
  const PreferenceDataset d = MakeCorpus(50, 7);
  const SweepConfig c = SmallConfig();
  const SweepReport uninterrupted = RunSweep(c, d, Fixed());

  SweepOptions o = Fixed();
  o.checkpoint_path = dir / "ck.jsonl";
  o.max_new_trials = 10;
  EXPECT_EQ(CodeOf([&] { RunSweep(c, d, o); }), ErrorCode::kPartialRun);
  EXPECT_EQ(CodeOf([&] { RunSweep(c, d, o); }), ErrorCode::kPartialRun);
  // Simulate a crash mid-write.
  std::ofstream(dir / "ck.jsonl", std::ios::app) << "{\"target\":\"prompt\",\"proba";
  o.max_new_trials.reset();
  const SweepReport resumed = RunSweep(c, d, o);
  EXPECT_EQ(ReproducibleContent(resumed), ReproducibleContent(uninterrupted));

  SweepConfig changed = c;
  changed.trials = 4;
  EXPECT_EQ(CodeOf([&] { RunSweep(changed, d, o); }), ErrorCode::kInvalidConfig);
  PreferenceDataset other = d;
  other.records[0].prompt += " extra";
  EXPECT_EQ(CodeOf([&] { RunSweep(c, other, o); }), ErrorCode::kInvalidConfig);
  // Concurrency settings do not invalidate the checkpoint.
  SweepConfig faster = c;
  faster.workers = 3;
  EXPECT_EQ(RunSweep(faster, d, o).cells, uninterrupted.cells);
}

TEST(RunSweep, ScorerFailureAborts) {
  PreferenceDataset d = MakeCorpus(10, 8);
  SweepConfig c = SmallConfig();
  c.backend.kind = BackendKind::kPreScoredFile;
  c.backend.location = "/no/such/scores.jsonl";
  EXPECT_EQ(CodeOf([&] { RunSweep(c, d, Fixed()); }), ErrorCode::kIoError);

  // Pre-scored logits cover only the unshifted text.
  std::vector<ScoredPair> scored;
  for (const auto& p : d.records) scored.emplace_back(p, 1.0, 0.0);
  PreScoredScorer scorer(scored);
  EXPECT_EQ(CodeOf([&] { RunSweep(c, d, scorer, Fixed()); }), ErrorCode::kScoreLookupMiss);
}

// --- language grid ---

std::vector<ScoredPair> Cell(const PreferenceDataset& d, double shift, double scale) {
  std::vector<ScoredPair> out;
  for (size_t i = 0; i < d.size(); ++i) {
    const double margin = scale * (static_cast<double>(i % 7) - 2.0);
    const double a = d.records[i].label == 0 ? margin : 0.0;
    const double b = d.records[i].label == 0 ? 0.0 : margin;
    out.emplace_back(d.records[i], a + shift, b + shift);
  }
  return out;
}

TEST(Categorize, BySide) {
  EXPECT_EQ(Categorize({"en", "en"}, "en"), ShiftCategory::kIdId);
  EXPECT_EQ(Categorize({"de", "en"}, "en"), ShiftCategory::kOodId);
  EXPECT_EQ(Categorize({"en", "de"}, "en"), ShiftCategory::kIdOod);
  EXPECT_EQ(Categorize({"de", "fr"}, "en"), ShiftCategory::kOodOod);
  EXPECT_EQ(ParseShiftCategory("ood/id"), ShiftCategory::kOodId);
}

TEST(RunGridScored, OrdersAndSummarizes) {
  const PreferenceDataset d = MakeCorpus(40, 9);
  std::map<LanguagePair, std::vector<ScoredPair>> cells;
  cells[{"en", "en"}] = Cell(d, 0, 1.0);
  for (const auto& [lang, k] : std::vector<std::pair<std::string, double>>{{"de", 1}, {"ru", 2}, {"zh", 3}}) {
    cells[{lang, "en"}] = Cell(d, -k, 0.9);
    cells[{"en", lang}] = Cell(d, -2 * k, 0.7);
    cells[{lang, lang}] = Cell(d, -3 * k, 0.5);
  }
  const GridReport r = RunGridScored(cells, {});
  ASSERT_EQ(r.cells.size(), 10u);
  EXPECT_EQ(r.cells[0].languages, (LanguagePair{"en", "en"}));
  EXPECT_TRUE(r.cells[0].detection.empty());
  EXPECT_EQ(r.cells[1].languages, (LanguagePair{"en", "de"}));
  EXPECT_EQ(r.cells[2].languages, (LanguagePair{"de", "en"}));
  EXPECT_EQ(r.cells[3].languages, (LanguagePair{"de", "de"}));
  EXPECT_EQ(r.cells[9].languages, (LanguagePair{"zh", "zh"}));

  ASSERT_EQ(r.summary.size(), 4u);
  EXPECT_EQ(r.summary[0].category, ShiftCategory::kIdId);
  EXPECT_EQ(r.summary[0].cells, 1u);
  EXPECT_EQ(r.summary[0].metrics.count("auroc.energy"), 0u);
  for (const auto& row : r.summary) {
    std::vector<double> acc, auroc;
    for (const auto& cell : r.cells) {
      if (cell.category != row.category) continue;
      acc.push_back(cell.eval.accuracy);
      if (!cell.detection.empty()) auroc.push_back(cell.detection.at("energy").auroc);
    }
    const auto [mean, std] = oracle::MeanStd(acc);
    EXPECT_NEAR(row.metrics.at("accuracy").mean, mean, 1e-12);
    EXPECT_NEAR(row.metrics.at("accuracy").std, std, 1e-12);
    if (!auroc.empty()) {
      EXPECT_NEAR(row.metrics.at("auroc.energy").mean, oracle::MeanStd(auroc).first, 1e-12);
    }
  }
  EXPECT_EQ(r.summary[1].category, ShiftCategory::kOodId);
  EXPECT_EQ(r.summary[1].cells, 3u);
  // Every shifted cell has strictly lower logits than the reference.
  for (size_t i = 1; i < r.cells.size(); ++i) {
    EXPECT_GT(r.cells[i].detection.at("energy").auroc, 0.5);
  }
}

TEST(RunGridScored, IdOnly) {
  const PreferenceDataset d = MakeCorpus(20, 10);
  std::map<LanguagePair, std::vector<ScoredPair>> cells;
  cells[{"en", "en"}] = Cell(d, 0, 1.0);
  const GridReport r = RunGridScored(cells, {});
  ASSERT_EQ(r.cells.size(), 1u);
  ASSERT_EQ(r.summary.size(), 1u);
  EXPECT_EQ(r.summary[0].metrics.at("accuracy").std, 0.0);
}

TEST(RunGridScored, Errors) {
  const PreferenceDataset d = MakeCorpus(20, 11);
  std::map<LanguagePair, std::vector<ScoredPair>> cells;
  cells[{"de", "de"}] = Cell(d, 0, 1.0);
  EXPECT_EQ(CodeOf([&] { RunGridScored(cells, {}); }), ErrorCode::kMissingCell);
  cells[{"en", "en"}] = Cell(d, 0, 1.0);
  cells[{"de", "de"}].pop_back();
  EXPECT_EQ(CodeOf([&] { RunGridScored(cells, {}); }), ErrorCode::kIdMisalignment);
  cells[{"de", "de"}] = Cell(d, 0, 1.0);
  GridOptions fr;
  fr.id_language = "fr";
  EXPECT_EQ(CodeOf([&] { RunGridScored(cells, fr); }), ErrorCode::kMissingCell);
}

TEST(RunGrid, ScoresEachCell) {
  std::map<LanguagePair, PreferenceDataset> datasets;
  datasets[{"en", "en"}] = MakeCorpus(30, 12);
  datasets[{"en", "xx"}] = datasets[{"en", "en"}];
  for (auto& rec : datasets[{"en", "xx"}].records) {
    rec.response_0 = "zz " + rec.response_0;
    rec.response_1 = "zz " + rec.response_1;
  }
  SyntheticParams params;
  params.lexicon = DatasetVocabulary(datasets[{"en", "en"}]);
  SyntheticScorer scorer(params);
  const GridReport r = RunGrid(datasets, scorer, {.parallelism = 2});
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[1].category, ShiftCategory::kIdOod);
  EXPECT_GT(r.cells[1].detection.at("energy").auroc, 0.7);
}

}  // namespace
}  // namespace rmshift
