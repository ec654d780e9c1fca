#include "rmshift/dataset.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "rmshift/error.hpp"
#include "test_util.hpp"

namespace rmshift {
namespace {

using testing::MakePair;
using testing::TempDir;
using testing::WriteFile;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an rmshift::Error";
  return ErrorCode::kIoError;
}

PreferenceDataset Parse(const std::string& text, LoadOptions options = {},
                        LoadStats* stats = nullptr) {
  std::istringstream in(text);
  return ParsePreferenceDataset(in, options, stats);
}

TEST(LoadPreferenceDataset, PreservesOrder) {
  TempDir dir;
  WriteFile(dir / "d.jsonl",
            R"({"id":"b","prompt":"p1","response_0":"x","response_1":"y","label":1})" "\n"
            R"({"id":"a","prompt":"p2","response_0":"x","response_1":"y","label":0,"language":"fr"})" "\n");
  const PreferenceDataset d = LoadPreferenceDataset(dir / "d.jsonl");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.records[0].id, "b");
  EXPECT_EQ(d.records[0].label, 1);
  EXPECT_FALSE(d.records[0].language.has_value());
  EXPECT_EQ(d.records[1].id, "a");
  EXPECT_EQ(d.records[1].language, "fr");
  EXPECT_EQ(d.source_path, (dir / "d.jsonl").string());
}

TEST(LoadPreferenceDataset, InvalidLabelNamesRecord) {
  try {
    Parse(R"({"id":"bad-one","prompt":"p","response_0":"x","response_1":"y","label":2})");
    FAIL() << "expected InvalidLabel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidLabel);
    EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
  }
}

TEST(LoadPreferenceDataset, EmptyFile) {
  TempDir dir;
  WriteFile(dir / "empty.jsonl", "");
  EXPECT_EQ(CodeOf([&] { LoadPreferenceDataset(dir / "empty.jsonl"); }), ErrorCode::kEmptyDataset);
  EXPECT_EQ(CodeOf([&] { Parse("\n  \n"); }), ErrorCode::kEmptyDataset);
}

TEST(LoadPreferenceDataset, Errors) {
  EXPECT_EQ(CodeOf([] { Parse(R"({"id":"a","prompt":"p","response_0":"x","label":0})"); }),
            ErrorCode::kMissingField);
  EXPECT_EQ(CodeOf([] {
              Parse(R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":0})" "\n"
                    R"({"id":"a","prompt":"q","response_0":"x","response_1":"y","label":1})");
            }),
            ErrorCode::kDuplicateId);
  EXPECT_EQ(CodeOf([] { Parse(R"({"id":"a","prompt":"  ","response_0":"x","response_1":"y","label":0})"); }),
            ErrorCode::kEmptyText);
  EXPECT_EQ(CodeOf([] { Parse(R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":"1"})"); }),
            ErrorCode::kInvalidLabel);
  EXPECT_EQ(CodeOf([] { LoadPreferenceDataset("/nonexistent/file.jsonl"); }), ErrorCode::kIoError);
}

TEST(LoadPreferenceDataset, MalformedLineReportsLineNumber) {
  try {
    Parse(R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":0})" "\n"
          "\n"
          "{not json\n");
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedLine);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadPreferenceDataset, LenientSkipsAndCounts) {
  LoadStats stats;
  const auto d = Parse(R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":0})" "\n"
                       "garbage\n"
                       R"({"id":"b","prompt":"p","response_0":"x","response_1":"y","label":7})" "\n"
                       R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":1})" "\n"
                       R"({"id":"c","prompt":"p","response_0":"x","response_1":"y","label":1})" "\n",
                       LoadOptions{.lenient = true}, &stats);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.records[1].id, "c");
  EXPECT_EQ(stats.records, 2u);
  EXPECT_EQ(stats.skipped, 3u);
  EXPECT_EQ(stats.skipped_lines, (std::vector<size_t>{2, 3, 4}));
}

TEST(LoadPreferenceDataset, TextIsVerbatim) {
  const auto d = Parse(R"({"id":"u","prompt":"  Ünïcode\tPrompt ","response_0":"A  B","response_1":"é","label":0})");
  EXPECT_EQ(d.records[0].prompt, "  Ünïcode\tPrompt ");
  EXPECT_EQ(d.records[0].response_0, "A  B");
}

// Write then re-load reproduces every field, for random datasets.
TEST(WritePreferenceDataset, RoundTrip) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> fragments = {"hello", "wörld", "\"quoted\"", "tab\there",
                                              "new\nline", "日本語", "  spaced  ", "\\slash"};
  for (int round = 0; round < 20; ++round) {
    PreferenceDataset d;
    const size_t n = 1 + rng() % 30;
    for (size_t i = 0; i < n; ++i) {
      auto text = [&] {
        std::string s;
        for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k) s += fragments[rng() % fragments.size()] + " ";
        return s;
      };
      PreferencePair p = MakePair("id" + std::to_string(i), static_cast<int>(rng() % 2), text(),
                                  text(), text());
      if (rng() % 2) p.language = (rng() % 2) ? "fr" : "de";
      d.records.push_back(p);
    }
    if (round % 2) d.metadata["perturb.seed"] = std::to_string(round);
    std::stringstream buf;
    WritePreferenceDataset(buf, d);
    const PreferenceDataset back = ParsePreferenceDataset(buf);
    EXPECT_EQ(back, d);
  }
}

TEST(AttachScores, MatchesDatasetOrder) {
  PreferenceDataset d;
  d.records = {MakePair("x"), MakePair("y", 1), MakePair("z")};
  const auto scored = AttachScores(d, {{"z", {0, 1}}, {"x", {2, 3}}, {"y", {4, 5}}});
  ASSERT_EQ(scored.size(), 3u);
  EXPECT_EQ(scored[0].id(), "x");
  EXPECT_EQ(scored[0].logit_0(), 2);
  EXPECT_EQ(scored[1].id(), "y");
  EXPECT_EQ(scored[1].preferred_logit(), 5);
  EXPECT_EQ(scored[2].id(), "z");
}

TEST(AttachScores, MissingScoreNamesId) {
  PreferenceDataset d;
  d.records = {MakePair("x"), MakePair("y"), MakePair("z")};
  try {
    AttachScores(d, {{"x", {0, 1}}, {"z", {0, 1}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingScore);
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos);
  }
}

TEST(AttachScores, RejectsNonFinite) {
  PreferenceDataset d;
  d.records = {MakePair("x")};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(CodeOf([&] { AttachScores(d, {{"x", {nan, 0}}}); }), ErrorCode::kNonFiniteLogit);
  EXPECT_EQ(CodeOf([&] { AttachScores(d, {{"x", {0, -inf}}}); }), ErrorCode::kNonFiniteLogit);
  EXPECT_EQ(CodeOf([&] { ScoredPair(MakePair("q"), inf, 0); }), ErrorCode::kNonFiniteLogit);
}

TEST(ScoredDataset, RoundTripAndNullLogit) {
  std::mt19937_64 rng(3);
  std::vector<ScoredPair> scored = testing::RandomScored(25, rng);
  std::stringstream buf;
  WriteScoredDataset(buf, scored, {{"scorer", "test"}});
  const auto back = ParseScoredDataset(buf);
  EXPECT_EQ(back, scored);

  std::istringstream bad(R"({"id":"a","prompt":"p","response_0":"x","response_1":"y","label":0,"logit_0":null,"logit_1":1})");
  EXPECT_EQ(CodeOf([&] { ParseScoredDataset(bad); }), ErrorCode::kNonFiniteLogit);
}

TEST(DatasetFingerprint, SensitiveToContent) {
  PreferenceDataset a;
  a.records = {MakePair("x"), MakePair("y")};
  PreferenceDataset b = a;
  b.metadata["k"] = "v";
  EXPECT_EQ(DatasetFingerprint(a), DatasetFingerprint(b));
  b.records[1].prompt += "!";
  EXPECT_NE(DatasetFingerprint(a), DatasetFingerprint(b));
}

TEST(SplitWords, CollapsesWhitespace) {
  EXPECT_EQ(SplitWords("  a\tb\n\nc  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(SplitWords("   ").empty());
  EXPECT_EQ(SplitWords("it's, fine."), (std::vector<std::string>{"it's,", "fine."}));
}

}  // namespace
}  // namespace rmshift
