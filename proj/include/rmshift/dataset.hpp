#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rmshift {

// One preference record: a prompt, two candidate responses and the index of
// the preferred one.
struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string response_0;
  std::string response_1;
  int label = 0;
  std::optional<std::string> language;

  const std::string& response(int index) const {
    return index == 0 ? response_0 : response_1;
  }

  bool operator==(const PreferencePair&) const = default;
};

struct Logits {
  double logit_0 = 0.0;
  double logit_1 = 0.0;

  bool operator==(const Logits&) const = default;
};

// A pair together with the reward logits of its two responses. Logits are
// checked finite on construction.
class ScoredPair {
 public:
  ScoredPair(PreferencePair pair, double logit_0, double logit_1);
  ScoredPair(PreferencePair pair, Logits logits)
      : ScoredPair(std::move(pair), logits.logit_0, logits.logit_1) {}

  const PreferencePair& pair() const { return pair_; }
  const std::string& id() const { return pair_.id; }
  double logit_0() const { return logit_0_; }
  double logit_1() const { return logit_1_; }
  Logits logits() const { return {logit_0_, logit_1_}; }
  double preferred_logit() const { return pair_.label == 0 ? logit_0_ : logit_1_; }
  double rejected_logit() const { return pair_.label == 0 ? logit_1_ : logit_0_; }

  bool operator==(const ScoredPair&) const = default;

 private:
  PreferencePair pair_;
  double logit_0_;
  double logit_1_;
};

using Metadata = std::map<std::string, std::string>;

struct PreferenceDataset {
  std::vector<PreferencePair> records;
  std::optional<std::string> source_path;
  Metadata metadata;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  bool operator==(const PreferenceDataset&) const = default;
};

// Throws Error{kInvalidLabel | kEmptyText | kMissingField} when a record
// invariant is broken.
void ValidatePair(const PreferencePair& pair);

// Record invariants, id uniqueness, and non-emptiness.
void ValidateDataset(const PreferenceDataset& dataset);

struct LoadOptions {
  // Skip and count malformed lines instead of failing on the first one.
  bool lenient = false;
};

struct LoadStats {
  size_t records = 0;
  size_t skipped = 0;
  std::vector<size_t> skipped_lines;  // 1-based
};

// Line-delimited JSON. One record per line with fields id, prompt,
// response_0, response_1, label and optionally language. A line of the form
// {"_meta": {...}} carries dataset metadata. Blank lines are ignored.
PreferenceDataset ParsePreferenceDataset(std::istream& in,
                                         const LoadOptions& options = {},
                                         LoadStats* stats = nullptr);
PreferenceDataset LoadPreferenceDataset(const std::filesystem::path& path,
                                        const LoadOptions& options = {},
                                        LoadStats* stats = nullptr);

void WritePreferenceDataset(std::ostream& out, const PreferenceDataset& dataset);
void WritePreferenceDataset(const std::filesystem::path& path,
                            const PreferenceDataset& dataset);

// Pre-scored files use the dataset format plus logit_0 and logit_1 fields.
std::vector<ScoredPair> ParseScoredDataset(std::istream& in,
                                           const LoadOptions& options = {},
                                           LoadStats* stats = nullptr);
std::vector<ScoredPair> LoadScoredDataset(const std::filesystem::path& path,
                                          const LoadOptions& options = {},
                                          LoadStats* stats = nullptr);
void WriteScoredDataset(std::ostream& out, std::span<const ScoredPair> scored,
                        const Metadata& metadata = {});
void WriteScoredDataset(const std::filesystem::path& path,
                        std::span<const ScoredPair> scored,
                        const Metadata& metadata = {});

// One ScoredPair per record, in dataset order. Throws kMissingScore naming
// the first id without an entry, kNonFiniteLogit for NaN/inf entries.
std::vector<ScoredPair> AttachScores(const PreferenceDataset& dataset,
                                     const std::map<std::string, Logits>& scores);

// Hash of the canonical serialization of the records (metadata excluded).
std::string DatasetFingerprint(const PreferenceDataset& dataset);

// Hash of the three text fields of a pair.
uint64_t ContentHash(const PreferencePair& pair);

std::vector<std::string> SplitWords(std::string_view text);

}  // namespace rmshift
