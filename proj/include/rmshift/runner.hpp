#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmshift/dataset.hpp"
#include "rmshift/detect.hpp"
#include "rmshift/metrics.hpp"
#include "rmshift/perturb.hpp"
#include "rmshift/scorer.hpp"

namespace rmshift {

// Mean and population standard deviation (divisor n) of trial values.
struct Stat {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const Stat&) const = default;
};

inline constexpr const char* kStdConvention = "population";

// Throws kEmptySet for no values.
Stat Summarize(std::span<const double> values);

// Serializable description of a scorer. Synthetic lexicons come from a file
// or, when absent, from the vocabulary of the unshifted dataset.
struct BackendConfig {
  BackendKind kind = BackendKind::kSynthetic;
  std::string location;
  double overlap_weight = SyntheticParams{}.overlap_weight;
  double oov_weight = SyntheticParams{}.oov_weight;
  double noise_weight = SyntheticParams{}.noise_weight;
  std::optional<std::string> lexicon_path;
  int http_attempts = HttpOptions{}.attempts;
  int http_backoff_ms = static_cast<int>(HttpOptions{}.initial_backoff.count());
  int http_timeout_ms = static_cast<int>(HttpOptions{}.read_timeout.count());

  bool operator==(const BackendConfig&) const = default;
};

ScorerBackend ResolveBackend(const BackendConfig& config, const PreferenceDataset& reference);

// {0, 0.05, 0.15, 0.25, 0.5, 0.75, 1.0}
std::vector<double> DefaultProbabilityGrid();

struct SweepConfig {
  std::vector<double> probabilities = DefaultProbabilityGrid();
  std::vector<ShiftTarget> targets = {ShiftTarget::kPrompt, ShiftTarget::kResponse,
                                      ShiftTarget::kBoth};
  int trials = 10;
  uint64_t base_seed = 0;
  int bins = kDefaultBins;
  BackendConfig backend;
  std::vector<OodMethod> methods = {OodMethod::kEnergy};
  // Replacement words for perturbation; the dataset's own words when absent.
  std::optional<std::string> wordlist_path;
  size_t workers = 1;      // trials in flight
  size_t parallelism = 1;  // scorer requests in flight per trial

  bool operator==(const SweepConfig&) const = default;
};

// Throws kInvalidConfig (unsorted or duplicate probabilities, trials < 1, no
// targets or methods), kInvalidProbability, kInvalidBinCount.
void ValidateSweepConfig(const SweepConfig& config);

// Seed of trial `trial`; independent of how many trials are run.
uint64_t TrialSeed(uint64_t base_seed, int trial);

// Keys of per-trial values: "accuracy", "ece", "mean_confidence" and, per
// detection method, "auroc.<method>" and "fpr_at_95.<method>".
std::string AurocKey(OodMethod method);
std::string FprKey(OodMethod method);

struct TrialResult {
  int trial = 0;
  uint64_t seed = 0;
  std::map<std::string, double> values;

  bool operator==(const TrialResult&) const = default;
};

struct SweepCell {
  double probability = 0.0;
  ShiftTarget target = ShiftTarget::kBoth;
  std::vector<TrialResult> trials;
  std::map<std::string, Stat> summary;

  bool operator==(const SweepCell&) const = default;
};

struct SweepReport {
  SweepConfig config;
  std::string dataset_fingerprint;
  size_t n_records = 0;
  std::string std_convention = kStdConvention;
  std::string timestamp;  // not part of the reproducible content
  EvalResult reference;   // the unshifted dataset
  std::vector<SweepCell> cells;  // target-major, probability ascending

  const SweepCell* Find(ShiftTarget target, double probability) const;
  bool operator==(const SweepReport&) const = default;
};

struct SweepOptions {
  // Completed trials are appended here and skipped when the run is resumed.
  std::optional<std::filesystem::path> checkpoint_path;
  // Stop with kPartialRun after this many newly computed trials.
  std::optional<size_t> max_new_trials;
  // Stamped into the report; current UTC time when empty.
  std::string timestamp;
  ScoreCache* cache = nullptr;
};

// Scores the unshifted dataset once as the detection reference, then for
// every (target, probability, trial) perturbs, scores, evaluates and runs
// detection against the reference.
SweepReport RunSweep(const SweepConfig& config, const PreferenceDataset& dataset,
                     const Scorer& scorer, const SweepOptions& options = {});

// Builds the scorer from config.backend.
SweepReport RunSweep(const SweepConfig& config, const PreferenceDataset& dataset,
                     const SweepOptions& options = {});

struct LanguagePair {
  std::string prompt;
  std::string response;

  auto operator<=>(const LanguagePair&) const = default;
};

// Which side is out of distribution. kOodId: shifted prompt, ID response.
enum class ShiftCategory { kIdId, kOodId, kIdOod, kOodOod };

std::string_view ShiftCategoryName(ShiftCategory category);
ShiftCategory ParseShiftCategory(std::string_view name);
ShiftCategory Categorize(const LanguagePair& languages, const std::string& id_language);

struct GridCell {
  LanguagePair languages;
  ShiftCategory category = ShiftCategory::kIdId;
  EvalResult eval;
  std::map<std::string, DetectionResult> detection;  // by method name; empty for ID/ID

  bool operator==(const GridCell&) const = default;
};

// Mean and spread of each metric across the cells (languages) of a category.
struct GridSummaryRow {
  ShiftCategory category = ShiftCategory::kIdId;
  size_t cells = 0;
  std::map<std::string, Stat> metrics;

  bool operator==(const GridSummaryRow&) const = default;
};

struct GridOptions {
  std::string id_language = "en";
  int bins = kDefaultBins;
  std::vector<OodMethod> methods = {OodMethod::kEnergy};
  size_t parallelism = 1;

  bool operator==(const GridOptions&) const = default;
};

struct GridReport {
  GridOptions options;
  std::string std_convention = kStdConvention;
  std::string timestamp;
  std::vector<GridCell> cells;  // ID/ID first, then by OOD language
  std::vector<GridSummaryRow> summary;

  bool operator==(const GridReport&) const = default;
};

// Cells must include (id, id) and cover the same record ids; throws
// kMissingCell, kIdMisalignment.
GridReport RunGridScored(const std::map<LanguagePair, std::vector<ScoredPair>>& scored,
                         const GridOptions& options);

GridReport RunGrid(const std::map<LanguagePair, PreferenceDataset>& datasets,
                   const Scorer& scorer, const GridOptions& options);

std::string CurrentTimestamp();

}  // namespace rmshift
