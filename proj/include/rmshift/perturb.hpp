#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmshift/dataset.hpp"
#include "rmshift/hash.hpp"

namespace rmshift {

// Which side of each pair a shift is applied to.
enum class ShiftTarget { kPrompt, kResponse, kBoth };

std::string_view ShiftTargetName(ShiftTarget target);
// Accepts "prompt", "response", "both" (any case). Throws kInvalidConfig.
ShiftTarget ParseShiftTarget(std::string_view name);

struct PerturbSpec {
  double probability = 0.0;  // per-word selection chance, in [0, 1]
  ShiftTarget target = ShiftTarget::kBoth;
  uint64_t seed = 0;
  // Words used for insertions and replacements. Left empty, PerturbDataset
  // falls back to the vocabulary of the dataset being perturbed.
  std::vector<std::string> vocabulary;
};

// Throws kInvalidProbability for p outside [0, 1] (or NaN).
void ValidatePerturbSpec(const PerturbSpec& spec);

// Counts of what happened to one text.
struct PerturbLog {
  size_t words = 0;
  size_t selected = 0;
  size_t inserted = 0;
  size_t deleted = 0;
  size_t replaced = 0;
};

// Splits `text` on whitespace and selects each word independently with
// probability spec.probability. A selected word gets exactly one edit, drawn
// uniformly: insert a vocabulary word right after it, delete it, or replace
// it with a vocabulary word. The result is joined with single spaces. When
// no word is selected the input is returned byte-for-byte.
//
// Throws kEmptyVocabulary when p > 0 and `vocabulary` is empty.
std::string PerturbText(std::string_view text, double probability,
                        std::span<const std::string> vocabulary, RandomStream& stream,
                        PerturbLog* log = nullptr);

inline std::string PerturbText(std::string_view text, const PerturbSpec& spec,
                               RandomStream& stream, PerturbLog* log = nullptr) {
  return PerturbText(text, spec.probability, spec.vocabulary, stream, log);
}

// Stream for one field of one record, so results do not depend on record
// order or on which worker processes the record.
RandomStream RecordStream(uint64_t seed, std::string_view record_id, std::string_view field);

// Perturbs the fields selected by spec.target of a single record.
PreferencePair PerturbPair(const PreferencePair& pair, const PerturbSpec& spec,
                           std::span<const std::string> vocabulary,
                           PerturbLog* log = nullptr);

// Applies PerturbPair to every record and records the spec in the metadata
// under perturb.probability, perturb.target, perturb.seed.
PreferenceDataset PerturbDataset(const PreferenceDataset& dataset, const PerturbSpec& spec,
                                 PerturbLog* log = nullptr);

// Sorted, de-duplicated whitespace tokens of all text fields.
std::vector<std::string> DatasetVocabulary(const PreferenceDataset& dataset);

// One word per line; blank lines skipped, surrounding whitespace trimmed.
std::vector<std::string> LoadWordlist(const std::filesystem::path& path);

}  // namespace rmshift
