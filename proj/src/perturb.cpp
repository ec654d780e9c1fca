#include "rmshift/perturb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "rmshift/error.hpp"

namespace rmshift {
namespace {

enum class Edit : uint64_t { kInsert = 0, kDelete = 1, kReplace = 2 };

void Accumulate(PerturbLog* total, const PerturbLog& part) {
  if (!total) return;
  total->words += part.words;
  total->selected += part.selected;
  total->inserted += part.inserted;
  total->deleted += part.deleted;
  total->replaced += part.replaced;
}

}  // namespace

std::string_view ShiftTargetName(ShiftTarget target) {
  switch (target) {
    case ShiftTarget::kPrompt: return "prompt";
    case ShiftTarget::kResponse: return "response";
    case ShiftTarget::kBoth: return "both";
  }
  return "unknown";
}

ShiftTarget ParseShiftTarget(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "prompt") return ShiftTarget::kPrompt;
  if (lower == "response") return ShiftTarget::kResponse;
  if (lower == "both") return ShiftTarget::kBoth;
  throw Error(ErrorCode::kInvalidConfig, "unknown shift target '" + std::string(name) + "'");
}

void ValidatePerturbSpec(const PerturbSpec& spec) {
  if (!(spec.probability >= 0.0 && spec.probability <= 1.0)) {
    throw Error(ErrorCode::kInvalidProbability,
                fmt::format("perturbation probability {} outside [0, 1]", spec.probability));
  }
}

std::string PerturbText(std::string_view text, double probability,
                        std::span<const std::string> vocabulary, RandomStream& stream,
                        PerturbLog* log) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw Error(ErrorCode::kInvalidProbability,
                fmt::format("perturbation probability {} outside [0, 1]", probability));
  }
  if (probability > 0.0 && vocabulary.empty()) {
    throw Error(ErrorCode::kEmptyVocabulary, "perturbation needs a non-empty vocabulary");
  }

  PerturbLog local;
  const std::vector<std::string> words = SplitWords(text);
  local.words = words.size();
  std::vector<std::string_view> out;
  out.reserve(words.size() + words.size() / 2);
  for (const auto& word : words) {
    if (!(stream.Uniform() < probability)) {
      out.push_back(word);
      continue;
    }
    ++local.selected;
    switch (static_cast<Edit>(stream.Below(3))) {
      case Edit::kInsert:
        out.push_back(word);
        out.push_back(vocabulary[stream.Below(vocabulary.size())]);
        ++local.inserted;
        break;
      case Edit::kDelete:
        ++local.deleted;
        break;
      case Edit::kReplace:
        out.push_back(vocabulary[stream.Below(vocabulary.size())]);
        ++local.replaced;
        break;
    }
  }
  Accumulate(log, local);
  if (local.selected == 0) return std::string(text);

  std::string joined;
  for (size_t i = 0; i < out.size(); ++i) {
    if (i) joined += ' ';
    joined += out[i];
  }
  return joined;
}

RandomStream RecordStream(uint64_t seed, std::string_view record_id, std::string_view field) {
  return RandomStream(DeriveSeed(seed, record_id, field));
}

PreferencePair PerturbPair(const PreferencePair& pair, const PerturbSpec& spec,
                           std::span<const std::string> vocabulary, PerturbLog* log) {
  PreferencePair result = pair;
  auto apply = [&](std::string& field, std::string_view name) {
    RandomStream stream = RecordStream(spec.seed, pair.id, name);
    field = PerturbText(field, spec.probability, vocabulary, stream, log);
  };
  if (spec.target != ShiftTarget::kResponse) apply(result.prompt, "prompt");
  if (spec.target != ShiftTarget::kPrompt) {
    apply(result.response_0, "response_0");
    apply(result.response_1, "response_1");
  }
  return result;
}

PreferenceDataset PerturbDataset(const PreferenceDataset& dataset, const PerturbSpec& spec,
                                 PerturbLog* log) {
  ValidatePerturbSpec(spec);
  std::vector<std::string> fallback;
  std::span<const std::string> vocabulary = spec.vocabulary;
  if (vocabulary.empty() && spec.probability > 0.0) {
    fallback = DatasetVocabulary(dataset);
    vocabulary = fallback;
  }

  PreferenceDataset result;
  result.source_path = dataset.source_path;
  result.metadata = dataset.metadata;
  result.records.reserve(dataset.size());
  for (const auto& pair : dataset.records) {
    result.records.push_back(PerturbPair(pair, spec, vocabulary, log));
  }
  result.metadata["perturb.probability"] = fmt::format("{}", spec.probability);
  result.metadata["perturb.target"] = std::string(ShiftTargetName(spec.target));
  result.metadata["perturb.seed"] = std::to_string(spec.seed);
  return result;
}

std::vector<std::string> DatasetVocabulary(const PreferenceDataset& dataset) {
  std::vector<std::string> vocab;
  for (const auto& pair : dataset.records) {
    for (const std::string* text : {&pair.prompt, &pair.response_0, &pair.response_1}) {
      auto words = SplitWords(*text);
      vocab.insert(vocab.end(), std::make_move_iterator(words.begin()),
                   std::make_move_iterator(words.end()));
    }
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

std::vector<std::string> LoadWordlist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open wordlist '" + path.string() + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r\n\v\f");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n\v\f");
    words.push_back(line.substr(first, last - first + 1));
  }
  return words;
}

}  // namespace rmshift
