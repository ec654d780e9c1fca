#include "rmshift/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rmshift/error.hpp"
#include "rmshift/hash.hpp"

namespace rmshift {
namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr const char* kMetaKey = "_meta";

bool IsBlank(std::string_view text) {
  return text.find_first_not_of(" \t\r\n\v\f") == std::string_view::npos;
}

std::string LineContext(size_t line_no) {
  return "line " + std::to_string(line_no);
}

std::string RequireString(const Json& obj, const char* field,
                          const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    throw Error(ErrorCode::kMissingField,
                where + ": missing field '" + field + "'");
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::kMalformedLine,
                where + ": field '" + field + "' is not a string");
  }
  return it->get<std::string>();
}

PreferencePair PairFromJson(const Json& obj, size_t line_no) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::kMalformedLine, LineContext(line_no) + ": not an object");
  }
  PreferencePair pair;
  pair.id = RequireString(obj, "id", LineContext(line_no));
  const std::string where = LineContext(line_no) + " (id '" + pair.id + "')";
  pair.prompt = RequireString(obj, "prompt", where);
  pair.response_0 = RequireString(obj, "response_0", where);
  pair.response_1 = RequireString(obj, "response_1", where);

  auto label = obj.find("label");
  if (label == obj.end() || label->is_null()) {
    throw Error(ErrorCode::kMissingField, where + ": missing field 'label'");
  }
  if (!label->is_number_integer() || (label->get<int64_t>() != 0 && label->get<int64_t>() != 1)) {
    throw Error(ErrorCode::kInvalidLabel,
                where + ": label must be 0 or 1, got " + label->dump());
  }
  pair.label = label->get<int>();

  if (auto lang = obj.find("language"); lang != obj.end() && !lang->is_null()) {
    if (!lang->is_string()) {
      throw Error(ErrorCode::kMalformedLine, where + ": language is not a string");
    }
    pair.language = lang->get<std::string>();
  }
  ValidatePair(pair);
  return pair;
}

double LogitFromJson(const Json& obj, const char* field, const std::string& id,
                     size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw Error(ErrorCode::kMissingField, LineContext(line_no) + " (id '" + id +
                                              "'): missing field '" + field + "'");
  }
  // NaN and infinities have no JSON literal; writers emit null or a string.
  if (it->is_null() || it->is_string()) {
    throw Error(ErrorCode::kNonFiniteLogit,
                "id '" + id + "': " + field + " is " + it->dump());
  }
  if (!it->is_number()) {
    throw Error(ErrorCode::kMalformedLine,
                LineContext(line_no) + ": " + field + " is not a number");
  }
  return it->get<double>();
}

OrderedJson PairToJson(const PreferencePair& pair) {
  OrderedJson obj;
  obj["id"] = pair.id;
  obj["prompt"] = pair.prompt;
  obj["response_0"] = pair.response_0;
  obj["response_1"] = pair.response_1;
  obj["label"] = pair.label;
  if (pair.language) obj["language"] = *pair.language;
  return obj;
}

void WriteMetaLine(std::ostream& out, const Metadata& metadata) {
  if (metadata.empty()) return;
  OrderedJson meta;
  meta[kMetaKey] = metadata;
  out << meta.dump() << '\n';
}

std::ifstream OpenForRead(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "' for reading");
  }
  return in;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  }
  return out;
}

bool IsSkippable(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingField:
    case ErrorCode::kInvalidLabel:
    case ErrorCode::kEmptyText:
    case ErrorCode::kMalformedLine:
    case ErrorCode::kDuplicateId:
    case ErrorCode::kNonFiniteLogit:
      return true;
    default:
      return false;
  }
}

// Walks the lines of a record file, handing each parsed JSON object to
// `on_record`. Handles metadata lines, blank lines, duplicate ids and
// lenient skipping uniformly for plain and scored files.
template <typename OnRecord>
void ForEachRecord(std::istream& in, const LoadOptions& options, LoadStats* stats,
                   Metadata& metadata, OnRecord on_record) {
  LoadStats local;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      Json obj = Json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (obj.is_discarded()) {
        throw Error(ErrorCode::kMalformedLine, LineContext(line_no) + ": invalid JSON");
      }
      if (obj.is_object() && obj.size() == 1 && obj.contains(kMetaKey)) {
        const Json& meta = obj[kMetaKey];
        if (!meta.is_object()) {
          throw Error(ErrorCode::kMalformedLine, LineContext(line_no) + ": _meta is not an object");
        }
        for (const auto& [key, value] : meta.items()) {
          metadata[key] = value.is_string() ? value.template get<std::string>() : value.dump();
        }
        continue;
      }
      PreferencePair pair = PairFromJson(obj, line_no);
      if (seen.count(pair.id) != 0) {
        throw Error(ErrorCode::kDuplicateId,
                    LineContext(line_no) + ": duplicate id '" + pair.id + "'");
      }
      std::string id = pair.id;
      on_record(std::move(pair), obj, line_no);
      seen.insert(std::move(id));
      ++local.records;
    } catch (const Error& e) {
      if (!options.lenient || !IsSkippable(e.code())) throw;
      ++local.skipped;
      local.skipped_lines.push_back(line_no);
    }
  }
  if (stats) *stats = std::move(local);
}

}  // namespace

ScoredPair::ScoredPair(PreferencePair pair, double logit_0, double logit_1)
    : pair_(std::move(pair)), logit_0_(logit_0), logit_1_(logit_1) {
  if (!std::isfinite(logit_0) || !std::isfinite(logit_1)) {
    throw Error(ErrorCode::kNonFiniteLogit, "id '" + pair_.id + "' has a non-finite logit");
  }
}

void ValidatePair(const PreferencePair& pair) {
  if (pair.id.empty()) {
    throw Error(ErrorCode::kMissingField, "record has an empty id");
  }
  if (pair.label != 0 && pair.label != 1) {
    throw Error(ErrorCode::kInvalidLabel, "id '" + pair.id + "': label must be 0 or 1, got " +
                                              std::to_string(pair.label));
  }
  const std::pair<const char*, const std::string*> texts[] = {
      {"prompt", &pair.prompt},
      {"response_0", &pair.response_0},
      {"response_1", &pair.response_1}};
  for (const auto& [name, text] : texts) {
    if (IsBlank(*text)) {
      throw Error(ErrorCode::kEmptyText, "id '" + pair.id + "': " + name + " is empty");
    }
  }
}

void ValidateDataset(const PreferenceDataset& dataset) {
  if (dataset.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "dataset has no records");
  }
  std::unordered_set<std::string_view> ids;
  for (const auto& pair : dataset.records) {
    ValidatePair(pair);
    if (!ids.insert(pair.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate id '" + pair.id + "'");
    }
  }
}

PreferenceDataset ParsePreferenceDataset(std::istream& in, const LoadOptions& options,
                                         LoadStats* stats) {
  PreferenceDataset dataset;
  ForEachRecord(in, options, stats, dataset.metadata,
                [&](PreferencePair pair, const Json&, size_t) {
                  dataset.records.push_back(std::move(pair));
                });
  if (dataset.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no records found");
  }
  return dataset;
}

PreferenceDataset LoadPreferenceDataset(const std::filesystem::path& path,
                                        const LoadOptions& options, LoadStats* stats) {
  auto in = OpenForRead(path);
  PreferenceDataset dataset = ParsePreferenceDataset(in, options, stats);
  dataset.source_path = path.string();
  return dataset;
}

void WritePreferenceDataset(std::ostream& out, const PreferenceDataset& dataset) {
  WriteMetaLine(out, dataset.metadata);
  for (const auto& pair : dataset.records) {
    out << PairToJson(pair).dump() << '\n';
  }
}

void WritePreferenceDataset(const std::filesystem::path& path,
                            const PreferenceDataset& dataset) {
  auto out = OpenForWrite(path);
  WritePreferenceDataset(out, dataset);
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path.string() + "' failed");
}

std::vector<ScoredPair> ParseScoredDataset(std::istream& in, const LoadOptions& options,
                                           LoadStats* stats) {
  std::vector<ScoredPair> scored;
  Metadata ignored;
  ForEachRecord(in, options, stats, ignored,
                [&](PreferencePair pair, const Json& obj, size_t line_no) {
                  const double l0 = LogitFromJson(obj, "logit_0", pair.id, line_no);
                  const double l1 = LogitFromJson(obj, "logit_1", pair.id, line_no);
                  scored.emplace_back(std::move(pair), l0, l1);
                });
  if (scored.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no scored records found");
  }
  return scored;
}

std::vector<ScoredPair> LoadScoredDataset(const std::filesystem::path& path,
                                          const LoadOptions& options, LoadStats* stats) {
  auto in = OpenForRead(path);
  return ParseScoredDataset(in, options, stats);
}

void WriteScoredDataset(std::ostream& out, std::span<const ScoredPair> scored,
                        const Metadata& metadata) {
  WriteMetaLine(out, metadata);
  for (const auto& sp : scored) {
    OrderedJson obj = PairToJson(sp.pair());
    obj["logit_0"] = sp.logit_0();
    obj["logit_1"] = sp.logit_1();
    out << obj.dump() << '\n';
  }
}

void WriteScoredDataset(const std::filesystem::path& path, std::span<const ScoredPair> scored,
                        const Metadata& metadata) {
  auto out = OpenForWrite(path);
  WriteScoredDataset(out, scored, metadata);
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path.string() + "' failed");
}

std::vector<ScoredPair> AttachScores(const PreferenceDataset& dataset,
                                     const std::map<std::string, Logits>& scores) {
  std::vector<ScoredPair> scored;
  scored.reserve(dataset.size());
  for (const auto& pair : dataset.records) {
    auto it = scores.find(pair.id);
    if (it == scores.end()) {
      throw Error(ErrorCode::kMissingScore, "no score for id '" + pair.id + "'");
    }
    scored.emplace_back(pair, it->second);
  }
  return scored;
}

std::string DatasetFingerprint(const PreferenceDataset& dataset) {
  uint64_t h = kFnvOffset;
  for (const auto& pair : dataset.records) {
    h = Fnv1a(PairToJson(pair).dump(), h);
    h = Fnv1a("\n", h);
  }
  return HexDigest(h);
}

uint64_t ContentHash(const PreferencePair& pair) {
  return DeriveSeed(0, pair.prompt, pair.response_0, pair.response_1);
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> words;
  size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

}  // namespace rmshift
