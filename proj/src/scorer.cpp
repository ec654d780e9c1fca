#include "rmshift/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "rmshift/error.hpp"
#include "rmshift/hash.hpp"

namespace rmshift {

std::string_view BackendKindName(BackendKind kind) {
  switch (kind) {
    case BackendKind::kPreScoredFile: return "file";
    case BackendKind::kRemoteHttp: return "http";
    case BackendKind::kSynthetic: return "synthetic";
  }
  return "unknown";
}

BackendKind ParseBackendKind(std::string_view name) {
  if (name == "file") return BackendKind::kPreScoredFile;
  if (name == "http") return BackendKind::kRemoteHttp;
  if (name == "synthetic") return BackendKind::kSynthetic;
  throw Error(ErrorCode::kInvalidConfig, "unknown backend '" + std::string(name) + "'");
}

// --- PreScoredScorer ---

PreScoredScorer::PreScoredScorer(const std::filesystem::path& path)
    : identity_("file:" + path.string()) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIoError, "pre-scored file '" + path.string() + "' does not exist");
  }
  Index(LoadScoredDataset(path));
}

PreScoredScorer::PreScoredScorer(std::span<const ScoredPair> scored, std::string identity)
    : identity_(std::move(identity)) {
  Index(scored);
}

void PreScoredScorer::Index(std::span<const ScoredPair> scored) {
  by_id_.reserve(scored.size());
  for (const auto& sp : scored) by_id_.emplace(sp.id(), sp);
}

Logits PreScoredScorer::ScorePair(const PreferencePair& pair) const {
  auto it = by_id_.find(pair.id);
  if (it == by_id_.end()) {
    throw Error(ErrorCode::kScoreLookupMiss, "no pre-computed score for id '" + pair.id + "'");
  }
  const PreferencePair& stored = it->second.pair();
  if (stored.prompt != pair.prompt || stored.response_0 != pair.response_0 ||
      stored.response_1 != pair.response_1) {
    throw Error(ErrorCode::kScoreLookupMiss,
                "pre-computed score for id '" + pair.id + "' was made for different text");
  }
  return it->second.logits();
}

// --- SyntheticScorer ---

SyntheticScorer::SyntheticScorer(SyntheticParams params)
    : params_(std::move(params)), lexicon_(params_.lexicon.begin(), params_.lexicon.end()) {
  std::vector<std::string> sorted(lexicon_.begin(), lexicon_.end());
  std::sort(sorted.begin(), sorted.end());
  uint64_t h = kFnvOffset;
  for (const auto& word : sorted) h = Fnv1a(word + "\n", h);
  identity_ = fmt::format("synthetic:{}:{}:{}:{}", params_.overlap_weight, params_.oov_weight,
                          params_.noise_weight, HexDigest(h));
}

double SyntheticScorer::ScoreText(std::string_view prompt, std::string_view response) const {
  const std::vector<std::string> prompt_words = SplitWords(prompt);
  const std::unordered_set<std::string_view> in_prompt(prompt_words.begin(), prompt_words.end());
  const std::vector<std::string> words = SplitWords(response);

  double overlap = 0.0;
  double oov = 0.0;
  if (!words.empty()) {
    size_t shared = 0;
    size_t unknown = 0;
    for (const auto& w : words) {
      if (in_prompt.count(w)) ++shared;
      if (!lexicon_.empty() && !lexicon_.count(w)) ++unknown;
    }
    overlap = static_cast<double>(shared) / static_cast<double>(words.size());
    oov = static_cast<double>(unknown) / static_cast<double>(words.size());
  }

  uint64_t h = Fnv1a(response, Fnv1a("\x1f", Fnv1a(prompt)));
  const double u = static_cast<double>(SplitMix64(h) >> 11) * 0x1.0p-53;
  const double noise = 2.0 * u - 1.0;

  return params_.overlap_weight * overlap - params_.oov_weight * oov +
         params_.noise_weight * noise;
}

Logits SyntheticScorer::ScorePair(const PreferencePair& pair) const {
  return {ScoreText(pair.prompt, pair.response_0), ScoreText(pair.prompt, pair.response_1)};
}

// --- factory ---

std::unique_ptr<Scorer> MakeScorer(const ScorerBackend& backend) {
  switch (backend.kind) {
    case BackendKind::kPreScoredFile:
      if (backend.location.empty()) {
        throw Error(ErrorCode::kInvalidConfig, "file backend needs a pre-scored file path");
      }
      return std::make_unique<PreScoredScorer>(std::filesystem::path(backend.location));
    case BackendKind::kRemoteHttp:
      return std::make_unique<HttpScorer>(backend.location, backend.http);
    case BackendKind::kSynthetic:
      return std::make_unique<SyntheticScorer>(backend.synthetic);
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown backend kind");
}

// --- ScoreCache ---

std::string ScoreCache::Key(const Scorer& scorer, const PreferencePair& pair) {
  return scorer.Identity() + "|" + pair.id + "|" + HexDigest(ContentHash(pair));
}

std::optional<Logits> ScoreCache::Lookup(const Scorer& scorer, const PreferencePair& pair) const {
  const std::string key = Key(scorer, pair);
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::Insert(const Scorer& scorer, const PreferencePair& pair, Logits logits) {
  std::string key = Key(scorer, pair);
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(std::move(key), logits);
}

size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ScoreCache::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open score cache '" + path.string() + "'");
  std::string line;
  size_t line_no = 0;
  std::lock_guard lock(mu_);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.contains("key") || !obj["logit_0"].is_number() ||
        !obj["logit_1"].is_number()) {
      throw Error(ErrorCode::kMalformedLine,
                  path.string() + " line " + std::to_string(line_no) + ": bad cache entry");
    }
    entries_.insert_or_assign(obj["key"].get<std::string>(),
                              Logits{obj["logit_0"].get<double>(), obj["logit_1"].get<double>()});
  }
}

void ScoreCache::Save(const std::filesystem::path& path) const {
  std::vector<std::pair<std::string, Logits>> sorted;
  {
    std::lock_guard lock(mu_);
    sorted.assign(entries_.begin(), entries_.end());
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write score cache '" + path.string() + "'");
  for (const auto& [key, logits] : sorted) {
    nlohmann::ordered_json obj;
    obj["key"] = key;
    obj["logit_0"] = logits.logit_0;
    obj["logit_1"] = logits.logit_1;
    out << obj.dump() << '\n';
  }
}

// --- ScoreDataset ---

std::vector<ScoredPair> ScoreDataset(const Scorer& scorer, const PreferenceDataset& dataset,
                                     const ScoreOptions& options) {
  const size_t n = dataset.size();
  std::vector<std::optional<Logits>> logits(n);
  std::vector<std::optional<Error>> errors(n);
  std::atomic<size_t> next{0};

  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      const PreferencePair& pair = dataset.records[i];
      try {
        if (options.cache) {
          if (auto hit = options.cache->Lookup(scorer, pair)) {
            logits[i] = *hit;
            continue;
          }
        }
        Logits result = scorer.ScorePair(pair);
        if (!std::isfinite(result.logit_0) || !std::isfinite(result.logit_1)) {
          throw Error(ErrorCode::kNonFiniteLogit, "id '" + pair.id + "' scored non-finite");
        }
        if (options.cache) options.cache->Insert(scorer, pair, result);
        logits[i] = result;
      } catch (const Error& e) {
        errors[i] = e;
      } catch (const std::exception& e) {
        errors[i] = Error(ErrorCode::kTransportError, "id '" + pair.id + "': " + e.what());
      }
    }
  };

  const size_t workers = std::clamp<size_t>(options.parallelism, 1, std::max<size_t>(n, 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  size_t failed = 0;
  const Error* first = nullptr;
  for (const auto& e : errors) {
    if (!e) continue;
    ++failed;
    if (!first) first = &*e;
  }
  if (first) {
    throw Error(first->code(), fmt::format("{} of {} records could not be scored; first: {}",
                                           failed, n, first->what()));
  }

  std::vector<ScoredPair> scored;
  scored.reserve(n);
  for (size_t i = 0; i < n; ++i) scored.emplace_back(dataset.records[i], *logits[i]);
  if (options.persist_path) {
    Metadata meta = dataset.metadata;
    meta["scorer"] = scorer.Identity();
    WriteScoredDataset(*options.persist_path, scored, meta);
  }
  return scored;
}

}  // namespace rmshift
