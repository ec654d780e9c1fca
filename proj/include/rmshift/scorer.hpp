#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rmshift/dataset.hpp"

namespace rmshift {

enum class BackendKind { kPreScoredFile, kRemoteHttp, kSynthetic };

std::string_view BackendKindName(BackendKind kind);
// "file", "http", "synthetic". Throws kInvalidConfig.
BackendKind ParseBackendKind(std::string_view name);

// Deterministic toy reward model, for tests and dry runs. For a prompt p and
// response r with whitespace tokens T(r):
//
//   overlap = |{t in T(r) : t occurs in p}| / |T(r)|
//   oov     = |{t in T(r) : t not in lexicon}| / |T(r)|   (0 if lexicon empty)
//   noise   = 2 * u - 1, u = top 53 bits of
//             SplitMix64(FNV1a(p ++ "\x1f" ++ r)) scaled to [0, 1)
//   logit   = overlap_weight * overlap - oov_weight * oov + noise_weight * noise
//
// with overlap = oov = 0 for an empty response. Word perturbation removes
// prompt words and adds unrelated ones, so logits drop as shift grows.
struct SyntheticParams {
  double overlap_weight = 4.0;
  double oov_weight = 4.0;
  double noise_weight = 0.5;
  std::vector<std::string> lexicon;
};

struct HttpOptions {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{60000};
};

struct ScorerBackend {
  BackendKind kind = BackendKind::kSynthetic;
  std::string location;  // file path or base URL; unused for kSynthetic
  SyntheticParams synthetic;
  HttpOptions http;
};

// Reward-logit provider. Implementations must be safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;

  // Logits for (prompt, response_0) and (prompt, response_1).
  virtual Logits ScorePair(const PreferencePair& pair) const = 0;

  // Stable description of the backend, used as part of cache keys.
  virtual std::string Identity() const = 0;
};

// Looks logits up by record id. A record whose text differs from the stored
// one is a miss, so perturbed variants never pick up the original scores.
class PreScoredScorer : public Scorer {
 public:
  explicit PreScoredScorer(const std::filesystem::path& path);
  explicit PreScoredScorer(std::span<const ScoredPair> scored, std::string identity = "memory");

  Logits ScorePair(const PreferencePair& pair) const override;
  std::string Identity() const override { return identity_; }

 private:
  void Index(std::span<const ScoredPair> scored);

  std::string identity_;
  std::unordered_map<std::string, ScoredPair> by_id_;
};

class SyntheticScorer : public Scorer {
 public:
  explicit SyntheticScorer(SyntheticParams params = {});

  double ScoreText(std::string_view prompt, std::string_view response) const;
  Logits ScorePair(const PreferencePair& pair) const override;
  std::string Identity() const override { return identity_; }

  const SyntheticParams& params() const { return params_; }

 private:
  SyntheticParams params_;
  std::unordered_set<std::string> lexicon_;
  std::string identity_;
};

struct HealthStatus {
  std::string status;
  std::string model;
};

// Client for the scoring service: POST <base>/score with
// {"prompt": ..., "response": ...} answered by {"logit": number}, and
// GET <base>/health answered by {"status": "ok", "model": ...}.
// Connection failures and 5xx replies are retried with exponential backoff.
class HttpScorer : public Scorer {
 public:
  struct TextScore {
    double logit;
    int retries;
  };

  HttpScorer(std::string base_url, HttpOptions options = {});

  TextScore ScoreText(const std::string& prompt, const std::string& response) const;
  Logits ScorePair(const PreferencePair& pair) const override;
  std::string Identity() const override { return "http:" + base_url_; }
  HealthStatus Health() const;

  // Retries performed over the lifetime of this scorer.
  size_t total_retries() const { return total_retries_.load(); }

 private:
  std::string base_url_;  // scheme://host[:port]
  std::string path_prefix_;
  HttpOptions options_;
  mutable std::atomic<size_t> total_retries_{0};
};

// Throws kInvalidConfig for a malformed backend description and kIoError for
// a missing pre-scored file.
std::unique_ptr<Scorer> MakeScorer(const ScorerBackend& backend);

// Logits keyed by (scorer identity, record id, content hash). Thread-safe.
class ScoreCache {
 public:
  std::optional<Logits> Lookup(const Scorer& scorer, const PreferencePair& pair) const;
  void Insert(const Scorer& scorer, const PreferencePair& pair, Logits logits);
  size_t size() const;

  // JSON lines of {"key": ..., "logit_0": ..., "logit_1": ...}.
  void Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

 private:
  static std::string Key(const Scorer& scorer, const PreferencePair& pair);

  mutable std::mutex mu_;
  std::unordered_map<std::string, Logits> entries_;
};

struct ScoreOptions {
  size_t parallelism = 1;  // maximum records in flight
  ScoreCache* cache = nullptr;
  // When set, the scored dataset is also written here in pre-scored format.
  std::optional<std::filesystem::path> persist_path;
};

// Scores every record; output order is dataset order whatever the completion
// order. If any record fails the whole call throws, with the error code of the
// first failing record and a count of failures in the message.
std::vector<ScoredPair> ScoreDataset(const Scorer& scorer, const PreferenceDataset& dataset,
                                     const ScoreOptions& options = {});

}  // namespace rmshift
