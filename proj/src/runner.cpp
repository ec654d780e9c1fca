#include "rmshift/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rmshift/error.hpp"
#include "rmshift/hash.hpp"
#include "rmshift/report.hpp"

namespace rmshift {

Stat Summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptySet, "cannot summarize zero values");
  Stat stat;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  stat.min = *lo;
  stat.max = *hi;
  if (stat.min == stat.max) {
    stat.mean = stat.min;
    return stat;
  }
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  stat.mean = std::clamp(sum / n, stat.min, stat.max);
  double sq = 0.0;
  for (double v : values) sq += (v - stat.mean) * (v - stat.mean);
  stat.std = std::sqrt(sq / n);
  return stat;
}

ScorerBackend ResolveBackend(const BackendConfig& config, const PreferenceDataset& reference) {
  ScorerBackend backend;
  backend.kind = config.kind;
  backend.location = config.location;
  backend.synthetic.overlap_weight = config.overlap_weight;
  backend.synthetic.oov_weight = config.oov_weight;
  backend.synthetic.noise_weight = config.noise_weight;
  if (config.kind == BackendKind::kSynthetic) {
    backend.synthetic.lexicon = config.lexicon_path ? LoadWordlist(*config.lexicon_path)
                                                    : DatasetVocabulary(reference);
  }
  backend.http.attempts = config.http_attempts;
  backend.http.initial_backoff = std::chrono::milliseconds(config.http_backoff_ms);
  backend.http.read_timeout = std::chrono::milliseconds(config.http_timeout_ms);
  return backend;
}

std::vector<double> DefaultProbabilityGrid() { return {0.0, 0.05, 0.15, 0.25, 0.5, 0.75, 1.0}; }

void ValidateSweepConfig(const SweepConfig& config) {
  if (config.probabilities.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "sweep needs at least one probability");
  }
  for (size_t i = 0; i < config.probabilities.size(); ++i) {
    const double p = config.probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::kInvalidProbability, fmt::format("probability {} outside [0, 1]", p));
    }
    if (i > 0 && !(config.probabilities[i - 1] < p)) {
      throw Error(ErrorCode::kInvalidConfig, "probabilities must be strictly ascending");
    }
  }
  if (config.targets.empty()) throw Error(ErrorCode::kInvalidConfig, "sweep needs a target");
  if (std::set<ShiftTarget>(config.targets.begin(), config.targets.end()).size() !=
      config.targets.size()) {
    throw Error(ErrorCode::kInvalidConfig, "duplicate shift target");
  }
  if (config.methods.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "sweep needs a detection method");
  }
  if (std::set<OodMethod>(config.methods.begin(), config.methods.end()).size() !=
      config.methods.size()) {
    throw Error(ErrorCode::kInvalidConfig, "duplicate detection method");
  }
  if (config.trials < 1) throw Error(ErrorCode::kInvalidConfig, "trials must be >= 1");
  if (config.bins < 1) throw Error(ErrorCode::kInvalidBinCount, "bins must be >= 1");
  if (config.workers < 1 || config.parallelism < 1) {
    throw Error(ErrorCode::kInvalidConfig, "workers and parallelism must be >= 1");
  }
}

uint64_t TrialSeed(uint64_t base_seed, int trial) {
  return DeriveSeed(base_seed, "trial", std::to_string(trial));
}

std::string AurocKey(OodMethod method) { return "auroc." + std::string(OodMethodName(method)); }
std::string FprKey(OodMethod method) { return "fpr_at_95." + std::string(OodMethodName(method)); }

const SweepCell* SweepReport::Find(ShiftTarget target, double probability) const {
  for (const auto& cell : cells) {
    if (cell.target == target && cell.probability == probability) return &cell;
  }
  return nullptr;
}

std::string CurrentTimestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

namespace {

struct TrialJob {
  ShiftTarget target;
  double probability;
  int trial;
};

std::string JobKey(ShiftTarget target, double probability, int trial) {
  return fmt::format("{}|{}|{}", ShiftTargetName(target), probability, trial);
}

std::string CheckpointFingerprint(const SweepConfig& config, const std::string& dataset_hash) {
  Json echo = ToJson(config);
  echo.erase("workers");
  echo.erase("parallelism");
  return HexDigest(Fnv1a(dataset_hash, Fnv1a(echo.dump())));
}

Json TrialToJson(const TrialJob& job, const TrialResult& result) {
  Json j;
  j["target"] = std::string(ShiftTargetName(job.target));
  j["probability"] = job.probability;
  j["trial"] = result.trial;
  j["seed"] = result.seed;
  j["values"] = result.values;
  return j;
}

// Appends finished trials to a JSON-lines file. The first line holds the
// fingerprint of the run the file belongs to.
class Checkpoint {
 public:
  Checkpoint(std::filesystem::path path, const std::string& fingerprint)
      : path_(std::move(path)) {
    std::vector<Json> kept;
    if (std::filesystem::exists(path_)) {
      std::ifstream in(path_);
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        auto j = Json::parse(line, nullptr, false);
        if (first) {
          first = false;
          if (j.is_discarded() || !j.contains("fingerprint") ||
              j["fingerprint"] != fingerprint) {
            throw Error(ErrorCode::kInvalidConfig,
                        "checkpoint '" + path_.string() + "' belongs to a different run");
          }
          continue;
        }
        // A torn final line from an interrupted write is dropped and redone.
        if (j.is_discarded() || !j.contains("values")) continue;
        TrialResult r;
        r.trial = j["trial"].get<int>();
        r.seed = j["seed"].get<uint64_t>();
        for (const auto& [k, v] : j["values"].items()) r.values[k] = v.get<double>();
        done_[JobKey(ParseShiftTarget(j["target"].get<std::string>()),
                     j["probability"].get<double>(), r.trial)] = r;
        kept.push_back(std::move(j));
      }
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::trunc);
    if (!out_) throw Error(ErrorCode::kIoError, "cannot write checkpoint '" + path_.string() + "'");
    out_ << Json{{"fingerprint", fingerprint}}.dump() << '\n';
    for (const auto& j : kept) out_ << j.dump() << '\n';
    out_.flush();
  }

  const std::map<std::string, TrialResult>& done() const { return done_; }

  void Append(const TrialJob& job, const TrialResult& result) {
    out_ << TrialToJson(job, result).dump() << '\n';
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::map<std::string, TrialResult> done_;
};

TrialResult RunTrial(const TrialJob& job, const SweepConfig& config,
                     const PreferenceDataset& dataset, std::span<const std::string> vocabulary,
                     std::span<const ScoredPair> reference, const Scorer& scorer,
                     ScoreCache* cache) {
  PerturbSpec spec;
  spec.probability = job.probability;
  spec.target = job.target;
  spec.seed = TrialSeed(config.base_seed, job.trial);
  spec.vocabulary.assign(vocabulary.begin(), vocabulary.end());
  const PreferenceDataset shifted = PerturbDataset(dataset, spec);

  ScoreOptions score_options;
  score_options.parallelism = config.parallelism;
  score_options.cache = cache;
  const std::vector<ScoredPair> scored = ScoreDataset(scorer, shifted, score_options);

  const EvalResult eval = Evaluate(scored, config.bins);
  TrialResult result;
  result.trial = job.trial;
  result.seed = spec.seed;
  result.values["accuracy"] = eval.accuracy;
  result.values["ece"] = eval.ece;
  result.values["mean_confidence"] = eval.mean_confidence;
  for (OodMethod method : config.methods) {
    const DetectionResult det = Detect(reference, scored, method);
    result.values[AurocKey(method)] = det.auroc;
    result.values[FprKey(method)] = det.fpr_at_95;
  }
  return result;
}

}  // namespace

SweepReport RunSweep(const SweepConfig& config, const PreferenceDataset& dataset,
                     const Scorer& scorer, const SweepOptions& options) {
  ValidateSweepConfig(config);
  ValidateDataset(dataset);

  SweepReport report;
  report.config = config;
  report.dataset_fingerprint = DatasetFingerprint(dataset);
  report.n_records = dataset.size();
  report.timestamp = options.timestamp.empty() ? CurrentTimestamp() : options.timestamp;

  const std::vector<std::string> vocabulary = config.wordlist_path
                                                  ? LoadWordlist(*config.wordlist_path)
                                                  : DatasetVocabulary(dataset);

  ScoreOptions reference_options;
  reference_options.parallelism = config.parallelism;
  reference_options.cache = options.cache;
  const std::vector<ScoredPair> reference = ScoreDataset(scorer, dataset, reference_options);
  report.reference = Evaluate(reference, config.bins);

  std::vector<TrialJob> jobs;
  for (ShiftTarget target : config.targets) {
    for (double p : config.probabilities) {
      for (int t = 0; t < config.trials; ++t) jobs.push_back({target, p, t});
    }
  }

  std::optional<Checkpoint> checkpoint;
  if (options.checkpoint_path) {
    checkpoint.emplace(*options.checkpoint_path,
                       CheckpointFingerprint(config, report.dataset_fingerprint));
  }

  std::vector<std::optional<TrialResult>> results(jobs.size());
  std::vector<size_t> pending;
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (checkpoint) {
      auto it = checkpoint->done().find(JobKey(jobs[i].target, jobs[i].probability, jobs[i].trial));
      if (it != checkpoint->done().end()) {
        results[i] = it->second;
        continue;
      }
    }
    pending.push_back(i);
  }
  bool truncated = false;
  if (options.max_new_trials && pending.size() > *options.max_new_trials) {
    pending.resize(*options.max_new_trials);
    truncated = true;
  }

  std::mutex mu;
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  size_t first_error_job = jobs.size();

  auto work = [&] {
    for (size_t k = next++; k < pending.size() && !failed; k = next++) {
      const size_t i = pending[k];
      try {
        TrialResult r = RunTrial(jobs[i], config, dataset, vocabulary, reference, scorer,
                                 options.cache);
        std::lock_guard lock(mu);
        if (checkpoint) checkpoint->Append(jobs[i], r);
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(mu);
        failed = true;
        if (i < first_error_job) {
          first_error_job = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  const size_t workers = std::clamp<size_t>(config.workers, 1, std::max<size_t>(pending.size(), 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);
  if (truncated) {
    throw Error(ErrorCode::kPartialRun,
                fmt::format("stopped after {} new trials; {} of {} trials are checkpointed",
                            pending.size(),
                            std::count_if(results.begin(), results.end(),
                                          [](const auto& r) { return r.has_value(); }),
                            jobs.size()));
  }

  size_t i = 0;
  for (ShiftTarget target : config.targets) {
    for (double p : config.probabilities) {
      SweepCell cell;
      cell.target = target;
      cell.probability = p;
      for (int t = 0; t < config.trials; ++t) cell.trials.push_back(std::move(*results[i++]));
      for (const auto& [key, unused] : cell.trials.front().values) {
        std::vector<double> values;
        for (const auto& trial : cell.trials) values.push_back(trial.values.at(key));
        cell.summary[key] = Summarize(values);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

SweepReport RunSweep(const SweepConfig& config, const PreferenceDataset& dataset,
                     const SweepOptions& options) {
  ValidateSweepConfig(config);
  ValidateDataset(dataset);
  const std::unique_ptr<Scorer> scorer = MakeScorer(ResolveBackend(config.backend, dataset));
  return RunSweep(config, dataset, *scorer, options);
}

// --- language grid ---

std::string_view ShiftCategoryName(ShiftCategory category) {
  switch (category) {
    case ShiftCategory::kIdId: return "id/id";
    case ShiftCategory::kOodId: return "ood/id";
    case ShiftCategory::kIdOod: return "id/ood";
    case ShiftCategory::kOodOod: return "ood/ood";
  }
  return "unknown";
}

ShiftCategory ParseShiftCategory(std::string_view name) {
  for (auto c : {ShiftCategory::kIdId, ShiftCategory::kOodId, ShiftCategory::kIdOod,
                 ShiftCategory::kOodOod}) {
    if (ShiftCategoryName(c) == name) return c;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown shift category '" + std::string(name) + "'");
}

ShiftCategory Categorize(const LanguagePair& languages, const std::string& id_language) {
  const bool prompt_id = languages.prompt == id_language;
  const bool response_id = languages.response == id_language;
  if (prompt_id && response_id) return ShiftCategory::kIdId;
  if (response_id) return ShiftCategory::kOodId;
  if (prompt_id) return ShiftCategory::kIdOod;
  return ShiftCategory::kOodOod;
}

namespace {

// Sort key placing cells of one OOD language together, in the order
// ID/OOD, OOD/ID, OOD/OOD.
std::tuple<int, std::string, int, std::string> CellOrder(const GridCell& cell,
                                                         const std::string& id_language) {
  const int group = cell.category == ShiftCategory::kIdId ? 0 : 1;
  const std::string& ood_language =
      cell.languages.prompt != id_language ? cell.languages.prompt : cell.languages.response;
  int within = 0;
  switch (cell.category) {
    case ShiftCategory::kIdId: within = 0; break;
    case ShiftCategory::kIdOod: within = 1; break;
    case ShiftCategory::kOodId: within = 2; break;
    case ShiftCategory::kOodOod: within = 3; break;
  }
  return {group, ood_language, within, cell.languages.response};
}

}  // namespace

GridReport RunGridScored(const std::map<LanguagePair, std::vector<ScoredPair>>& scored,
                         const GridOptions& options) {
  if (options.bins < 1) throw Error(ErrorCode::kInvalidBinCount, "bins must be >= 1");
  if (options.methods.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "grid needs a detection method");
  }
  const LanguagePair id_key{options.id_language, options.id_language};
  auto id_it = scored.find(id_key);
  if (id_it == scored.end()) {
    throw Error(ErrorCode::kMissingCell, "grid has no (" + options.id_language + ", " +
                                             options.id_language + ") cell");
  }
  const std::vector<ScoredPair>& reference = id_it->second;
  if (reference.empty()) throw Error(ErrorCode::kEmptyDataset, "ID cell is empty");
  std::set<std::string> reference_ids;
  for (const auto& sp : reference) reference_ids.insert(sp.id());

  GridReport report;
  report.options = options;
  for (const auto& [languages, pairs] : scored) {
    std::set<std::string> ids;
    for (const auto& sp : pairs) ids.insert(sp.id());
    if (ids != reference_ids) {
      std::string example;
      for (const auto& id : reference_ids) {
        if (!ids.count(id)) { example = "missing id '" + id + "'"; break; }
      }
      if (example.empty()) {
        for (const auto& id : ids) {
          if (!reference_ids.count(id)) { example = "unexpected id '" + id + "'"; break; }
        }
      }
      throw Error(ErrorCode::kIdMisalignment, "cell (" + languages.prompt + ", " +
                                                  languages.response + ") " + example);
    }

    GridCell cell;
    cell.languages = languages;
    cell.category = Categorize(languages, options.id_language);
    cell.eval = Evaluate(pairs, options.bins);
    if (cell.category != ShiftCategory::kIdId) {
      for (OodMethod method : options.methods) {
        cell.detection[std::string(OodMethodName(method))] = Detect(reference, pairs, method);
      }
    }
    report.cells.push_back(std::move(cell));
  }
  std::sort(report.cells.begin(), report.cells.end(), [&](const auto& a, const auto& b) {
    return CellOrder(a, options.id_language) < CellOrder(b, options.id_language);
  });

  for (auto category : {ShiftCategory::kIdId, ShiftCategory::kOodId, ShiftCategory::kIdOod,
                        ShiftCategory::kOodOod}) {
    std::map<std::string, std::vector<double>> columns;
    size_t count = 0;
    for (const auto& cell : report.cells) {
      if (cell.category != category) continue;
      ++count;
      columns["accuracy"].push_back(cell.eval.accuracy);
      columns["ece"].push_back(cell.eval.ece);
      columns["mean_confidence"].push_back(cell.eval.mean_confidence);
      for (const auto& [method, det] : cell.detection) {
        columns["auroc." + method].push_back(det.auroc);
        columns["fpr_at_95." + method].push_back(det.fpr_at_95);
      }
    }
    if (count == 0) continue;
    GridSummaryRow row;
    row.category = category;
    row.cells = count;
    for (const auto& [key, values] : columns) row.metrics[key] = Summarize(values);
    report.summary.push_back(std::move(row));
  }
  return report;
}

GridReport RunGrid(const std::map<LanguagePair, PreferenceDataset>& datasets,
                   const Scorer& scorer, const GridOptions& options) {
  if (!datasets.count({options.id_language, options.id_language})) {
    throw Error(ErrorCode::kMissingCell, "grid has no (" + options.id_language + ", " +
                                             options.id_language + ") cell");
  }
  std::map<LanguagePair, std::vector<ScoredPair>> scored;
  ScoreOptions score_options;
  score_options.parallelism = options.parallelism;
  for (const auto& [languages, dataset] : datasets) {
    ValidateDataset(dataset);
    scored.emplace(languages, ScoreDataset(scorer, dataset, score_options));
  }
  return RunGridScored(scored, options);
}

}  // namespace rmshift
