// rmshift: reward-model robustness evaluation under distribution shift.
//
//   rmshift evaluate --dataset scored.jsonl
//   rmshift perturb  --dataset data.jsonl --probability 0.25 --targets response --out shifted.jsonl
//   rmshift detect   --dataset id.jsonl --ood-dataset ood.jsonl
//   rmshift sweep    --config sweep.json --dataset data.jsonl --out-dir results/
//   rmshift grid     --config grid.json --out-dir results/
//   rmshift report   --input results/sweep_report.json --format table --out-dir results/
//
// Every long option can also be set through an environment variable named
// RMSHIFT_<OPTION>, e.g. RMSHIFT_ENDPOINT for --endpoint.
//
// Exit codes: 0 success, 1 validation error, 2 backend/transport failure,
// 3 partial (checkpointed) run.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rmshift/dataset.hpp"
#include "rmshift/detect.hpp"
#include "rmshift/error.hpp"
#include "rmshift/metrics.hpp"
#include "rmshift/perturb.hpp"
#include "rmshift/report.hpp"
#include "rmshift/runner.hpp"
#include "rmshift/scorer.hpp"

namespace fs = std::filesystem;
using namespace rmshift;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitBackend = 2;
constexpr int kExitPartial = 3;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTransportError:
    case ErrorCode::kScoreLookupMiss:
      return kExitBackend;
    case ErrorCode::kPartialRun:
      return kExitPartial;
    default:
      return kExitValidation;
  }
}

void AddEnvOverrides(CLI::App* app) {
  for (CLI::Option* opt : app->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    std::string env = "RMSHIFT_" + names.front();
    std::transform(env.begin(), env.end(), env.begin(), [](unsigned char c) {
      return c == '-' ? '_' : static_cast<char>(std::toupper(c));
    });
    opt->envname(env);
  }
}

struct BackendFlags {
  std::string backend = "file";
  std::string endpoint;
  std::string scores;
  std::string lexicon;
  size_t parallelism = 1;
  int attempts = HttpOptions{}.attempts;

  void Add(CLI::App* app, const std::string& default_backend) {
    backend = default_backend;
    app->add_option("--backend", backend, "Scorer backend")
        ->check(CLI::IsMember({"file", "http", "synthetic"}))
        ->capture_default_str();
    app->add_option("--endpoint", endpoint, "Base URL of the scoring service (http backend)");
    app->add_option("--scores", scores,
                    "Pre-scored file (file backend); defaults to the dataset file itself");
    app->add_option("--lexicon", lexicon,
                    "Known-word list for the synthetic scorer; defaults to the dataset's words");
    app->add_option("--parallelism", parallelism, "Scoring requests in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--attempts", attempts, "HTTP attempts per request")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  BackendConfig Config(const std::string& dataset_path) const {
    BackendConfig c;
    c.kind = ParseBackendKind(backend);
    c.http_attempts = attempts;
    if (c.kind == BackendKind::kRemoteHttp) c.location = endpoint;
    if (c.kind == BackendKind::kPreScoredFile) c.location = scores.empty() ? dataset_path : scores;
    if (!lexicon.empty()) c.lexicon_path = lexicon;
    return c;
  }
};

std::vector<ScoredPair> ScoreWith(const BackendFlags& flags, const std::string& path,
                                  const PreferenceDataset& dataset,
                                  const PreferenceDataset& reference, const LoadOptions& load) {
  const BackendConfig config = flags.Config(path);
  if (config.kind == BackendKind::kPreScoredFile && config.location == path) {
    return LoadScoredDataset(path, load);
  }
  auto scorer = MakeScorer(ResolveBackend(config, reference));
  ScoreOptions options;
  options.parallelism = flags.parallelism;
  return ScoreDataset(*scorer, dataset, options);
}

void PrintJson(const Json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-model evaluation under distribution shift"};
  app.require_subcommand(1);
  bool lenient = false;

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Accuracy, ECE and reliability bins of one dataset");
  std::string eval_dataset;
  int eval_bins = kDefaultBins;
  std::string eval_out_dir;
  std::string eval_save_scores;
  BackendFlags eval_backend;
  evaluate->add_option("--dataset", eval_dataset, "Dataset (JSON lines)")->required();
  evaluate->add_option("--bins", eval_bins, "Confidence bins")->capture_default_str();
  evaluate->add_option("--out-dir", eval_out_dir, "Also write eval_result.json here");
  evaluate->add_option("--save-scores", eval_save_scores, "Write the scored dataset here");
  evaluate->add_flag("--lenient", lenient, "Skip and count malformed lines");
  eval_backend.Add(evaluate, "file");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Apply seeded word perturbation to a dataset");
  std::string perturb_dataset;
  double perturb_probability = 0.0;
  std::string perturb_target = "both";
  uint64_t perturb_seed = 0;
  std::string perturb_wordlist;
  std::string perturb_out;
  perturb->add_option("--dataset", perturb_dataset, "Input dataset")->required();
  perturb->add_option("--probability,--probabilities", perturb_probability,
                      "Per-word perturbation probability")
      ->required();
  perturb->add_option("--targets,--target", perturb_target, "prompt, response or both")
      ->capture_default_str();
  perturb->add_option("--seed", perturb_seed, "Random seed")->capture_default_str();
  perturb->add_option("--wordlist", perturb_wordlist,
                      "Replacement words, one per line; defaults to the dataset's words");
  perturb->add_option("--out", perturb_out, "Output dataset")->required();
  perturb->add_flag("--lenient", lenient, "Skip and count malformed lines");

  // detect
  auto* detect = app.add_subcommand("detect", "OOD detection between an ID and an OOD dataset");
  std::string detect_id;
  std::string detect_ood;
  std::vector<std::string> detect_methods = {"energy", "msp"};
  std::string detect_out_dir;
  BackendFlags detect_backend;
  detect->add_option("--dataset", detect_id, "In-distribution dataset")->required();
  detect->add_option("--ood-dataset", detect_ood, "Shifted dataset")->required();
  detect->add_option("--methods", detect_methods, "energy, msp")->delimiter(',')->capture_default_str();
  detect->add_option("--out-dir", detect_out_dir, "Also write detection_result.json here");
  detect->add_flag("--lenient", lenient, "Skip and count malformed lines");
  detect_backend.Add(detect, "file");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Perturbation-probability sweep with repeated trials");
  std::string sweep_config_path;
  std::string sweep_dataset;
  std::string sweep_out_dir;
  std::vector<std::string> sweep_formats = {"structured", "table", "plot"};
  std::optional<std::vector<double>> sweep_probabilities;
  std::optional<std::vector<std::string>> sweep_targets;
  std::optional<std::vector<std::string>> sweep_methods;
  std::optional<int> sweep_trials;
  std::optional<uint64_t> sweep_seed;
  std::optional<int> sweep_bins;
  std::optional<size_t> sweep_workers;
  std::optional<std::string> sweep_wordlist;
  std::optional<size_t> sweep_max_trials;
  bool sweep_fresh = false;
  BackendFlags sweep_backend;
  sweep->add_option("--config", sweep_config_path, "Sweep config (JSON); flags override it");
  sweep->add_option("--dataset", sweep_dataset, "Unshifted dataset")->required();
  sweep->add_option("--out-dir", sweep_out_dir, "Output directory")->required();
  sweep->add_option("--format", sweep_formats, "structured, table, plot")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--probabilities", sweep_probabilities, "Ascending probability grid")->delimiter(',');
  sweep->add_option("--targets", sweep_targets, "prompt, response, both")->delimiter(',');
  sweep->add_option("--methods", sweep_methods, "energy, msp")->delimiter(',');
  sweep->add_option("--trials", sweep_trials, "Trials per cell");
  sweep->add_option("--seed", sweep_seed, "Base seed");
  sweep->add_option("--bins", sweep_bins, "Confidence bins");
  sweep->add_option("--workers", sweep_workers, "Trials in flight");
  sweep->add_option("--wordlist", sweep_wordlist, "Replacement words for perturbation");
  sweep->add_option("--max-trials", sweep_max_trials,
                    "Stop after this many new trials (the run can be resumed)");
  sweep->add_flag("--fresh", sweep_fresh, "Discard an existing checkpoint");
  sweep->add_flag("--lenient", lenient, "Skip and count malformed lines");
  sweep_backend.Add(sweep, "synthetic");

  // grid
  auto* grid = app.add_subcommand("grid", "Language grid: per-cell evaluation and detection");
  std::string grid_config_path;
  std::string grid_out_dir;
  std::vector<std::string> grid_formats = {"structured", "table"};
  BackendFlags grid_backend;
  grid->add_option("--config", grid_config_path, "Grid config (JSON)")->required();
  grid->add_option("--out-dir", grid_out_dir, "Output directory")->required();
  grid->add_option("--format", grid_formats, "structured, table")->delimiter(',')->capture_default_str();
  grid->add_flag("--lenient", lenient, "Skip and count malformed lines");
  grid_backend.Add(grid, "file");

  // report
  auto* report = app.add_subcommand("report", "Re-render a structured report");
  std::string report_input;
  std::vector<std::string> report_formats = {"table"};
  std::string report_out_dir;
  report->add_option("--input", report_input, "Structured report (JSON)")->required();
  report->add_option("--format", report_formats, "structured, table, plot")
      ->delimiter(',')
      ->capture_default_str();
  report->add_option("--out-dir", report_out_dir, "Output directory")->required();

  for (auto* sub : app.get_subcommands({})) AddEnvOverrides(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const LoadOptions load{lenient};
  auto report_skips = [](const LoadStats& stats, const std::string& path) {
    if (stats.skipped > 0) {
      std::cerr << "skipped " << stats.skipped << " malformed line(s) in " << path << '\n';
    }
  };

  try {
    if (*evaluate) {
      LoadStats stats;
      const PreferenceDataset dataset = LoadPreferenceDataset(eval_dataset, load, &stats);
      report_skips(stats, eval_dataset);
      const auto scored = ScoreWith(eval_backend, eval_dataset, dataset, dataset, load);
      if (!eval_save_scores.empty()) WriteScoredDataset(eval_save_scores, scored, dataset.metadata);
      const EvalResult result = Evaluate(scored, eval_bins);
      Json j = ToJson(result);
      j["skipped_lines"] = stats.skipped;
      PrintJson(j);
      if (!eval_out_dir.empty()) WriteTextFile(fs::path(eval_out_dir) / "eval_result.json", j.dump(2) + "\n");
    } else if (*perturb) {
      LoadStats stats;
      const PreferenceDataset dataset = LoadPreferenceDataset(perturb_dataset, load, &stats);
      report_skips(stats, perturb_dataset);
      PerturbSpec spec;
      spec.probability = perturb_probability;
      spec.target = ParseShiftTarget(perturb_target);
      spec.seed = perturb_seed;
      if (!perturb_wordlist.empty()) spec.vocabulary = LoadWordlist(perturb_wordlist);
      PerturbLog log;
      const PreferenceDataset shifted = PerturbDataset(dataset, spec, &log);
      WritePreferenceDataset(perturb_out, shifted);
      std::cerr << "perturbed " << log.selected << " of " << log.words << " words ("
                << log.inserted << " inserted, " << log.deleted << " deleted, " << log.replaced
                << " replaced)\n";
    } else if (*detect) {
      LoadStats stats;
      const PreferenceDataset id_set = LoadPreferenceDataset(detect_id, load, &stats);
      report_skips(stats, detect_id);
      const PreferenceDataset ood_set = LoadPreferenceDataset(detect_ood, load, &stats);
      report_skips(stats, detect_ood);
      const auto id_scored = ScoreWith(detect_backend, detect_id, id_set, id_set, load);
      BackendFlags ood_flags = detect_backend;
      ood_flags.scores.clear();  // the OOD file carries its own scores in file mode
      const auto ood_scored = ScoreWith(ood_flags, detect_ood, ood_set, id_set, load);
      Json j = Json::array();
      for (const auto& name : detect_methods) {
        j.push_back(ToJson(Detect(id_scored, ood_scored, ParseOodMethod(name))));
      }
      PrintJson(j);
      if (!detect_out_dir.empty()) {
        WriteTextFile(fs::path(detect_out_dir) / "detection_result.json", j.dump(2) + "\n");
      }
    } else if (*sweep) {
      SweepConfig config;
      if (!sweep_config_path.empty()) {
        config = SweepConfigFromJson(LoadJsonFile(sweep_config_path));
      }
      if (sweep->count("--backend") || sweep_config_path.empty()) {
        config.backend = sweep_backend.Config(sweep_dataset);
      }
      if (sweep->count("--endpoint")) config.backend.location = sweep_backend.endpoint;
      if (sweep->count("--lexicon")) config.backend.lexicon_path = sweep_backend.lexicon;
      if (sweep->count("--attempts")) config.backend.http_attempts = sweep_backend.attempts;
      if (sweep->count("--parallelism")) config.parallelism = sweep_backend.parallelism;
      if (sweep_probabilities) config.probabilities = *sweep_probabilities;
      if (sweep_targets) {
        config.targets.clear();
        for (const auto& t : *sweep_targets) config.targets.push_back(ParseShiftTarget(t));
      }
      if (sweep_methods) {
        config.methods.clear();
        for (const auto& m : *sweep_methods) config.methods.push_back(ParseOodMethod(m));
      }
      if (sweep_trials) config.trials = *sweep_trials;
      if (sweep_seed) config.base_seed = *sweep_seed;
      if (sweep_bins) config.bins = *sweep_bins;
      if (sweep_workers) config.workers = *sweep_workers;
      if (sweep_wordlist) config.wordlist_path = *sweep_wordlist;
      ValidateSweepConfig(config);

      LoadStats stats;
      const PreferenceDataset dataset = LoadPreferenceDataset(sweep_dataset, load, &stats);
      report_skips(stats, sweep_dataset);
      const fs::path out_dir = sweep_out_dir;
      SweepOptions options;
      options.checkpoint_path = out_dir / "sweep.checkpoint.jsonl";
      if (sweep_fresh) fs::remove(*options.checkpoint_path);
      options.max_new_trials = sweep_max_trials;
      const SweepReport result = RunSweep(config, dataset, options);
      for (const auto& f : sweep_formats) {
        for (const auto& path : EmitReport(result, ParseReportFormat(f), out_dir)) {
          std::cout << path.string() << '\n';
        }
      }
    } else if (*grid) {
      const Json config = LoadJsonFile(grid_config_path);
      GridOptions options;
      if (config.contains("id_language")) options.id_language = config["id_language"].get<std::string>();
      if (config.contains("bins")) options.bins = config["bins"].get<int>();
      if (config.contains("methods")) {
        options.methods.clear();
        for (const auto& m : config["methods"]) options.methods.push_back(ParseOodMethod(m.get<std::string>()));
      }
      options.parallelism = grid_backend.parallelism;
      BackendConfig backend = config.contains("backend") && !grid->count("--backend")
                                  ? BackendConfigFromJson(config["backend"])
                                  : grid_backend.Config("");
      if (grid->count("--endpoint")) backend.location = grid_backend.endpoint;

      const fs::path base = fs::path(grid_config_path).parent_path();
      auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
      if (!config.contains("cells") || !config["cells"].is_array()) {
        throw Error(ErrorCode::kInvalidConfig, "grid config needs a 'cells' array");
      }
      std::map<LanguagePair, PreferenceDataset> datasets;
      std::map<LanguagePair, fs::path> paths;
      for (const auto& cell : config["cells"]) {
        LanguagePair key{cell.at("prompt_language").get<std::string>(),
                         cell.at("response_language").get<std::string>()};
        const fs::path path = resolve(cell.at("dataset").get<std::string>());
        LoadStats stats;
        datasets[key] = LoadPreferenceDataset(path, load, &stats);
        report_skips(stats, path.string());
        paths[key] = cell.contains("scores") ? resolve(cell["scores"].get<std::string>()) : path;
      }
      const LanguagePair id_key{options.id_language, options.id_language};
      if (!datasets.count(id_key)) {
        throw Error(ErrorCode::kMissingCell, "grid config has no (" + options.id_language + ", " +
                                                 options.id_language + ") cell");
      }
      GridReport result;
      if (backend.kind == BackendKind::kPreScoredFile) {
        std::map<LanguagePair, std::vector<ScoredPair>> scored;
        for (const auto& [key, dataset] : datasets) {
          PreScoredScorer scorer(paths.at(key));
          ScoreOptions so;
          so.parallelism = options.parallelism;
          scored.emplace(key, ScoreDataset(scorer, dataset, so));
        }
        result = RunGridScored(scored, options);
      } else {
        auto scorer = MakeScorer(ResolveBackend(backend, datasets.at(id_key)));
        result = RunGrid(datasets, *scorer, options);
      }
      result.timestamp = CurrentTimestamp();
      for (const auto& f : grid_formats) {
        for (const auto& path : EmitReport(result, ParseReportFormat(f), grid_out_dir)) {
          std::cout << path.string() << '\n';
        }
      }
    } else if (*report) {
      const Json j = LoadJsonFile(report_input);
      const std::string kind = j.value("kind", "");
      for (const auto& f : report_formats) {
        std::vector<fs::path> written;
        if (kind == "sweep") {
          written = EmitReport(SweepReportFromJson(j), ParseReportFormat(f), report_out_dir);
        } else if (kind == "grid") {
          written = EmitReport(GridReportFromJson(j), ParseReportFormat(f), report_out_dir);
        } else {
          throw Error(ErrorCode::kInvalidConfig, "'" + report_input + "' is not a report");
        }
        for (const auto& path : written) std::cout << path.string() << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
