#include "rmshift/detect.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <utility>

#include "rmshift/error.hpp"
#include "rmshift/metrics.hpp"

namespace rmshift {
namespace {

void CheckScores(std::span<const double> scores, const char* which) {
  if (scores.empty()) {
    throw Error(ErrorCode::kEmptySet, std::string(which) + " score set is empty");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::kNonFiniteScore, std::string(which) + " set has a non-finite score");
    }
  }
}

}  // namespace

std::string_view OodMethodName(OodMethod method) {
  switch (method) {
    case OodMethod::kEnergy: return "energy";
    case OodMethod::kMsp: return "msp";
  }
  return "unknown";
}

OodMethod ParseOodMethod(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "energy") return OodMethod::kEnergy;
  if (lower == "msp") return OodMethod::kMsp;
  throw Error(ErrorCode::kInvalidConfig, "unknown detection method '" + std::string(name) + "'");
}

double EnergyScore(double logit_0, double logit_1) {
  if (!std::isfinite(logit_0) || !std::isfinite(logit_1)) {
    throw Error(ErrorCode::kNonFiniteLogit, "energy score of non-finite logits");
  }
  const double hi = std::max(logit_0, logit_1);
  return -(hi + std::log1p(std::exp(-std::fabs(logit_0 - logit_1))));
}

double MspScore(double logit_0, double logit_1) { return -Confidence(logit_0, logit_1); }

double OodScoreValue(OodMethod method, const ScoredPair& scored) {
  switch (method) {
    case OodMethod::kEnergy: return EnergyScore(scored.logit_0(), scored.logit_1());
    case OodMethod::kMsp: return MspScore(scored.logit_0(), scored.logit_1());
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown detection method");
}

std::vector<OodScore> ComputeOodScores(std::span<const ScoredPair> scored, OodMethod method) {
  std::vector<OodScore> out;
  out.reserve(scored.size());
  for (const auto& sp : scored) out.push_back({sp.id(), method, OodScoreValue(method, sp)});
  return out;
}

std::vector<double> OodScoreValues(std::span<const ScoredPair> scored, OodMethod method) {
  std::vector<double> out;
  out.reserve(scored.size());
  for (const auto& sp : scored) out.push_back(OodScoreValue(method, sp));
  return out;
}

double Auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  CheckScores(id_scores, "ID");
  CheckScores(ood_scores, "OOD");

  std::vector<std::pair<double, bool>> all;  // (score, is_ood)
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.emplace_back(s, false);
  for (double s : ood_scores) all.emplace_back(s, true);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Ranks are 1-based; a tie group spanning positions [i, j) shares the
  // mid-rank (i + 1 + j) / 2. Doubling keeps everything integral.
  int64_t doubled_rank_sum = 0;
  for (size_t i = 0; i < all.size();) {
    size_t j = i;
    int64_t ood_in_group = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      ood_in_group += all[j].second ? 1 : 0;
      ++j;
    }
    doubled_rank_sum += ood_in_group * static_cast<int64_t>(i + 1 + j);
    i = j;
  }
  const auto n_ood = static_cast<int64_t>(ood_scores.size());
  const auto n_id = static_cast<int64_t>(id_scores.size());
  const int64_t doubled_u = doubled_rank_sum - n_ood * (n_ood + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_id * n_ood));
}

double FprAtTpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                double tpr_target) {
  CheckScores(id_scores, "ID");
  CheckScores(ood_scores, "OOD");
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
    throw Error(ErrorCode::kInvalidTarget, "TPR target must lie in (0, 1]");
  }

  std::vector<double> ood(ood_scores.begin(), ood_scores.end());
  std::sort(ood.begin(), ood.end(), std::greater<>());
  const double n_ood = static_cast<double>(ood.size());

  // Walk thresholds from high to low; ood[k] with k at the end of its tie
  // group has k + 1 scores at or above it.
  double threshold = ood.back();
  for (size_t k = 0; k < ood.size(); ++k) {
    if (k + 1 < ood.size() && ood[k + 1] == ood[k]) continue;
    if (static_cast<double>(k + 1) / n_ood >= tpr_target) {
      threshold = ood[k];
      break;
    }
  }

  const auto false_positives =
      std::count_if(id_scores.begin(), id_scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(false_positives) / static_cast<double>(id_scores.size());
}

DetectionResult Detect(std::span<const ScoredPair> id_scored,
                       std::span<const ScoredPair> ood_scored, OodMethod method) {
  if (id_scored.empty() || ood_scored.empty()) {
    throw Error(ErrorCode::kEmptySet, "detection needs non-empty ID and OOD sets");
  }
  const std::vector<double> id = OodScoreValues(id_scored, method);
  const std::vector<double> ood = OodScoreValues(ood_scored, method);
  DetectionResult result;
  result.method = method;
  result.auroc = Auroc(id, ood);
  result.fpr_at_95 = FprAtTpr(id, ood, 0.95);
  result.n_id = id.size();
  result.n_ood = ood.size();
  return result;
}

}  // namespace rmshift
