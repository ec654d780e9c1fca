#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmshift/dataset.hpp"

namespace rmshift {

// Every OOD score follows one convention: higher means more out-of-distribution.
enum class OodMethod { kEnergy, kMsp };

std::string_view OodMethodName(OodMethod method);
// "energy" or "msp" (any case). Throws kInvalidConfig.
OodMethod ParseOodMethod(std::string_view name);

struct OodScore {
  std::string pair_id;
  OodMethod method = OodMethod::kEnergy;
  double value = 0.0;
};

// -log(e^a + e^b), computed as -(max + log1p(e^-|a-b|)). Rises as the logits
// fall. Throws kNonFiniteLogit.
double EnergyScore(double logit_0, double logit_1);

// Negated two-class confidence, in [-1, -0.5].
double MspScore(double logit_0, double logit_1);

double OodScoreValue(OodMethod method, const ScoredPair& scored);
std::vector<OodScore> ComputeOodScores(std::span<const ScoredPair> scored, OodMethod method);
std::vector<double> OodScoreValues(std::span<const ScoredPair> scored, OodMethod method);

// P(random OOD score > random ID score), ties counted half. Computed from the
// Mann-Whitney rank sum with mid-ranks for tied scores, in exact integer
// arithmetic. Throws kEmptySet, kNonFiniteScore.
double Auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Takes the largest observed OOD score t with fraction(ood >= t) >= target and
// returns fraction(id >= t). No interpolation between thresholds.
// Throws kEmptySet, kNonFiniteScore, kInvalidTarget (target outside (0, 1]).
double FprAtTpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                double tpr_target = 0.95);

struct DetectionResult {
  OodMethod method = OodMethod::kEnergy;
  double auroc = 0.0;
  double fpr_at_95 = 0.0;
  size_t n_id = 0;
  size_t n_ood = 0;

  bool operator==(const DetectionResult&) const = default;
};

DetectionResult Detect(std::span<const ScoredPair> id_scored,
                       std::span<const ScoredPair> ood_scored, OodMethod method);

}  // namespace rmshift
