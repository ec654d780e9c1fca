#include "rmshift/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "rmshift/error.hpp"

namespace rmshift {
namespace {

void RequireNonEmpty(std::span<const ScoredPair> scored) {
  if (scored.empty()) throw Error(ErrorCode::kEmptyDataset, "no scored pairs to evaluate");
}

void RequireBins(int bins) {
  if (bins < 1) {
    throw Error(ErrorCode::kInvalidBinCount, "bin count must be >= 1, got " + std::to_string(bins));
  }
}

double Upper(int m, int bins) { return static_cast<double>(m) / static_cast<double>(bins); }

}  // namespace

double Confidence(double logit_0, double logit_1) {
  if (!std::isfinite(logit_0) || !std::isfinite(logit_1)) {
    throw Error(ErrorCode::kNonFiniteLogit, "confidence of non-finite logits");
  }
  const double gap = std::fabs(logit_0 - logit_1);
  return std::clamp(1.0 / (1.0 + std::exp(-gap)), 0.5, 1.0);
}

double RewardAccuracy(std::span<const ScoredPair> scored) {
  RequireNonEmpty(scored);
  const auto correct = std::count_if(scored.begin(), scored.end(), IsCorrect);
  return static_cast<double>(correct) / static_cast<double>(scored.size());
}

int BinIndex(double confidence, int bins) {
  RequireBins(bins);
  const double c = std::clamp(confidence, 0.0, 1.0);
  // ceil(c * M) is right up to rounding of the product; settle against the
  // exact interval edges.
  int m = std::clamp(static_cast<int>(std::ceil(c * bins)), 1, bins);
  while (m > 1 && c <= Upper(m - 1, bins)) --m;
  while (m < bins && c > Upper(m, bins)) ++m;
  return m;
}

std::vector<ReliabilityBin> ReliabilityBins(std::span<const ScoredPair> scored, int bins) {
  RequireNonEmpty(scored);
  RequireBins(bins);

  std::vector<size_t> counts(bins, 0);
  std::vector<size_t> correct(bins, 0);
  std::vector<double> confidence_sum(bins, 0.0);
  for (const auto& sp : scored) {
    const double c = Confidence(sp.logit_0(), sp.logit_1());
    const int m = BinIndex(c, bins) - 1;
    ++counts[m];
    confidence_sum[m] += c;
    if (IsCorrect(sp)) ++correct[m];
  }

  std::vector<ReliabilityBin> result(bins);
  for (int m = 0; m < bins; ++m) {
    ReliabilityBin& bin = result[m];
    bin.index = m + 1;
    bin.lower = Upper(m, bins);
    bin.upper = Upper(m + 1, bins);
    bin.count = counts[m];
    if (counts[m] > 0) {
      const double count = static_cast<double>(counts[m]);
      bin.accuracy = static_cast<double>(correct[m]) / count;
      bin.mean_confidence = confidence_sum[m] / count;
    }
  }
  return result;
}

double EceFromBins(std::span<const ReliabilityBin> bins, size_t n) {
  if (n == 0) throw Error(ErrorCode::kEmptyDataset, "ECE of an empty dataset");
  double ece = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    const double weight = static_cast<double>(bin.count) / static_cast<double>(n);
    ece += weight * std::fabs(*bin.mean_confidence - *bin.accuracy);
  }
  return ece;
}

double ExpectedCalibrationError(std::span<const ScoredPair> scored, int bins) {
  return EceFromBins(ReliabilityBins(scored, bins), scored.size());
}

EvalResult Evaluate(std::span<const ScoredPair> scored, int bins) {
  EvalResult result;
  result.bins = ReliabilityBins(scored, bins);
  result.n = scored.size();
  result.accuracy = RewardAccuracy(scored);
  result.ece = EceFromBins(result.bins, result.n);
  double total = 0.0;
  for (const auto& sp : scored) total += Confidence(sp.logit_0(), sp.logit_1());
  result.mean_confidence = total / static_cast<double>(result.n);
  return result;
}

}  // namespace rmshift
