#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rmshift/dataset.hpp"

namespace rmshift {

constexpr int kDefaultBins = 10;

// Two-class softmax confidence, max(s, 1 - s) with s = e^a / (e^a + e^b).
// Evaluated as 1 / (1 + e^-|a - b|), the max-subtracted form, so it never
// overflows. Always in [0.5, 1]. Throws kNonFiniteLogit.
double Confidence(double logit_0, double logit_1);

// Strict: the preferred response must score higher. Ties are wrong.
inline bool IsCorrect(const ScoredPair& sp) { return sp.preferred_logit() > sp.rejected_logit(); }

// Fraction of pairs ranked correctly. Throws kEmptyDataset.
double RewardAccuracy(std::span<const ScoredPair> scored);

// One confidence bin. Bin m (1-based) covers ((m-1)/M, m/M]; bin 1 also
// includes 0.
struct ReliabilityBin {
  int index = 0;
  double lower = 0.0;
  double upper = 0.0;
  size_t count = 0;
  std::optional<double> accuracy;         // empty when count == 0
  std::optional<double> mean_confidence;  // empty when count == 0

  bool operator==(const ReliabilityBin&) const = default;
};

// 1-based bin of `confidence` among `bins` equal-width bins. Values are
// clamped into [0, 1] first.
int BinIndex(double confidence, int bins);

// Throws kEmptyDataset, kInvalidBinCount (bins < 1).
std::vector<ReliabilityBin> ReliabilityBins(std::span<const ScoredPair> scored,
                                            int bins = kDefaultBins);

// Sum over bins of |B_m|/n * |mean_confidence - accuracy|; empty bins add 0.
double EceFromBins(std::span<const ReliabilityBin> bins, size_t n);

double ExpectedCalibrationError(std::span<const ScoredPair> scored, int bins = kDefaultBins);

struct EvalResult {
  size_t n = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double mean_confidence = 0.0;
  std::vector<ReliabilityBin> bins;

  bool operator==(const EvalResult&) const = default;
};

EvalResult Evaluate(std::span<const ScoredPair> scored, int bins = kDefaultBins);

}  // namespace rmshift
