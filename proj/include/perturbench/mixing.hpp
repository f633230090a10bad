#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

struct BetaResult {
  double beta = 1.0;
  std::vector<double> probs;  // kernel probabilities over the neighbor set
  bool converged = false;
};

/// Calibrates the Gaussian kernel precision so that the neighborhood entropy
/// H satisfies exp(H) = perplexity, by bisection on beta (expanding bounds as
/// needed, tolerance 1e-5 on exp(H)/perplexity - 1, max 100 iterations).
/// distances are squared Euclidean to the neighbors, self excluded. When all
/// distances are equal the entropy is beta-independent; returns uniform
/// probabilities with converged = false.
BetaResult calibrate_beta(const std::vector<double>& distances, double perplexity);

struct MixingResult {
  double raw = 0.0;         // mean inverse Simpson index over samples, in [1, B]
  double normalized = 0.0;  // (raw - 1) / (B - 1); NaN when B == 1
  int n_batches = 0;
  int64_t n_unconverged = 0;  // samples whose beta search hit the iteration cap
};

struct MixingOptions {
  double perplexity = 30.0;
  int neighbors = 0;  // 0 => 3 * perplexity
};

/// Batch-mixing score: per-sample entropy-calibrated kernel probabilities over
/// the k nearest neighbors, summed per batch, inverse Simpson index, averaged.
/// Requires n > neighbors and at least 1 batch.
MixingResult ilisi(const MatD& emb, const std::vector<int32_t>& batch_idx, int n_batches,
                   const MixingOptions& opts = {});

struct MixingVsRandom {
  MixingResult observed;
  MixingResult baseline;    // seed-matched Gaussian embedding, same labels and dim
  double score = 0.0;       // observed.raw / baseline.raw; 1.0 for random inputs
};

/// Baseline-relative mixing score. Random embeddings score 1.0 by
/// construction; well-mixed real embeddings land near 1, collapsed or
/// batch-separated ones below.
MixingVsRandom ilisi_vs_random(const MatD& emb, const std::vector<int32_t>& batch_idx,
                               int n_batches, uint64_t seed, const MixingOptions& opts = {});

}  // namespace pbench
