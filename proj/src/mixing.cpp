#include "perturbench/mixing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "perturbench/common.hpp"
#include "perturbench/embedders.hpp"
#include "perturbench/parallel.hpp"
#include "perturbench/rng.hpp"

namespace pbench {

BetaResult calibrate_beta(const std::vector<double>& distances, double perplexity) {
  size_t k = distances.size();
  if (k < 2) throw Error(ErrorCode::config, "calibrate_beta: need at least 2 distances");
  if (!(perplexity > 0)) throw Error(ErrorCode::config, "calibrate_beta: perplexity must be positive");

  BetaResult res;
  res.probs.assign(k, 1.0 / static_cast<double>(k));

  double dmin = *std::min_element(distances.begin(), distances.end());
  double dmax = *std::max_element(distances.begin(), distances.end());
  if (dmax - dmin <= 0.0) {
    // Entropy is beta-independent for equal distances; report uniform.
    res.beta = 1.0;
    res.converged = false;
    return res;
  }

  std::vector<double> shifted(k);
  for (size_t i = 0; i < k; ++i) shifted[i] = distances[i] - dmin;

  double beta = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<double> p(k);
  for (int it = 0; it < 100; ++it) {
    double sum = 0.0;
    for (size_t i = 0; i < k; ++i) {
      p[i] = std::exp(-beta * shifted[i]);
      sum += p[i];
    }
    double entropy = 0.0;
    for (size_t i = 0; i < k; ++i) {
      p[i] /= sum;
      if (p[i] > 0) entropy -= p[i] * std::log(p[i]);
    }
    double eh = std::exp(entropy);
    if (std::fabs(eh / perplexity - 1.0) <= 1e-5) {
      res.beta = beta;
      res.probs = p;
      res.converged = true;
      return res;
    }
    if (eh > perplexity) {
      // Too spread out: concentrate the kernel.
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = std::isinf(lo) ? beta * 0.5 : 0.5 * (beta + lo);
    }
  }
  res.beta = beta;
  res.probs = p;
  res.converged = false;
  return res;
}

MixingResult ilisi(const MatD& emb, const std::vector<int32_t>& batch_idx, int n_batches,
                   const MixingOptions& opts) {
  int64_t n = emb.rows();
  if (n < 3) throw Error(ErrorCode::validation, "ilisi: need at least 3 samples");
  if (batch_idx.size() != static_cast<size_t>(n)) {
    throw Error(ErrorCode::validation, "ilisi: batch labels disagree with embedding rows");
  }
  if (n_batches < 1) throw Error(ErrorCode::validation, "ilisi: need at least 1 batch");
  for (int32_t b : batch_idx) {
    if (b < 0 || b >= n_batches) {
      throw Error(ErrorCode::validation, "ilisi: batch index out of range");
    }
  }
  int k = opts.neighbors > 0 ? opts.neighbors
                             : static_cast<int>(std::lround(3.0 * opts.perplexity));
  if (k >= n) {
    throw Error(ErrorCode::validation, "ilisi: neighbor count " + std::to_string(k) +
                                           " must be below sample count " + std::to_string(n));
  }
  if (k < 2) throw Error(ErrorCode::config, "ilisi: neighbor count must be >= 2");

  VecD sq_norms(n);
  for (int64_t i = 0; i < n; ++i) sq_norms(i) = emb.row(i).squaredNorm();

  std::vector<double> isi(n, 0.0);
  std::vector<uint8_t> unconverged(n, 0);

  const int64_t block = 256;
  int64_t n_blocks = (n + block - 1) / block;
  parallel_for(static_cast<size_t>(n_blocks), [&](size_t bi) {
    int64_t begin = static_cast<int64_t>(bi) * block;
    int64_t end = std::min(n, begin + block);
    // Squared Euclidean distances for the block in one GEMM.
    MatD dots = emb.middleRows(begin, end - begin) * emb.transpose();
    std::vector<std::pair<double, int64_t>> cand(n - 1);
    std::vector<double> dist(k);
    for (int64_t i = begin; i < end; ++i) {
      size_t c = 0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double d2 = sq_norms(i) + sq_norms(j) - 2.0 * dots(i - begin, j);
        cand[c++] = {d2 < 0 ? 0.0 : d2, j};
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      for (int j = 0; j < k; ++j) dist[j] = cand[j].first;
      BetaResult cal = calibrate_beta(dist, opts.perplexity);
      if (!cal.converged) unconverged[i] = 1;
      std::vector<double> per_batch(n_batches, 0.0);
      for (int j = 0; j < k; ++j) per_batch[batch_idx[cand[j].second]] += cal.probs[j];
      double simpson = 0.0;
      for (double s : per_batch) simpson += s * s;
      isi[i] = 1.0 / simpson;
    }
  });

  MixingResult out;
  out.n_batches = n_batches;
  for (int64_t i = 0; i < n; ++i) out.raw += isi[i];
  out.raw /= static_cast<double>(n);
  out.normalized = n_batches > 1 ? (out.raw - 1.0) / static_cast<double>(n_batches - 1)
                                 : std::numeric_limits<double>::quiet_NaN();
  for (int64_t i = 0; i < n; ++i) out.n_unconverged += unconverged[i];
  return out;
}

MixingVsRandom ilisi_vs_random(const MatD& emb, const std::vector<int32_t>& batch_idx,
                               int n_batches, uint64_t seed, const MixingOptions& opts) {
  MixingVsRandom out;
  out.observed = ilisi(emb, batch_idx, n_batches, opts);
  MatF noise = random_embedding(emb.rows(), static_cast<int>(emb.cols()),
                                mix64(seed ^ 0xB45E11E0ULL));
  out.baseline = ilisi(noise.cast<double>(), batch_idx, n_batches, opts);
  out.score = out.observed.raw / out.baseline.raw;
  return out;
}

}  // namespace pbench
