#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Principal components fitted by randomized SVD on the centered matrix.
struct PcaModel {
  VecD mean;               // per-gene mean of the fit data
  MatD components;         // n_genes x dim, orthonormal columns
  VecD singular_values;    // descending
  double total_variance = 0.0;  // sum of per-gene variances of the fit data
  int64_t fitted_rows = 0;
  uint64_t seed = 0;

  /// explained_variance[i] / total_variance, explained_variance = s_i^2/(n-1).
  std::vector<double> explained_variance_ratio() const;
};

struct PcaOptions {
  int oversample = 10;
  int power_iters = 6;  // 4 leaves worst-case sigma error above 1e-4 on small fixtures
  uint64_t seed = 0;
};

/// Randomized-range-finder SVD of the centered input. dim must satisfy
/// 1 <= dim <= min(n, g). Sign convention: the largest-|loading| entry of
/// each component is positive. Warns when the trailing singular value
/// indicates rank deficiency.
PcaModel fit_pca(const MatF& x, int dim, const PcaOptions& opts = {});

/// (x - mean) @ components, returned as float32 rows.
MatF pca_transform(const PcaModel& model, const MatF& x);

/// Seeded i.i.d. standard-normal embedding, independent of any data content.
MatF random_embedding(int64_t n_rows, int dim, uint64_t seed);

}  // namespace pbench
