#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

struct KnnOptions {
  int k = 0;  // 0 => floor(sqrt(n_reference))
  /// Ranked mode scores a query correct at N when its label is among the N
  /// most frequent neighbor labels (ties: smaller mean distance, then label
  /// index). The alternative scores on the raw label of the N-th neighbor
  /// list prefix.
  bool ranked_vote = true;
};

struct KnnResult {
  std::vector<double> topn;  // one accuracy per requested N, same order
  int k_used = 0;
};

/// Exact k-nearest-neighbor label vote from query rows into reference rows
/// (squared Euclidean, neighbor ties broken by reference index). Requires
/// k <= n_reference; reference and query must not share rows for an honest
/// score, which the pipeline guarantees via batch-level splits.
KnnResult knn_accuracy(const MatD& reference, const std::vector<int32_t>& ref_labels,
                       const MatD& query, const std::vector<int32_t>& query_labels,
                       const std::vector<int>& ns, const KnnOptions& opts = {});

}  // namespace pbench
