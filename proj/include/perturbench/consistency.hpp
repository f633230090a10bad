#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Mean cosine similarity over all ordered row pairs, diagonal included:
/// with unit rows x_hat this equals ||sum x_hat||^2 / n^2. Zero-norm rows are
/// dropped with a warning; all rows zero is an error. Single row gives 1.
double avg_cosine_similarity(const MatD& rows);

/// Perturbations whose target gene is essentially unexpressed in control
/// samples: mean lognorm expression < threshold. Perturbation labels are
/// matched to gene_ids verbatim; unmatched labels are skipped (counted in
/// n_unmatched). Fails if fewer than min_null qualify.
struct NullSelection {
  std::set<std::string> null_perturbations;
  size_t n_unmatched = 0;
};
NullSelection select_null_perturbations(const ExpressionMatrix& expr, const Metadata& meta,
                                        double threshold = 0.01, size_t min_null = 100);

enum class TestTail { right, left_as_printed };

struct ConsistencyResult {
  std::map<std::string, double> avgsim;   // tested perturbation -> observed statistic
  std::map<std::string, double> p_value;  // same keys
  std::vector<double> null_avgsim;        // sorted ascending, size K
  double fraction_significant = 0.0;
  size_t n_tested = 0;
  size_t n_null = 0;
};

struct ConsistencyOptions {
  double alpha = 0.05;
  /// right: p = max(#{null >= obs}, 1) / K (consistency means high avgsim).
  /// left_as_printed: p = max(#{null <= obs}, 1) / K.
  TestTail tail = TestTail::right;
};

/// Permutation-style test of within-perturbation embedding similarity against
/// the null distribution formed by the avgsim of each null perturbation.
/// Tested set: non-control perturbations with >= 1 sample that are not in the
/// null set. p-values are never below 1/K.
ConsistencyResult consistency_test(const MatD& emb, const Metadata& meta,
                                   const std::set<std::string>& null_perturbations,
                                   const ConsistencyOptions& opts = {});

}  // namespace pbench
