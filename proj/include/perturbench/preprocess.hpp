#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Keep mask for rows with raw count sum strictly greater than min_total.
/// Requires raw_counts layout.
std::vector<uint8_t> filter_min_counts(const ExpressionMatrix& expr, double min_total);

/// Applies a keep mask to every row-aligned payload of the dataset.
Dataset apply_row_mask(const Dataset& ds, const std::vector<uint8_t>& keep);

/// Library-size normalization to target_sum per row followed by ln(1 + x).
/// Rows with zero total are left at zero with a warning. Output layout is
/// lognorm; input must be raw_counts.
ExpressionMatrix normalize_log1p(const ExpressionMatrix& expr, double target_sum = 1e4);

/// Batch-level probe split: whole batches are assigned to train until the
/// train side holds at least train_frac of the rows, leaving at least one
/// test batch. Perturbation labels not present on both sides are recorded in
/// excluded_perturbations. Warns when the achieved row fraction deviates from
/// the target by more than 0.1.
SplitSpec make_probe_split(const Metadata& meta, double train_frac, uint64_t seed);

/// Reconstruction split: batch assignment as above, plus round(holdout_frac *
/// n_perturbations) perturbation labels held out of the train side entirely.
/// Control samples are never held out.
SplitSpec make_recon_split(const Metadata& meta, double train_frac, double holdout_frac,
                           uint64_t seed);

/// Seeded permutation of the perturbation column (labels move, rows stay).
Metadata shuffle_labels(const Metadata& meta, uint64_t seed);

}  // namespace pbench
