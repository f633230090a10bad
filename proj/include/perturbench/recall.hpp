#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Per-perturbation centroids of embedding rows. Controls are excluded.
/// Returns centroids (one row per label) and the label list, sorted.
struct CentroidSet {
  MatD centroids;
  std::vector<std::string> labels;
};
CentroidSet aggregate_embeddings(const MatD& emb, const Metadata& meta,
                                 bool include_controls = false);

/// Pairwise-cosine link prediction: pairs whose similarity is <= the low_pct
/// percentile or >= the high_pct percentile (linear-interpolation percentile,
/// inclusive bounds). Pairs are canonical (i < j by label order).
struct PredictedLinks {
  std::vector<std::pair<std::string, std::string>> links;
  double low_cut = 0.0;
  double high_cut = 0.0;
  size_t n_pairs = 0;
};
PredictedLinks predicted_links(const CentroidSet& cs, double low_pct = 5.0,
                               double high_pct = 95.0);

/// Fraction of database links, restricted to pairs with both genes in the
/// centroid label universe, that appear among the predicted links. Zero
/// in-universe links is an error.
struct RecallResult {
  double recall = 0.0;
  size_t n_db_in_universe = 0;
  size_t n_hit = 0;
};
RecallResult link_recall(const PredictedLinks& pred, const LinkDatabase& db,
                         const std::vector<std::string>& universe);

/// Linear-interpolation percentile (pct in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double pct);

}  // namespace pbench
