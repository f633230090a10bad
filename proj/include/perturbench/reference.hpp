#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench::reference {

/// Naive re-implementations of every metric, written for obviousness, not
/// speed, and sharing no kernels with the fast paths. Tests freeze fast-path
/// behavior against these; the production code must match within 1e-6.

double naive_ilisi_raw(const MatD& emb, const std::vector<int32_t>& batch_idx,
                       double perplexity, int neighbors);

double naive_avg_cosine(const MatD& rows);

double naive_knn_topn(const MatD& reference, const std::vector<int32_t>& ref_labels,
                      const MatD& query, const std::vector<int32_t>& query_labels, int k, int n);

std::vector<std::pair<std::string, std::string>> naive_predicted_links(
    const MatD& centroids, const std::vector<std::string>& labels, double low_pct,
    double high_pct);

double naive_percentile(const std::vector<double>& values, double pct);

double naive_spearman_rows(const MatD& pred, const MatD& actual);

double naive_structural_integrity(const MatD& pred, const MatD& actual, const Metadata& meta);

/// One-sided Jacobi SVD of a small dense matrix; returns singular values
/// descending. Used as the PCA oracle so the fast path's SVD kernel is not
/// shared.
std::vector<double> naive_svd_singular_values(const MatD& centered);

struct OracleReport {
  double ilisi_raw = 0.0;
  double avgsim_first_pert = 0.0;
  double knn_top1 = 0.0;
  double spearman_identity = 0.0;
  double structural_identity = 0.0;
  std::vector<double> pca_singular_values;
};

/// Runs the naive suite on a small dataset (n <= 500 enforced).
OracleReport oracle_suite(const Dataset& ds, const MatD& emb, int knn_k, int pca_dim);

}  // namespace pbench::reference
