#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Two stacked linear maps trained with MSE; identity activation by default
/// (a rectifier can be enabled between the layers).
struct DecoderModel {
  MatD w1;  // dim x hidden
  VecD b1;
  MatD w2;  // hidden x n_genes
  VecD b2;
  bool relu = false;
  std::vector<double> loss_per_epoch;
};

struct DecoderOptions {
  int epochs = 30;
  int batch_size = 512;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  int hidden = 0;  // 0 => embedding dim
  bool relu = false;
  uint64_t seed = 0;
};

/// AdamW on MSE between decoded embeddings and lognorm expression targets.
/// Throws Error{compute} on non-finite loss.
DecoderModel train_decoder(const MatD& emb, const MatD& targets, const DecoderOptions& opts = {});

MatD decode(const DecoderModel& model, const MatD& emb);

/// Mean per-row Spearman rank correlation between prediction and target.
/// Rows that are constant on either side contribute 0 with a warning.
/// per_gene = true correlates per column instead.
double spearman_score(const MatD& pred, const MatD& actual, bool per_gene = false);

/// Control-centered batch-wise structural comparison.
/// distance = mean_b ||Ytil_pred_b - Ytil_act_b||_F / n_b over batches, where
/// Ytil rows are perturbed samples centered by that batch's control mean
/// (prediction centered by predicted controls, actual by actual controls).
/// distance_max approximates the worst case as 2 * mean_b ||Ytil_act_b||_F / n_b,
/// and integrity = 1 - distance / distance_max, clamped to [0, 1].
struct StructuralResult {
  double distance = 0.0;
  double distance_max = 0.0;
  double integrity = 0.0;
  double integrity_unclamped = 0.0;
};
StructuralResult structural_integrity(const MatD& pred, const MatD& actual,
                                      const Metadata& meta);

}  // namespace pbench
