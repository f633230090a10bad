#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Multinomial logistic probe: logits = x W + b.
struct ProbeModel {
  MatD weights;  // dim x n_classes
  VecD bias;     // n_classes
  std::vector<double> loss_per_epoch;
};

struct ProbeOptions {
  int epochs = 250;
  int batch_size = 2048;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  double warmup_start_lr = 3e-5;
  int warmup_epochs = 10;
  uint64_t seed = 0;
};

/// AdamW with linear warmup then cosine decay to zero, per-epoch schedule,
/// seeded shuffling. Every class in [0, n_classes) must appear in labels.
/// Throws Error{compute} if the loss goes non-finite.
ProbeModel train_probe(const MatD& x, const std::vector<int32_t>& labels, int n_classes,
                       const ProbeOptions& opts = {});

/// Fraction of rows whose true class ranks inside the top k logits; logit
/// ties resolve by class index, so results are deterministic. One value per
/// entry of ks, same order. k >= n_classes gives 1.0.
std::vector<double> topk_accuracy(const ProbeModel& model, const MatD& x,
                                  const std::vector<int32_t>& labels,
                                  const std::vector<int>& ks);

}  // namespace pbench
