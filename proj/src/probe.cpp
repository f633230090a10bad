#include "perturbench/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "perturbench/common.hpp"
#include "perturbench/rng.hpp"

namespace pbench {

namespace {

double epoch_lr(const ProbeOptions& o, int epoch) {
  if (epoch < o.warmup_epochs) {
    double t = static_cast<double>(epoch) / static_cast<double>(o.warmup_epochs);
    return o.warmup_start_lr + (o.lr - o.warmup_start_lr) * t;
  }
  double denom = std::max(1, o.epochs - o.warmup_epochs);
  double progress = static_cast<double>(epoch - o.warmup_epochs) / denom;
  return o.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace

ProbeModel train_probe(const MatD& x, const std::vector<int32_t>& labels, int n_classes,
                       const ProbeOptions& opts) {
  int64_t n = x.rows();
  int64_t d = x.cols();
  if (n < 1) throw Error(ErrorCode::validation, "train_probe: empty input");
  if (labels.size() != static_cast<size_t>(n)) {
    throw Error(ErrorCode::validation, "train_probe: label count disagrees with rows");
  }
  if (n_classes < 2) throw Error(ErrorCode::validation, "train_probe: need at least 2 classes");
  {
    std::vector<uint8_t> seen(n_classes, 0);
    for (int32_t l : labels) {
      if (l < 0 || l >= n_classes) {
        throw Error(ErrorCode::validation, "train_probe: label out of range");
      }
      seen[l] = 1;
    }
    for (int c = 0; c < n_classes; ++c) {
      if (!seen[c]) {
        throw Error(ErrorCode::validation,
                    "train_probe: class " + std::to_string(c) + " absent from training labels");
      }
    }
  }
  if (opts.epochs < 1 || opts.batch_size < 1) {
    throw Error(ErrorCode::config, "train_probe: epochs and batch_size must be positive");
  }

  ProbeModel model;
  Rng init(mix64(opts.seed ^ 0x9120BEULL));
  model.weights.resize(d, n_classes);
  for (int64_t j = 0; j < n_classes; ++j) {
    for (int64_t i = 0; i < d; ++i) model.weights(i, j) = 0.01 * init.normal();
  }
  model.bias = VecD::Zero(n_classes);

  MatD mw = MatD::Zero(d, n_classes), vw = MatD::Zero(d, n_classes);
  VecD mb = VecD::Zero(n_classes), vb = VecD::Zero(n_classes);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double lr = epoch_lr(opts, epoch);
    Rng shuf = Rng(mix64(opts.seed ^ 0x50FFULL)).stream(static_cast<uint64_t>(epoch));
    shuf.shuffle(order.data(), order.size());

    double epoch_loss = 0.0;
    for (int64_t start = 0; start < n; start += opts.batch_size) {
      int64_t m = std::min<int64_t>(opts.batch_size, n - start);
      MatD xb(m, d);
      for (int64_t r = 0; r < m; ++r) xb.row(r) = x.row(order[start + r]);

      MatD logits = xb * model.weights;
      logits.rowwise() += model.bias.transpose();
      // Stable softmax + cross-entropy.
      VecD rowmax = logits.rowwise().maxCoeff();
      logits.colwise() -= rowmax;
      MatD p = logits.array().exp().matrix();
      VecD z = p.rowwise().sum();
      double loss = 0.0;
      for (int64_t r = 0; r < m; ++r) {
        int32_t y = labels[order[start + r]];
        loss -= logits(r, y) - std::log(z(r));
        p.row(r) /= z(r);
        p(r, y) -= 1.0;
      }
      loss /= static_cast<double>(m);
      epoch_loss += loss * static_cast<double>(m);

      MatD gw = xb.transpose() * p / static_cast<double>(m);
      VecD gb = p.colwise().sum().transpose() / static_cast<double>(m);

      ++step;
      double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      mw = beta1 * mw + (1.0 - beta1) * gw;
      vw = beta2 * vw.array().matrix() + (1.0 - beta2) * gw.cwiseProduct(gw);
      mb = beta1 * mb + (1.0 - beta1) * gb;
      vb = beta2 * vb + (1.0 - beta2) * gb.cwiseProduct(gb);
      // Decoupled weight decay on the weights only.
      model.weights -= lr * opts.weight_decay * model.weights;
      model.weights -=
          (lr / bc1) * mw.cwiseQuotient((vw / bc2).cwiseSqrt().array().matrix() +
                                        MatD::Constant(d, n_classes, eps));
      model.bias -= (lr / bc1) * mb.cwiseQuotient(
                        ((vb / bc2).cwiseSqrt() + VecD::Constant(n_classes, eps)));
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::compute,
                  "train_probe: non-finite loss at epoch " + std::to_string(epoch));
    }
    model.loss_per_epoch.push_back(epoch_loss);
  }
  return model;
}

std::vector<double> topk_accuracy(const ProbeModel& model, const MatD& x,
                                  const std::vector<int32_t>& labels,
                                  const std::vector<int>& ks) {
  int64_t n = x.rows();
  int n_classes = static_cast<int>(model.weights.cols());
  if (labels.size() != static_cast<size_t>(n)) {
    throw Error(ErrorCode::validation, "topk_accuracy: label count disagrees with rows");
  }
  if (ks.empty()) throw Error(ErrorCode::config, "topk_accuracy: no k values requested");
  for (int k : ks) {
    if (k < 1) throw Error(ErrorCode::config, "topk_accuracy: k must be >= 1");
  }

  std::vector<int64_t> correct(ks.size(), 0);
  MatD logits = x * model.weights;
  logits.rowwise() += model.bias.transpose();
  for (int64_t r = 0; r < n; ++r) {
    int32_t y = labels[r];
    if (y < 0 || y >= n_classes) {
      throw Error(ErrorCode::validation, "topk_accuracy: label out of range");
    }
    double ly = logits(r, y);
    // Rank of the true class; logit ties resolve by class index.
    int rank = 0;
    for (int c = 0; c < n_classes; ++c) {
      if (logits(r, c) > ly || (logits(r, c) == ly && c < y)) ++rank;
    }
    for (size_t ki = 0; ki < ks.size(); ++ki) {
      if (rank < ks[ki]) ++correct[ki];
    }
  }
  std::vector<double> out(ks.size());
  for (size_t ki = 0; ki < ks.size(); ++ki) {
    out[ki] = static_cast<double>(correct[ki]) / static_cast<double>(n);
  }
  return out;
}

}  // namespace pbench
