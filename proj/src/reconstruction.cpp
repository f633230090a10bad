#include "perturbench/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "perturbench/common.hpp"
#include "perturbench/rng.hpp"

namespace pbench {

namespace {

struct Adam {
  MatD m, v;
  explicit Adam(int64_t rows, int64_t cols)
      : m(MatD::Zero(rows, cols)), v(MatD::Zero(rows, cols)) {}
  void update(MatD& param, const MatD& grad, double lr, double wd, int64_t step) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    if (wd > 0) param -= lr * wd * param;
    param -= (lr / bc1) *
             m.cwiseQuotient((v / bc2).cwiseSqrt() + MatD::Constant(m.rows(), m.cols(), eps));
  }
};

std::vector<double> rank_with_ties(const double* vals, const std::vector<int>& order, int n) {
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && vals[order[j + 1]] == vals[order[i]]) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // 1-based average rank over the tie run
    for (int t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman of one (pred, actual) vector pair; 0 with warning flag for
// constant inputs.
double spearman_pair(const double* a, const double* b, int n, int64_t& constant_count) {
  std::vector<int> oa(n), ob(n);
  std::iota(oa.begin(), oa.end(), 0);
  std::iota(ob.begin(), ob.end(), 0);
  std::sort(oa.begin(), oa.end(), [&](int x, int y) { return a[x] < a[y]; });
  std::sort(ob.begin(), ob.end(), [&](int x, int y) { return b[x] < b[y]; });
  if (a[oa.front()] == a[oa.back()] || b[ob.front()] == b[ob.back()]) {
    ++constant_count;
    return 0.0;
  }
  std::vector<double> ra = rank_with_ties(a, oa, n);
  std::vector<double> rb = rank_with_ties(b, ob, n);
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, va = 0, vb = 0;
  for (int i = 0; i < n; ++i) {
    double da = ra[i] - ma, db = rb[i] - mb;
    num += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0 || vb <= 0) {
    ++constant_count;
    return 0.0;
  }
  return num / std::sqrt(va * vb);
}

}  // namespace

DecoderModel train_decoder(const MatD& emb, const MatD& targets, const DecoderOptions& opts) {
  int64_t n = emb.rows();
  int64_t d = emb.cols();
  int64_t g = targets.cols();
  if (n < 1) throw Error(ErrorCode::validation, "train_decoder: empty input");
  if (targets.rows() != n) {
    throw Error(ErrorCode::validation, "train_decoder: target rows disagree with embedding rows");
  }
  if (opts.epochs < 1 || opts.batch_size < 1) {
    throw Error(ErrorCode::config, "train_decoder: epochs and batch_size must be positive");
  }
  int64_t h = opts.hidden > 0 ? opts.hidden : d;

  DecoderModel model;
  model.relu = opts.relu;
  Rng init(mix64(opts.seed ^ 0xDEC0DEULL));
  auto init_mat = [&](int64_t rows, int64_t cols, double scale) {
    MatD w(rows, cols);
    for (int64_t j = 0; j < cols; ++j) {
      for (int64_t i = 0; i < rows; ++i) w(i, j) = scale * init.normal();
    }
    return w;
  };
  model.w1 = init_mat(d, h, 1.0 / std::sqrt(static_cast<double>(d)));
  model.b1 = VecD::Zero(h);
  model.w2 = init_mat(h, g, 1.0 / std::sqrt(static_cast<double>(h)));
  model.b2 = VecD::Zero(g);

  Adam aw1(d, h), ab1(h, 1), aw2(h, g), ab2(g, 1);
  int64_t step = 0;
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng shuf = Rng(mix64(opts.seed ^ 0xD5FFULL)).stream(static_cast<uint64_t>(epoch));
    shuf.shuffle(order.data(), order.size());
    double epoch_loss = 0.0;
    for (int64_t start = 0; start < n; start += opts.batch_size) {
      int64_t m = std::min<int64_t>(opts.batch_size, n - start);
      MatD xb(m, d), yb(m, g);
      for (int64_t r = 0; r < m; ++r) {
        xb.row(r) = emb.row(order[start + r]);
        yb.row(r) = targets.row(order[start + r]);
      }
      MatD z1 = xb * model.w1;
      z1.rowwise() += model.b1.transpose();
      MatD a1 = model.relu ? MatD(z1.cwiseMax(0.0)) : z1;
      MatD pred = a1 * model.w2;
      pred.rowwise() += model.b2.transpose();

      MatD diff = pred - yb;
      double loss = diff.squaredNorm() / static_cast<double>(m * g);
      epoch_loss += loss * static_cast<double>(m);

      MatD gpred = 2.0 * diff / static_cast<double>(m * g);
      MatD gw2 = a1.transpose() * gpred;
      VecD gb2 = gpred.colwise().sum().transpose();
      MatD ga1 = gpred * model.w2.transpose();
      if (model.relu) {
        ga1 = (z1.array() > 0.0).select(ga1, MatD::Zero(m, h));
      }
      MatD gw1 = xb.transpose() * ga1;
      VecD gb1 = ga1.colwise().sum().transpose();

      ++step;
      aw1.update(model.w1, gw1, opts.lr, opts.weight_decay, step);
      aw2.update(model.w2, gw2, opts.lr, opts.weight_decay, step);
      MatD b1m = model.b1, b2m = model.b2;
      ab1.update(b1m, gb1, opts.lr, 0.0, step);
      ab2.update(b2m, gb2, opts.lr, 0.0, step);
      model.b1 = b1m;
      model.b2 = b2m;
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::compute,
                  "train_decoder: non-finite loss at epoch " + std::to_string(epoch));
    }
    model.loss_per_epoch.push_back(epoch_loss);
  }
  return model;
}

MatD decode(const DecoderModel& model, const MatD& emb) {
  if (emb.cols() != model.w1.rows()) {
    throw Error(ErrorCode::validation, "decode: embedding dimension disagrees with model");
  }
  MatD z1 = emb * model.w1;
  z1.rowwise() += model.b1.transpose();
  MatD a1 = model.relu ? MatD(z1.cwiseMax(0.0)) : z1;
  MatD out = a1 * model.w2;
  out.rowwise() += model.b2.transpose();
  return out;
}

double spearman_score(const MatD& pred, const MatD& actual, bool per_gene) {
  if (pred.rows() != actual.rows() || pred.cols() != actual.cols()) {
    throw Error(ErrorCode::validation, "spearman_score: shape mismatch");
  }
  if (pred.rows() < 1 || pred.cols() < 2) {
    throw Error(ErrorCode::validation, "spearman_score: need at least 1 row and 2 columns");
  }
  MatD p = per_gene ? MatD(pred.transpose()) : pred;
  MatD a = per_gene ? MatD(actual.transpose()) : actual;
  if (per_gene && p.cols() < 2) {
    throw Error(ErrorCode::validation, "spearman_score: per-gene mode needs >= 2 samples");
  }
  int64_t rows = p.rows();
  int n = static_cast<int>(p.cols());
  int64_t constant_count = 0;
  double total = 0.0;
  std::vector<double> pr(n), ar(n);
  for (int64_t i = 0; i < rows; ++i) {
    for (int j = 0; j < n; ++j) {
      pr[j] = p(i, j);
      ar[j] = a(i, j);
    }
    total += spearman_pair(pr.data(), ar.data(), n, constant_count);
  }
  if (constant_count > 0) {
    warn("spearman_score: " + std::to_string(constant_count) +
         " constant rows contributed zero correlation");
  }
  return total / static_cast<double>(rows);
}

StructuralResult structural_integrity(const MatD& pred, const MatD& actual,
                                      const Metadata& meta) {
  if (pred.rows() != actual.rows() || pred.cols() != actual.cols()) {
    throw Error(ErrorCode::validation, "structural_integrity: shape mismatch");
  }
  if (pred.rows() != static_cast<int64_t>(meta.n_samples())) {
    throw Error(ErrorCode::validation, "structural_integrity: rows disagree with metadata");
  }
  int64_t g = pred.cols();
  size_t n_batches = meta.batch_names.size();

  double dist_sum = 0.0;
  double max_sum = 0.0;
  int64_t used_batches = 0;
  for (size_t b = 0; b < n_batches; ++b) {
    std::vector<int64_t> ctl, pert;
    for (size_t i = 0; i < meta.n_samples(); ++i) {
      if (meta.batch_idx[i] != static_cast<int32_t>(b)) continue;
      if (meta.is_control[i]) {
        ctl.push_back(static_cast<int64_t>(i));
      } else {
        pert.push_back(static_cast<int64_t>(i));
      }
    }
    if (ctl.empty() || pert.empty()) {
      warn("structural_integrity: batch '" + meta.batch_names[b] +
           "' lacks controls or perturbed samples; skipped");
      continue;
    }
    VecD ctl_pred = VecD::Zero(g), ctl_act = VecD::Zero(g);
    for (int64_t r : ctl) {
      ctl_pred += pred.row(r).transpose();
      ctl_act += actual.row(r).transpose();
    }
    ctl_pred /= static_cast<double>(ctl.size());
    ctl_act /= static_cast<double>(ctl.size());

    // Frobenius norms over control-centered perturbed rows.
    double sq_diff = 0.0, sq_act = 0.0;
    for (int64_t r : pert) {
      for (int64_t j = 0; j < g; ++j) {
        double cp = pred(r, j) - ctl_pred(j);
        double ca = actual(r, j) - ctl_act(j);
        double d = cp - ca;
        sq_diff += d * d;
        sq_act += ca * ca;
      }
    }
    double nb = static_cast<double>(pert.size());
    dist_sum += std::sqrt(sq_diff) / nb;
    max_sum += std::sqrt(sq_act) / nb;
    ++used_batches;
  }
  if (used_batches == 0) {
    throw Error(ErrorCode::validation,
                "structural_integrity: no batch has both controls and perturbed samples");
  }

  StructuralResult res;
  res.distance = dist_sum / static_cast<double>(used_batches);
  res.distance_max = 2.0 * max_sum / static_cast<double>(used_batches);
  if (res.distance_max <= 0.0) {
    throw Error(ErrorCode::validation,
                "structural_integrity: actual profiles are identical to controls");
  }
  res.integrity_unclamped = 1.0 - res.distance / res.distance_max;
  res.integrity = std::clamp(res.integrity_unclamped, 0.0, 1.0);
  return res;
}

}  // namespace pbench
