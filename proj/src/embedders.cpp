#include "perturbench/embedders.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

#include "perturbench/common.hpp"
#include "perturbench/parallel.hpp"
#include "perturbench/rng.hpp"

namespace pbench {

std::vector<double> PcaModel::explained_variance_ratio() const {
  std::vector<double> out(singular_values.size(), 0.0);
  if (fitted_rows < 2 || total_variance <= 0.0) return out;
  double denom = total_variance * static_cast<double>(fitted_rows - 1);
  for (int i = 0; i < singular_values.size(); ++i) {
    out[i] = singular_values(i) * singular_values(i) / denom;
  }
  return out;
}

namespace {

MatD thin_q(const MatD& y) {
  Eigen::HouseholderQR<MatD> qr(y);
  return qr.householderQ() * MatD::Identity(y.rows(), y.cols());
}

}  // namespace

PcaModel fit_pca(const MatF& x, int dim, const PcaOptions& opts) {
  int64_t n = x.rows();
  int64_t g = x.cols();
  if (n < 1 || g < 1) throw Error(ErrorCode::validation, "fit_pca: empty input");
  int64_t max_dim = std::min(n, g);
  if (dim < 1 || dim > max_dim) {
    throw Error(ErrorCode::config, "fit_pca: dim must be in [1, min(n, g)] = [1, " +
                                       std::to_string(max_dim) + "], got " + std::to_string(dim));
  }

  MatD a = x.cast<double>();
  VecD mean = a.colwise().mean();
  a.rowwise() -= mean.transpose();

  PcaModel model;
  model.mean = mean;
  model.fitted_rows = n;
  model.seed = opts.seed;
  model.total_variance = n > 1 ? a.squaredNorm() / static_cast<double>(n - 1) : 0.0;

  int64_t l = std::min<int64_t>(dim + opts.oversample, max_dim);
  Rng rng(mix64(opts.seed ^ 0x9CA0ULL));
  MatD sketch(g, l);
  for (int64_t j = 0; j < l; ++j) {
    for (int64_t i = 0; i < g; ++i) sketch(i, j) = rng.normal();
  }

  MatD q = thin_q(a * sketch);
  for (int it = 0; it < opts.power_iters; ++it) {
    MatD z = thin_q(a.transpose() * q);
    q = thin_q(a * z);
  }
  MatD b = q.transpose() * a;  // l x g
  Eigen::JacobiSVD<MatD> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

  model.components = svd.matrixV().leftCols(dim);
  model.singular_values = svd.singularValues().head(dim);

  // Sign convention: largest-|loading| entry of each component is positive.
  for (int j = 0; j < dim; ++j) {
    int64_t idx = 0;
    model.components.col(j).cwiseAbs().maxCoeff(&idx);
    if (model.components(idx, j) < 0) model.components.col(j) = -model.components.col(j);
  }

  if (model.singular_values(dim - 1) < 1e-10 * model.singular_values(0)) {
    warn("fit_pca: trailing singular value is numerically zero (rank-deficient input)");
  }
  return model;
}

MatF pca_transform(const PcaModel& model, const MatF& x) {
  if (x.cols() != model.mean.size()) {
    throw Error(ErrorCode::validation,
                "pca_transform: input has " + std::to_string(x.cols()) +
                    " genes, model expects " + std::to_string(model.mean.size()));
  }
  MatD a = x.cast<double>();
  a.rowwise() -= model.mean.transpose();
  MatD scores = a * model.components;
  return scores.cast<float>();
}

MatF random_embedding(int64_t n_rows, int dim, uint64_t seed) {
  if (n_rows < 1 || dim < 1) {
    throw Error(ErrorCode::config, "random_embedding: n_rows and dim must be positive");
  }
  MatF out(n_rows, dim);
  Rng base(mix64(seed ^ 0xA4D0ULL));
  parallel_for(static_cast<size_t>(n_rows), [&](size_t i) {
    Rng row = base.stream(i);
    for (int j = 0; j < dim; ++j) out(static_cast<int64_t>(i), j) = static_cast<float>(row.normal());
  });
  return out;
}

}  // namespace pbench
