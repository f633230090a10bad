#include "perturbench/postprocess.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "perturbench/common.hpp"

namespace pbench {

namespace {

struct ControlStats {
  bool has_controls = false;
  VecD mean;
  VecD std;  // unscaled; filled by with_std
};

// Control mean/std per batch plus pooled; batches without controls fall back
// to the pooled values (callers warn).
ControlStats pooled_controls(const MatF& emb, const Metadata& meta, bool with_std) {
  int64_t d = emb.cols();
  ControlStats s;
  s.mean = VecD::Zero(d);
  s.std = VecD::Ones(d);
  int64_t n_ctl = 0;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (!meta.is_control[i]) continue;
    s.mean += emb.row(static_cast<int64_t>(i)).cast<double>().transpose();
    ++n_ctl;
  }
  if (n_ctl == 0) return s;
  s.has_controls = true;
  s.mean /= static_cast<double>(n_ctl);
  if (with_std && n_ctl > 1) {
    VecD ss = VecD::Zero(d);
    for (size_t i = 0; i < meta.n_samples(); ++i) {
      if (!meta.is_control[i]) continue;
      VecD dev = emb.row(static_cast<int64_t>(i)).cast<double>().transpose() - s.mean;
      ss += dev.cwiseProduct(dev);
    }
    s.std = (ss / static_cast<double>(n_ctl - 1)).cwiseSqrt();
  }
  return s;
}

void batch_control_means(const MatF& emb, const Metadata& meta, const VecD& fallback,
                         std::vector<VecD>& means, std::vector<uint8_t>& fell_back) {
  size_t n_batches = meta.batch_names.size();
  means.assign(n_batches, VecD::Zero(emb.cols()));
  std::vector<int64_t> counts(n_batches, 0);
  fell_back.assign(n_batches, 0);
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (!meta.is_control[i]) continue;
    means[meta.batch_idx[i]] += emb.row(static_cast<int64_t>(i)).cast<double>().transpose();
    counts[meta.batch_idx[i]]++;
  }
  for (size_t b = 0; b < n_batches; ++b) {
    if (counts[b] > 0) {
      means[b] /= static_cast<double>(counts[b]);
    } else {
      means[b] = fallback;
      fell_back[b] = 1;
    }
  }
}

void check_rows(const MatF& emb, const Metadata& meta, const char* what) {
  if (emb.rows() != static_cast<int64_t>(meta.n_samples())) {
    throw Error(ErrorCode::validation, std::string(what) + ": embedding rows disagree with metadata");
  }
}

}  // namespace

MatF center_embedding(const MatF& emb, const Metadata& meta, CenterMode mode) {
  check_rows(emb, meta, "center_embedding");
  ControlStats pooled = pooled_controls(emb, meta, false);
  if (!pooled.has_controls) {
    throw Error(ErrorCode::validation, "center_embedding: dataset has no control samples");
  }
  MatF out(emb.rows(), emb.cols());
  if (mode == CenterMode::global_control) {
    for (int64_t i = 0; i < emb.rows(); ++i) {
      out.row(i) = (emb.row(i).cast<double>() - pooled.mean.transpose()).cast<float>();
    }
    return out;
  }
  std::vector<VecD> means;
  std::vector<uint8_t> fell_back;
  batch_control_means(emb, meta, pooled.mean, means, fell_back);
  size_t n_fallback = 0;
  for (uint8_t f : fell_back) n_fallback += f;
  if (n_fallback > 0) {
    warn("center_embedding: " + std::to_string(n_fallback) +
         " batches have no controls; using pooled control mean");
  }
  for (int64_t i = 0; i < emb.rows(); ++i) {
    out.row(i) = (emb.row(i).cast<double>() - means[meta.batch_idx[i]].transpose()).cast<float>();
  }
  return out;
}

MatF center_scale_embedding(const MatF& emb, const Metadata& meta, CenterMode mode) {
  check_rows(emb, meta, "center_scale_embedding");
  // Per-batch mode scales by that batch's control std; global by pooled std.
  ControlStats pooled = pooled_controls(emb, meta, true);
  if (!pooled.has_controls) {
    throw Error(ErrorCode::validation, "center_scale_embedding: dataset has no control samples");
  }
  int64_t d = emb.cols();
  auto safe_inv = [&](const VecD& sd, size_t& zeroed) {
    VecD inv(d);
    for (int64_t j = 0; j < d; ++j) {
      if (sd(j) > 1e-12) {
        inv(j) = 1.0 / sd(j);
      } else {
        inv(j) = 0.0;  // constant control dimension: zero instead of amplifying
        ++zeroed;
      }
    }
    return inv;
  };

  MatF out(emb.rows(), d);
  size_t zeroed = 0;
  if (mode == CenterMode::global_control) {
    VecD inv = safe_inv(pooled.std, zeroed);
    for (int64_t i = 0; i < emb.rows(); ++i) {
      VecD dev = emb.row(i).cast<double>().transpose() - pooled.mean;
      out.row(i) = dev.cwiseProduct(inv).transpose().cast<float>();
    }
  } else {
    std::vector<VecD> means;
    std::vector<uint8_t> fell_back;
    batch_control_means(emb, meta, pooled.mean, means, fell_back);
    size_t n_batches = meta.batch_names.size();
    std::vector<VecD> inv_std(n_batches);
    size_t n_fallback = 0;
    for (size_t b = 0; b < n_batches; ++b) {
      if (fell_back[b]) {
        inv_std[b] = safe_inv(pooled.std, zeroed);
        ++n_fallback;
        continue;
      }
      VecD ss = VecD::Zero(d);
      int64_t cnt = 0;
      for (size_t i = 0; i < meta.n_samples(); ++i) {
        if (!meta.is_control[i] || meta.batch_idx[i] != static_cast<int32_t>(b)) continue;
        VecD dev = emb.row(static_cast<int64_t>(i)).cast<double>().transpose() - means[b];
        ss += dev.cwiseProduct(dev);
        ++cnt;
      }
      VecD sd = cnt > 1 ? VecD((ss / static_cast<double>(cnt - 1)).cwiseSqrt()) : pooled.std;
      inv_std[b] = safe_inv(sd, zeroed);
    }
    if (n_fallback > 0) {
      warn("center_scale_embedding: " + std::to_string(n_fallback) +
           " batches have no controls; using pooled control statistics");
    }
    for (int64_t i = 0; i < emb.rows(); ++i) {
      int32_t b = meta.batch_idx[i];
      VecD dev = emb.row(i).cast<double>().transpose() - means[b];
      out.row(i) = dev.cwiseProduct(inv_std[b]).transpose().cast<float>();
    }
  }
  if (zeroed > 0) {
    warn("center_scale_embedding: " + std::to_string(zeroed) +
         " dimensions had (near-)zero control spread and were zeroed");
  }
  return out;
}

TvnTransform fit_tvn(const MatF& emb, const Metadata& meta) {
  check_rows(emb, meta, "fit_tvn");
  ControlStats pooled = pooled_controls(emb, meta, true);
  if (!pooled.has_controls) {
    throw Error(ErrorCode::validation, "fit_tvn: dataset has no control samples");
  }
  int64_t d = emb.cols();
  std::vector<int64_t> ctl;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) ctl.push_back(static_cast<int64_t>(i));
  }
  if (ctl.size() < 2) {
    throw Error(ErrorCode::validation, "fit_tvn: needs at least 2 control samples");
  }
  if (static_cast<int64_t>(ctl.size()) <= d) {
    warn("fit_tvn: control count " + std::to_string(ctl.size()) +
         " <= dimension " + std::to_string(d) + "; covariance is rank-deficient");
  }

  TvnTransform t;
  t.mean = pooled.mean;
  t.scale = pooled.std.cwiseMax(1e-8);

  MatD z(static_cast<int64_t>(ctl.size()), d);
  for (size_t i = 0; i < ctl.size(); ++i) {
    z.row(static_cast<int64_t>(i)) =
        (emb.row(ctl[i]).cast<double>().transpose() - t.mean).cwiseQuotient(t.scale).transpose();
  }
  MatD cov = z.transpose() * z / static_cast<double>(ctl.size() - 1);

  Eigen::SelfAdjointEigenSolver<MatD> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::compute, "fit_tvn: eigendecomposition failed");
  }
  VecD lam = eig.eigenvalues();
  double floor = 1e-6 * lam.maxCoeff();
  if (!(floor > 0)) floor = 1e-12;
  VecD inv_sqrt(d);
  for (int64_t j = 0; j < d; ++j) inv_sqrt(j) = 1.0 / std::sqrt(std::max(lam(j), floor));
  t.whiten = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  return t;
}

MatF apply_tvn(const TvnTransform& t, const MatF& emb) {
  if (emb.cols() != t.mean.size()) {
    throw Error(ErrorCode::validation, "apply_tvn: dimension mismatch");
  }
  MatF out(emb.rows(), emb.cols());
  for (int64_t i = 0; i < emb.rows(); ++i) {
    VecD z = (emb.row(i).cast<double>().transpose() - t.mean).cwiseQuotient(t.scale);
    out.row(i) = (t.whiten * z).transpose().cast<float>();
  }
  return out;
}

}  // namespace pbench
