#include "perturbench/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "perturbench/common.hpp"

// Everything here favors obviousness over speed and shares no kernels with
// the production implementations.

namespace pbench::reference {

namespace {

double naive_entropy_exp(const std::vector<double>& dist, double beta) {
  double dmin = dist[0];
  for (double d : dist) dmin = std::min(dmin, d);
  double z = 0.0;
  for (double d : dist) z += std::exp(-beta * (d - dmin));
  double h = 0.0;
  for (double d : dist) {
    double p = std::exp(-beta * (d - dmin)) / z;
    if (p > 0) h -= p * std::log(p);
  }
  return std::exp(h);
}

std::vector<double> naive_kernel_probs(const std::vector<double>& dist, double perplexity) {
  bool all_equal = true;
  for (double d : dist) {
    if (d != dist[0]) all_equal = false;
  }
  if (all_equal) return std::vector<double>(dist.size(), 1.0 / dist.size());

  double beta = 1.0, lo = 0.0, hi = 0.0;
  bool has_lo = false, has_hi = false;
  for (int it = 0; it < 100; ++it) {
    double eh = naive_entropy_exp(dist, beta);
    if (std::fabs(eh / perplexity - 1.0) <= 1e-5) break;
    if (eh > perplexity) {
      lo = beta;
      has_lo = true;
      beta = has_hi ? 0.5 * (beta + hi) : beta * 2.0;
    } else {
      hi = beta;
      has_hi = true;
      beta = has_lo ? 0.5 * (beta + lo) : beta * 0.5;
    }
  }
  double dmin = *std::min_element(dist.begin(), dist.end());
  double z = 0.0;
  for (double d : dist) z += std::exp(-beta * (d - dmin));
  std::vector<double> p;
  for (double d : dist) p.push_back(std::exp(-beta * (d - dmin)) / z);
  return p;
}

}  // namespace

double naive_ilisi_raw(const MatD& emb, const std::vector<int32_t>& batch_idx,
                       double perplexity, int neighbors) {
  int64_t n = emb.rows();
  int n_batches = 0;
  for (int32_t b : batch_idx) n_batches = std::max(n_batches, b + 1);
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int64_t c = 0; c < emb.cols(); ++c) {
        double diff = emb(i, c) - emb(j, c);
        d2 += diff * diff;
      }
      all.emplace_back(d2, j);
    }
    std::sort(all.begin(), all.end());
    std::vector<double> dist;
    for (int j = 0; j < neighbors; ++j) dist.push_back(all[j].first);
    std::vector<double> probs = naive_kernel_probs(dist, perplexity);
    std::vector<double> per_batch(n_batches, 0.0);
    for (int j = 0; j < neighbors; ++j) per_batch[batch_idx[all[j].second]] += probs[j];
    double simpson = 0.0;
    for (double s : per_batch) simpson += s * s;
    total += 1.0 / simpson;
  }
  return total / static_cast<double>(n);
}

double naive_avg_cosine(const MatD& rows) {
  std::vector<VecD> unit;
  for (int64_t i = 0; i < rows.rows(); ++i) {
    double norm = 0.0;
    for (int64_t j = 0; j < rows.cols(); ++j) norm += rows(i, j) * rows(i, j);
    norm = std::sqrt(norm);
    if (norm > 0) unit.push_back(rows.row(i).transpose() / norm);
  }
  if (unit.empty()) throw Error(ErrorCode::validation, "naive_avg_cosine: all rows zero");
  double total = 0.0;
  for (const auto& a : unit) {
    for (const auto& b : unit) total += a.dot(b);
  }
  return total / (static_cast<double>(unit.size()) * static_cast<double>(unit.size()));
}

double naive_knn_topn(const MatD& reference, const std::vector<int32_t>& ref_labels,
                      const MatD& query, const std::vector<int32_t>& query_labels, int k, int n) {
  int64_t hits = 0;
  for (int64_t q = 0; q < query.rows(); ++q) {
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t r = 0; r < reference.rows(); ++r) {
      double d2 = 0.0;
      for (int64_t c = 0; c < reference.cols(); ++c) {
        double diff = query(q, c) - reference(r, c);
        d2 += diff * diff;
      }
      all.emplace_back(d2, r);
    }
    std::sort(all.begin(), all.end());
    std::map<int32_t, std::pair<int, double>> votes;  // label -> (count, dist sum)
    for (int j = 0; j < k; ++j) {
      auto& v = votes[ref_labels[all[j].second]];
      v.first += 1;
      v.second += all[j].first;
    }
    std::vector<int32_t> order;
    for (const auto& [label, _] : votes) order.push_back(label);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
      const auto& va = votes[a];
      const auto& vb = votes[b];
      if (va.first != vb.first) return va.first > vb.first;
      double ma = va.second / va.first, mb = vb.second / vb.first;
      if (ma != mb) return ma < mb;
      return a < b;
    });
    for (int j = 0; j < std::min<int>(n, static_cast<int>(order.size())); ++j) {
      if (order[j] == query_labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(query.rows());
}

double naive_percentile(const std::vector<double>& values, double pct) {
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double rank = pct / 100.0 * static_cast<double>(v.size() - 1);
  auto lo = static_cast<size_t>(rank);
  if (lo + 1 >= v.size()) return v.back();
  double w = rank - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[lo + 1] * w;
}

std::vector<std::pair<std::string, std::string>> naive_predicted_links(
    const MatD& centroids, const std::vector<std::string>& labels, double low_pct,
    double high_pct) {
  int64_t p = centroids.rows();
  std::vector<double> sims;
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = i + 1; j < p; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (int64_t c = 0; c < centroids.cols(); ++c) {
        dot += centroids(i, c) * centroids(j, c);
        ni += centroids(i, c) * centroids(i, c);
        nj += centroids(j, c) * centroids(j, c);
      }
      sims.push_back(dot / std::sqrt(ni * nj));
      pairs.emplace_back(i, j);
    }
  }
  double lo = naive_percentile(sims, low_pct);
  double hi = naive_percentile(sims, high_pct);
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t t = 0; t < sims.size(); ++t) {
    if (sims[t] <= lo || sims[t] >= hi) {
      std::string a = labels[pairs[t].first];
      std::string b = labels[pairs[t].second];
      if (b < a) std::swap(a, b);
      out.emplace_back(a, b);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double naive_spearman_rows(const MatD& pred, const MatD& actual) {
  auto ranks = [](std::vector<double> v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    size_t i = 0;
    while (i < idx.size()) {
      size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * (i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  double total = 0.0;
  for (int64_t row = 0; row < pred.rows(); ++row) {
    std::vector<double> a, b;
    for (int64_t c = 0; c < pred.cols(); ++c) {
      a.push_back(pred(row, c));
      b.push_back(actual(row, c));
    }
    bool const_a = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; });
    bool const_b = std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; });
    if (const_a || const_b) continue;  // contributes 0
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
      ma += ra[i];
      mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double num = 0, va = 0, vb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
      num += (ra[i] - ma) * (rb[i] - mb);
      va += (ra[i] - ma) * (ra[i] - ma);
      vb += (rb[i] - mb) * (rb[i] - mb);
    }
    total += num / std::sqrt(va * vb);
  }
  return total / static_cast<double>(pred.rows());
}

double naive_structural_integrity(const MatD& pred, const MatD& actual, const Metadata& meta) {
  double dist = 0.0, dmax = 0.0;
  int64_t batches = 0;
  for (size_t b = 0; b < meta.batch_names.size(); ++b) {
    std::vector<int64_t> ctl, per;
    for (size_t i = 0; i < meta.n_samples(); ++i) {
      if (meta.batch[i] != meta.batch_names[b]) continue;
      (meta.is_control[i] ? ctl : per).push_back(static_cast<int64_t>(i));
    }
    if (ctl.empty() || per.empty()) continue;
    VecD mp = VecD::Zero(pred.cols()), ma = VecD::Zero(pred.cols());
    for (int64_t r : ctl) {
      mp += pred.row(r).transpose();
      ma += actual.row(r).transpose();
    }
    mp /= static_cast<double>(ctl.size());
    ma /= static_cast<double>(ctl.size());
    double sd = 0.0, sa = 0.0;
    for (int64_t r : per) {
      for (int64_t j = 0; j < pred.cols(); ++j) {
        double cp = pred(r, j) - mp(j);
        double ca = actual(r, j) - ma(j);
        sd += (cp - ca) * (cp - ca);
        sa += ca * ca;
      }
    }
    dist += std::sqrt(sd) / static_cast<double>(per.size());
    dmax += std::sqrt(sa) / static_cast<double>(per.size());
    ++batches;
  }
  if (batches == 0) throw Error(ErrorCode::validation, "naive_structural_integrity: no usable batch");
  dist /= static_cast<double>(batches);
  dmax = 2.0 * dmax / static_cast<double>(batches);
  double integrity = 1.0 - dist / dmax;
  return std::clamp(integrity, 0.0, 1.0);
}

std::vector<double> naive_svd_singular_values(const MatD& centered) {
  // One-sided Jacobi: rotate column pairs until all are mutually orthogonal;
  // singular values are then the column norms.
  MatD a = centered;
  int64_t m = a.cols();
  const double eps = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (int64_t p = 0; p < m - 1; ++p) {
      for (int64_t q = p + 1; q < m; ++q) {
        double alpha = a.col(p).squaredNorm();
        double beta = a.col(q).squaredNorm();
        double gamma = a.col(p).dot(a.col(q));
        if (std::fabs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0 ? 1.0 : -1.0) /
                   (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double cs = 1.0 / std::sqrt(1.0 + t * t);
        double sn = cs * t;
        for (int64_t i = 0; i < a.rows(); ++i) {
          double ap = a(i, p);
          double aq = a(i, q);
          a(i, p) = cs * ap - sn * aq;
          a(i, q) = sn * ap + cs * aq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv;
  for (int64_t j = 0; j < m; ++j) sv.push_back(a.col(j).norm());
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  return sv;
}

OracleReport oracle_suite(const Dataset& ds, const MatD& emb, int knn_k, int pca_dim) {
  int64_t n = static_cast<int64_t>(ds.n_samples());
  if (n > 500) {
    throw Error(ErrorCode::config, "oracle_suite: naive paths are O(n^2); limit is 500 samples");
  }
  if (!ds.expression) throw Error(ErrorCode::validation, "oracle_suite: expression required");

  OracleReport rep;
  int neighbors = std::min<int>(90, static_cast<int>(n) - 1);
  double perplexity = std::min(30.0, neighbors / 3.0);
  rep.ilisi_raw = naive_ilisi_raw(emb, ds.meta.batch_idx, perplexity, neighbors);

  std::string first_pert;
  for (const auto& name : ds.meta.pert_names) {
    if (name != ds.control_label) {
      first_pert = name;
      break;
    }
  }
  std::vector<int64_t> rows;
  for (size_t i = 0; i < ds.n_samples(); ++i) {
    if (ds.meta.perturbation[i] == first_pert) rows.push_back(static_cast<int64_t>(i));
  }
  MatD sub(static_cast<int64_t>(rows.size()), emb.cols());
  for (size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<int64_t>(i)) = emb.row(rows[i]);
  rep.avgsim_first_pert = naive_avg_cosine(sub);

  std::vector<int64_t> even, odd;
  for (int64_t i = 0; i < n; ++i) (i % 2 == 0 ? even : odd).push_back(i);
  MatD ref(static_cast<int64_t>(even.size()), emb.cols());
  MatD query(static_cast<int64_t>(odd.size()), emb.cols());
  std::vector<int32_t> ref_labels, query_labels;
  for (size_t i = 0; i < even.size(); ++i) {
    ref.row(static_cast<int64_t>(i)) = emb.row(even[i]);
    ref_labels.push_back(ds.meta.pert_idx[even[i]]);
  }
  for (size_t i = 0; i < odd.size(); ++i) {
    query.row(static_cast<int64_t>(i)) = emb.row(odd[i]);
    query_labels.push_back(ds.meta.pert_idx[odd[i]]);
  }
  int k = std::min<int>(knn_k, static_cast<int>(even.size()));
  rep.knn_top1 = naive_knn_topn(ref, ref_labels, query, query_labels, k, 1);

  MatD expr = ds.expression->values.cast<double>();
  rep.spearman_identity = naive_spearman_rows(expr, expr);
  rep.structural_identity = naive_structural_integrity(expr, expr, ds.meta);

  MatD centered = expr;
  VecD mean = centered.colwise().mean();
  centered.rowwise() -= mean.transpose();
  auto sv = naive_svd_singular_values(centered);
  rep.pca_singular_values.assign(sv.begin(),
                                 sv.begin() + std::min<size_t>(sv.size(), pca_dim));
  return rep;
}

}  // namespace pbench::reference
