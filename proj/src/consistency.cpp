#include "perturbench/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "perturbench/common.hpp"

namespace pbench {

double avg_cosine_similarity(const MatD& rows) {
  int64_t n = rows.rows();
  if (n < 1) throw Error(ErrorCode::validation, "avg_cosine_similarity: empty input");
  // Mean over all ordered pairs (diagonal included) of unit rows reduces to
  // ||sum of unit rows||^2 / n^2.
  VecD acc = VecD::Zero(rows.cols());
  int64_t kept = 0;
  int64_t dropped = 0;
  for (int64_t i = 0; i < n; ++i) {
    double norm = rows.row(i).norm();
    if (norm <= 0.0) {
      ++dropped;
      continue;
    }
    acc += rows.row(i).transpose() / norm;
    ++kept;
  }
  if (kept == 0) {
    throw Error(ErrorCode::validation, "avg_cosine_similarity: all rows have zero norm");
  }
  if (dropped > 0) {
    warn("avg_cosine_similarity: dropped " + std::to_string(dropped) + " zero-norm rows");
  }
  return acc.squaredNorm() / (static_cast<double>(kept) * static_cast<double>(kept));
}

NullSelection select_null_perturbations(const ExpressionMatrix& expr, const Metadata& meta,
                                        double threshold, size_t min_null) {
  if (expr.values.rows() != static_cast<int64_t>(meta.n_samples())) {
    throw Error(ErrorCode::validation, "select_null_perturbations: expression rows disagree");
  }
  // Work on lognorm control expression; raw input is normalized on the fly.
  std::vector<int64_t> ctl;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) ctl.push_back(static_cast<int64_t>(i));
  }
  if (ctl.empty()) {
    throw Error(ErrorCode::validation, "select_null_perturbations: no control samples");
  }

  int64_t g = expr.values.cols();
  VecD mean_ctl = VecD::Zero(g);
  int64_t used = 0;
  for (int64_t r : ctl) {
    if (expr.layout == ExprLayout::raw_counts) {
      double total = expr.values.row(r).cast<double>().sum();
      if (total <= 0) continue;
      double f = 1e4 / total;
      for (int64_t j = 0; j < g; ++j) {
        mean_ctl(j) += std::log1p(static_cast<double>(expr.values(r, j)) * f);
      }
    } else {
      mean_ctl += expr.values.row(r).cast<double>().transpose();
    }
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::validation,
                "select_null_perturbations: all control rows have zero counts");
  }
  mean_ctl /= static_cast<double>(used);

  std::map<std::string, int64_t> gene_index;
  for (size_t j = 0; j < expr.gene_ids.size(); ++j) {
    gene_index[expr.gene_ids[j]] = static_cast<int64_t>(j);
  }

  NullSelection out;
  std::set<std::string> controls;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) controls.insert(meta.perturbation[i]);
  }
  for (const auto& pert : meta.pert_names) {
    if (controls.count(pert)) continue;
    auto it = gene_index.find(pert);
    if (it == gene_index.end()) {
      ++out.n_unmatched;
      continue;
    }
    if (mean_ctl(it->second) < threshold) out.null_perturbations.insert(pert);
  }
  if (out.n_unmatched > 0) {
    warn("select_null_perturbations: " + std::to_string(out.n_unmatched) +
         " perturbation labels have no matching gene id");
  }
  if (out.null_perturbations.size() < min_null) {
    throw Error(ErrorCode::validation,
                "select_null_perturbations: only " +
                    std::to_string(out.null_perturbations.size()) +
                    " null perturbations found (need " + std::to_string(min_null) +
                    "); raise the expression threshold or lower min_null");
  }
  return out;
}

ConsistencyResult consistency_test(const MatD& emb, const Metadata& meta,
                                   const std::set<std::string>& null_perturbations,
                                   const ConsistencyOptions& opts) {
  if (emb.rows() != static_cast<int64_t>(meta.n_samples())) {
    throw Error(ErrorCode::validation, "consistency_test: embedding rows disagree with metadata");
  }
  if (null_perturbations.empty()) {
    throw Error(ErrorCode::validation, "consistency_test: empty null set");
  }
  std::map<std::string, std::vector<int64_t>> rows_by_pert;
  std::set<std::string> controls;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    rows_by_pert[meta.perturbation[i]].push_back(static_cast<int64_t>(i));
    if (meta.is_control[i]) controls.insert(meta.perturbation[i]);
  }

  auto avgsim_of = [&](const std::vector<int64_t>& rows) {
    MatD sub(static_cast<int64_t>(rows.size()), emb.cols());
    for (size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<int64_t>(r)) = emb.row(rows[r]);
    return avg_cosine_similarity(sub);
  };

  ConsistencyResult res;
  for (const auto& pert : null_perturbations) {
    auto it = rows_by_pert.find(pert);
    if (it == rows_by_pert.end()) {
      throw Error(ErrorCode::validation,
                  "consistency_test: null perturbation '" + pert + "' has no samples");
    }
    res.null_avgsim.push_back(avgsim_of(it->second));
  }
  std::sort(res.null_avgsim.begin(), res.null_avgsim.end());
  res.n_null = res.null_avgsim.size();
  double k = static_cast<double>(res.n_null);

  size_t significant = 0;
  for (const auto& [pert, rows] : rows_by_pert) {
    if (controls.count(pert) || null_perturbations.count(pert) || rows.empty()) continue;
    double obs = avgsim_of(rows);
    double count;
    if (opts.tail == TestTail::right) {
      // #{null >= obs}
      auto lb = std::lower_bound(res.null_avgsim.begin(), res.null_avgsim.end(), obs);
      count = static_cast<double>(res.null_avgsim.end() - lb);
    } else {
      // #{null <= obs}
      auto ub = std::upper_bound(res.null_avgsim.begin(), res.null_avgsim.end(), obs);
      count = static_cast<double>(ub - res.null_avgsim.begin());
    }
    double p = std::max(count, 1.0) / k;
    res.avgsim[pert] = obs;
    res.p_value[pert] = p;
    if (p < opts.alpha) ++significant;
  }
  res.n_tested = res.avgsim.size();
  if (res.n_tested == 0) {
    throw Error(ErrorCode::validation, "consistency_test: no testable perturbations");
  }
  res.fraction_significant =
      static_cast<double>(significant) / static_cast<double>(res.n_tested);
  return res;
}

}  // namespace pbench
