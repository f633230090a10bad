#include "perturbench/recall.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "perturbench/common.hpp"

namespace pbench {

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorCode::validation, "percentile: empty input");
  if (!(pct >= 0.0 && pct <= 100.0)) {
    throw Error(ErrorCode::config, "percentile: pct must be in [0, 100]");
  }
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(pos));
  size_t hi = static_cast<size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

CentroidSet aggregate_embeddings(const MatD& emb, const Metadata& meta, bool include_controls) {
  if (emb.rows() != static_cast<int64_t>(meta.n_samples())) {
    throw Error(ErrorCode::validation, "aggregate_embeddings: rows disagree with metadata");
  }
  std::set<std::string> controls;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) controls.insert(meta.perturbation[i]);
  }
  std::map<std::string, std::pair<VecD, int64_t>> sums;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    const std::string& p = meta.perturbation[i];
    if (!include_controls && controls.count(p)) continue;
    auto it = sums.find(p);
    if (it == sums.end()) {
      sums.emplace(p, std::make_pair(VecD(emb.row(static_cast<int64_t>(i)).transpose()),
                                     int64_t{1}));
    } else {
      it->second.first += emb.row(static_cast<int64_t>(i)).transpose();
      it->second.second += 1;
    }
  }
  if (sums.empty()) {
    throw Error(ErrorCode::validation, "aggregate_embeddings: no non-control perturbations");
  }
  CentroidSet cs;
  cs.centroids.resize(static_cast<int64_t>(sums.size()), emb.cols());
  int64_t r = 0;
  for (const auto& [label, sc] : sums) {
    cs.labels.push_back(label);
    cs.centroids.row(r) = (sc.first / static_cast<double>(sc.second)).transpose();
    ++r;
  }
  return cs;
}

PredictedLinks predicted_links(const CentroidSet& cs, double low_pct, double high_pct) {
  int64_t p = cs.centroids.rows();
  if (p < 2) throw Error(ErrorCode::validation, "predicted_links: need at least 2 centroids");
  if (!(low_pct < high_pct)) {
    throw Error(ErrorCode::config, "predicted_links: low_pct must be below high_pct");
  }
  std::vector<VecD> unit(p);
  for (int64_t i = 0; i < p; ++i) {
    double norm = cs.centroids.row(i).norm();
    if (norm <= 0.0) {
      throw Error(ErrorCode::validation,
                  "predicted_links: centroid '" + cs.labels[i] + "' has zero norm");
    }
    unit[i] = cs.centroids.row(i).transpose() / norm;
  }

  std::vector<double> sims;
  sims.reserve(static_cast<size_t>(p) * (p - 1) / 2);
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = i + 1; j < p; ++j) sims.push_back(unit[i].dot(unit[j]));
  }

  PredictedLinks out;
  out.n_pairs = sims.size();
  out.low_cut = percentile(sims, low_pct);
  out.high_cut = percentile(sims, high_pct);
  size_t idx = 0;
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = i + 1; j < p; ++j, ++idx) {
      double s = sims[idx];
      if (s <= out.low_cut || s >= out.high_cut) {
        const std::string& a = cs.labels[i];
        const std::string& b = cs.labels[j];
        out.links.emplace_back(a < b ? a : b, a < b ? b : a);
      }
    }
  }
  std::sort(out.links.begin(), out.links.end());
  return out;
}

RecallResult link_recall(const PredictedLinks& pred, const LinkDatabase& db,
                         const std::vector<std::string>& universe) {
  std::set<std::string> uni(universe.begin(), universe.end());
  RecallResult out;
  for (const auto& [a, b] : db.links) {
    if (!uni.count(a) || !uni.count(b)) continue;
    ++out.n_db_in_universe;
    if (std::binary_search(pred.links.begin(), pred.links.end(), std::make_pair(a, b))) {
      ++out.n_hit;
    }
  }
  if (out.n_db_in_universe == 0) {
    throw Error(ErrorCode::validation,
                "link_recall: no database links fall inside the evaluated universe");
  }
  out.recall = static_cast<double>(out.n_hit) / static_cast<double>(out.n_db_in_universe);
  return out;
}

}  // namespace pbench
