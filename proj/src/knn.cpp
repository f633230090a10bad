#include "perturbench/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "perturbench/common.hpp"
#include "perturbench/parallel.hpp"

namespace pbench {

KnnResult knn_accuracy(const MatD& reference, const std::vector<int32_t>& ref_labels,
                       const MatD& query, const std::vector<int32_t>& query_labels,
                       const std::vector<int>& ns, const KnnOptions& opts) {
  int64_t m = reference.rows();
  int64_t n = query.rows();
  if (m < 1 || n < 1) throw Error(ErrorCode::validation, "knn_accuracy: empty reference or query");
  if (reference.cols() != query.cols()) {
    throw Error(ErrorCode::validation, "knn_accuracy: dimension mismatch");
  }
  if (ref_labels.size() != static_cast<size_t>(m) ||
      query_labels.size() != static_cast<size_t>(n)) {
    throw Error(ErrorCode::validation, "knn_accuracy: label counts disagree with rows");
  }
  if (ns.empty()) throw Error(ErrorCode::config, "knn_accuracy: no N values requested");
  for (int nn : ns) {
    if (nn < 1) throw Error(ErrorCode::config, "knn_accuracy: N must be >= 1");
  }
  int k = opts.k > 0 ? opts.k : static_cast<int>(std::floor(std::sqrt(static_cast<double>(m))));
  if (k < 1 || k > m) {
    throw Error(ErrorCode::validation, "knn_accuracy: k " + std::to_string(k) +
                                           " out of range for " + std::to_string(m) +
                                           " reference rows");
  }

  int32_t n_labels = 0;
  for (int32_t l : ref_labels) n_labels = std::max(n_labels, l + 1);
  for (int32_t l : query_labels) n_labels = std::max(n_labels, l + 1);

  VecD ref_sq(m);
  for (int64_t i = 0; i < m; ++i) ref_sq(i) = reference.row(i).squaredNorm();

  std::vector<std::vector<int64_t>> correct(ns.size(), std::vector<int64_t>());
  for (auto& c : correct) c.assign(static_cast<size_t>(n), 0);

  const int64_t block = 256;
  int64_t n_blocks = (n + block - 1) / block;
  parallel_for(static_cast<size_t>(n_blocks), [&](size_t bi) {
    int64_t begin = static_cast<int64_t>(bi) * block;
    int64_t end = std::min(n, begin + block);
    MatD dots = query.middleRows(begin, end - begin) * reference.transpose();
    std::vector<std::pair<double, int64_t>> cand(m);
    for (int64_t qi = begin; qi < end; ++qi) {
      double q_sq = query.row(qi).squaredNorm();
      for (int64_t j = 0; j < m; ++j) {
        double d2 = q_sq + ref_sq(j) - 2.0 * dots(qi - begin, j);
        cand[j] = {d2 < 0 ? 0.0 : d2, j};
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());

      if (opts.ranked_vote) {
        // Labels ranked by neighbor frequency; ties by smaller mean distance,
        // then label index.
        std::vector<int64_t> count(n_labels, 0);
        std::vector<double> dist_sum(n_labels, 0.0);
        for (int j = 0; j < k; ++j) {
          int32_t l = ref_labels[cand[j].second];
          count[l]++;
          dist_sum[l] += cand[j].first;
        }
        std::vector<int32_t> present;
        for (int32_t l = 0; l < n_labels; ++l) {
          if (count[l] > 0) present.push_back(l);
        }
        std::sort(present.begin(), present.end(), [&](int32_t a, int32_t b) {
          if (count[a] != count[b]) return count[a] > count[b];
          double ma = dist_sum[a] / count[a], mb = dist_sum[b] / count[b];
          if (ma != mb) return ma < mb;
          return a < b;
        });
        int32_t truth = query_labels[qi];
        int pos = -1;
        for (size_t r = 0; r < present.size(); ++r) {
          if (present[r] == truth) {
            pos = static_cast<int>(r);
            break;
          }
        }
        for (size_t ni = 0; ni < ns.size(); ++ni) {
          if (pos >= 0 && pos < ns[ni]) correct[ni][qi] = 1;
        }
      } else {
        int32_t truth = query_labels[qi];
        for (size_t ni = 0; ni < ns.size(); ++ni) {
          int limit = std::min(ns[ni], k);
          for (int j = 0; j < limit; ++j) {
            if (ref_labels[cand[j].second] == truth) {
              correct[ni][qi] = 1;
              break;
            }
          }
        }
      }
    }
  });

  KnnResult out;
  out.k_used = k;
  for (size_t ni = 0; ni < ns.size(); ++ni) {
    int64_t hits = 0;
    for (int64_t qi = 0; qi < n; ++qi) hits += correct[ni][qi];
    out.topn.push_back(static_cast<double>(hits) / static_cast<double>(n));
  }
  return out;
}

}  // namespace pbench
