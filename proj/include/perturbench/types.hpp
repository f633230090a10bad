#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace pbench {

/// Row-major float32 payload matrix: matches the on-disk layout so bundles
/// round-trip bit-exactly.
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;

enum class ExprLayout { raw_counts, lognorm };

/// Columnar per-sample annotations plus derived integer codings.
struct Metadata {
  std::vector<std::string> sample_id;
  std::vector<std::string> perturbation;
  std::vector<std::string> batch;
  std::vector<uint8_t> is_control;
  std::vector<std::string> cell_line;

  // Derived on load / after edits via reindex(): codes into *_names.
  std::vector<int32_t> batch_idx;
  std::vector<int32_t> pert_idx;
  std::vector<std::string> batch_names;  // sorted, unique
  std::vector<std::string> pert_names;   // sorted, unique

  size_t n_samples() const { return sample_id.size(); }
  void reindex();
  Metadata subset(const std::vector<int32_t>& rows) const;
};

struct ExpressionMatrix {
  MatF values;  // n_samples x n_genes
  std::vector<std::string> gene_ids;
  ExprLayout layout = ExprLayout::raw_counts;
};

struct EmbeddingMatrix {
  MatF values;  // n_samples x dim
  std::string provenance;
};

/// In-memory form of an on-disk bundle directory.
struct Dataset {
  Metadata meta;
  std::optional<ExpressionMatrix> expression;
  std::map<std::string, EmbeddingMatrix> embeddings;  // ordered => deterministic iteration
  std::string control_label = "non-targeting";

  size_t n_samples() const { return meta.n_samples(); }
  std::vector<int32_t> control_rows() const;
  std::vector<int32_t> rows_for_batch(int32_t batch_index) const;
  Dataset subset(const std::vector<int32_t>& rows) const;
};

/// Undirected, deduplicated gene-gene link set. Pairs are stored with
/// first < second (lexicographic) and sorted for binary-search lookup.
struct LinkDatabase {
  std::string name;
  std::vector<std::pair<std::string, std::string>> links;
  size_t dropped_self = 0;
  size_t dropped_duplicate = 0;

  bool contains(const std::string& a, const std::string& b) const;
};

/// Batch-level train/test assignment, optionally with held-out perturbation
/// labels (reconstruction splits). Train and test batch sets are disjoint and
/// cover all batches.
struct SplitSpec {
  std::string kind;  // "probe" or "reconstruction"
  std::set<std::string> train_batches;
  std::set<std::string> test_batches;
  std::set<std::string> held_out_perturbations;
  std::vector<std::string> excluded_perturbations;  // labels absent from one side
  uint64_t seed = 0;
  double train_fraction_target = 0.0;
  double train_fraction_actual = 0.0;

  std::string to_json() const;
  static SplitSpec from_json(const std::string& text);

  std::vector<int32_t> train_rows(const Metadata& meta) const;
  std::vector<int32_t> test_rows(const Metadata& meta) const;
};

}  // namespace pbench
