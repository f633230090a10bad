#include "perturbench/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "perturbench/common.hpp"
#include "perturbench/rng.hpp"

using nlohmann::json;

namespace pbench {

std::vector<uint8_t> filter_min_counts(const ExpressionMatrix& expr, double min_total) {
  if (expr.layout != ExprLayout::raw_counts) {
    throw Error(ErrorCode::validation, "filter_min_counts requires raw_counts layout");
  }
  std::vector<uint8_t> keep(expr.values.rows());
  for (int64_t i = 0; i < expr.values.rows(); ++i) {
    double total = expr.values.row(i).cast<double>().sum();
    keep[i] = total > min_total ? 1 : 0;
  }
  return keep;
}

Dataset apply_row_mask(const Dataset& ds, const std::vector<uint8_t>& keep) {
  if (keep.size() != ds.meta.n_samples()) {
    throw Error(ErrorCode::validation, "row mask length disagrees with sample count");
  }
  std::vector<int32_t> rows;
  for (size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) rows.push_back(static_cast<int32_t>(i));
  }
  if (rows.empty()) throw Error(ErrorCode::validation, "row mask removes every sample");
  return ds.subset(rows);
}

ExpressionMatrix normalize_log1p(const ExpressionMatrix& expr, double target_sum) {
  if (expr.layout != ExprLayout::raw_counts) {
    throw Error(ErrorCode::validation, "normalize_log1p requires raw_counts layout");
  }
  if (!(target_sum > 0)) throw Error(ErrorCode::config, "target_sum must be positive");
  ExpressionMatrix out;
  out.gene_ids = expr.gene_ids;
  out.layout = ExprLayout::lognorm;
  out.values.resize(expr.values.rows(), expr.values.cols());
  int64_t zero_rows = 0;
  for (int64_t i = 0; i < expr.values.rows(); ++i) {
    double total = expr.values.row(i).cast<double>().sum();
    if (total <= 0) {
      out.values.row(i).setZero();
      ++zero_rows;
      continue;
    }
    double f = target_sum / total;
    for (int64_t j = 0; j < expr.values.cols(); ++j) {
      out.values(i, j) =
          static_cast<float>(std::log1p(static_cast<double>(expr.values(i, j)) * f));
    }
  }
  if (zero_rows > 0) {
    warn("normalize_log1p: " + std::to_string(zero_rows) + " zero-total rows left at zero");
  }
  return out;
}

namespace {

struct BatchAssignment {
  std::set<std::string> train;
  std::set<std::string> test;
  double actual_frac = 0.0;
};

// Batches are shuffled by seed, stable-sorted by size descending, then filled
// greedily into train until the row fraction target is met, always keeping at
// least one test batch.
BatchAssignment assign_batches(const Metadata& meta, double train_frac, uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw Error(ErrorCode::config, "train_frac must be in (0, 1)");
  }
  size_t n_batches = meta.batch_names.size();
  if (n_batches < 2) {
    throw Error(ErrorCode::validation, "splits need at least 2 batches, found " +
                                           std::to_string(n_batches));
  }
  std::vector<int64_t> batch_rows(n_batches, 0);
  for (int32_t b : meta.batch_idx) batch_rows[b]++;

  std::vector<int32_t> order(n_batches);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix64(seed ^ 0x59117ULL));
  rng.shuffle(order.data(), order.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](int32_t a, int32_t b) { return batch_rows[a] > batch_rows[b]; });

  int64_t total = static_cast<int64_t>(meta.n_samples());
  int64_t want = static_cast<int64_t>(std::llround(train_frac * static_cast<double>(total)));
  BatchAssignment out;
  int64_t got = 0;
  for (size_t i = 0; i < order.size(); ++i) {
    bool last = i + 1 == order.size();
    if (got < want && !(last && out.test.empty())) {
      out.train.insert(meta.batch_names[order[i]]);
      got += batch_rows[order[i]];
    } else {
      out.test.insert(meta.batch_names[order[i]]);
    }
  }
  if (out.train.empty()) {
    // Degenerate target (train_frac below the smallest batch share): move the
    // smallest batch to train so both sides are populated.
    std::string moved = meta.batch_names[order.back()];
    out.test.erase(moved);
    out.train.insert(moved);
    got = batch_rows[order.back()];
  }
  out.actual_frac = static_cast<double>(got) / static_cast<double>(total);
  if (std::fabs(out.actual_frac - train_frac) > 0.1) {
    warn("split: achieved train fraction " + format_g6(out.actual_frac) +
         " deviates from target " + format_g6(train_frac));
  }
  return out;
}

std::set<std::string> labels_on_side(const Metadata& meta, const std::set<std::string>& batches) {
  std::set<std::string> out;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (batches.count(meta.batch[i])) out.insert(meta.perturbation[i]);
  }
  return out;
}

}  // namespace

SplitSpec make_probe_split(const Metadata& meta, double train_frac, uint64_t seed) {
  auto assign = assign_batches(meta, train_frac, seed);
  SplitSpec spec;
  spec.kind = "probe";
  spec.train_batches = assign.train;
  spec.test_batches = assign.test;
  spec.seed = seed;
  spec.train_fraction_target = train_frac;
  spec.train_fraction_actual = assign.actual_frac;

  auto train_labels = labels_on_side(meta, assign.train);
  auto test_labels = labels_on_side(meta, assign.test);
  for (const auto& l : train_labels) {
    if (!test_labels.count(l)) spec.excluded_perturbations.push_back(l);
  }
  for (const auto& l : test_labels) {
    if (!train_labels.count(l)) spec.excluded_perturbations.push_back(l);
  }
  std::sort(spec.excluded_perturbations.begin(), spec.excluded_perturbations.end());
  if (!spec.excluded_perturbations.empty()) {
    warn("probe split: " + std::to_string(spec.excluded_perturbations.size()) +
         " perturbations absent from one side were excluded");
  }
  return spec;
}

SplitSpec make_recon_split(const Metadata& meta, double train_frac, double holdout_frac,
                           uint64_t seed) {
  if (!(holdout_frac >= 0.0 && holdout_frac < 1.0)) {
    throw Error(ErrorCode::config, "holdout_frac must be in [0, 1)");
  }
  auto assign = assign_batches(meta, train_frac, seed);
  SplitSpec spec;
  spec.kind = "reconstruction";
  spec.train_batches = assign.train;
  spec.test_batches = assign.test;
  spec.seed = seed;
  spec.train_fraction_target = train_frac;
  spec.train_fraction_actual = assign.actual_frac;

  // Controls are exempt from holdout; candidate labels are every non-control
  // perturbation observed anywhere.
  std::set<std::string> controls;
  std::vector<std::string> candidates;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) controls.insert(meta.perturbation[i]);
  }
  for (const auto& name : meta.pert_names) {
    if (!controls.count(name)) candidates.push_back(name);
  }
  size_t n_hold = static_cast<size_t>(
      std::llround(holdout_frac * static_cast<double>(candidates.size())));
  Rng rng(mix64(seed ^ 0x8E01DULL));
  rng.shuffle(candidates.data(), candidates.size());
  for (size_t i = 0; i < n_hold; ++i) spec.held_out_perturbations.insert(candidates[i]);
  return spec;
}

Metadata shuffle_labels(const Metadata& meta, uint64_t seed) {
  Metadata out = meta;
  std::vector<int32_t> order(meta.n_samples());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix64(seed ^ 0x5abe15ULL));
  rng.shuffle(order.data(), order.size());
  for (size_t i = 0; i < order.size(); ++i) {
    out.perturbation[i] = meta.perturbation[order[i]];
    out.is_control[i] = meta.is_control[order[i]];
  }
  out.reindex();
  return out;
}

// --- SplitSpec -----------------------------------------------------------

std::string SplitSpec::to_json() const {
  json j;
  j["kind"] = kind;
  j["train_batches"] = std::vector<std::string>(train_batches.begin(), train_batches.end());
  j["test_batches"] = std::vector<std::string>(test_batches.begin(), test_batches.end());
  j["held_out_perturbations"] =
      std::vector<std::string>(held_out_perturbations.begin(), held_out_perturbations.end());
  j["excluded_perturbations"] = excluded_perturbations;
  j["seed"] = seed;
  j["train_fraction_target"] = train_fraction_target;
  j["train_fraction_actual"] = train_fraction_actual;
  return j.dump(2) + "\n";
}

SplitSpec SplitSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, std::string("split json parse error: ") + e.what());
  }
  SplitSpec s;
  s.kind = j.at("kind").get<std::string>();
  if (s.kind != "probe" && s.kind != "reconstruction") {
    throw Error(ErrorCode::validation, "split kind must be 'probe' or 'reconstruction'");
  }
  auto tr = j.at("train_batches").get<std::vector<std::string>>();
  auto te = j.at("test_batches").get<std::vector<std::string>>();
  s.train_batches.insert(tr.begin(), tr.end());
  s.test_batches.insert(te.begin(), te.end());
  for (const auto& b : s.train_batches) {
    if (s.test_batches.count(b)) {
      throw Error(ErrorCode::validation, "split: batch '" + b + "' appears on both sides");
    }
  }
  if (s.train_batches.empty() || s.test_batches.empty()) {
    throw Error(ErrorCode::validation, "split: both sides must be non-empty");
  }
  if (j.contains("held_out_perturbations")) {
    auto h = j["held_out_perturbations"].get<std::vector<std::string>>();
    s.held_out_perturbations.insert(h.begin(), h.end());
  }
  if (j.contains("excluded_perturbations")) {
    s.excluded_perturbations = j["excluded_perturbations"].get<std::vector<std::string>>();
  }
  s.seed = j.value("seed", 0ULL);
  s.train_fraction_target = j.value("train_fraction_target", 0.0);
  s.train_fraction_actual = j.value("train_fraction_actual", 0.0);
  return s;
}

std::vector<int32_t> SplitSpec::train_rows(const Metadata& meta) const {
  std::set<std::string> excluded(excluded_perturbations.begin(), excluded_perturbations.end());
  std::vector<int32_t> out;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (!train_batches.count(meta.batch[i])) continue;
    if (excluded.count(meta.perturbation[i])) continue;
    if (held_out_perturbations.count(meta.perturbation[i])) continue;
    out.push_back(static_cast<int32_t>(i));
  }
  return out;
}

std::vector<int32_t> SplitSpec::test_rows(const Metadata& meta) const {
  std::set<std::string> excluded(excluded_perturbations.begin(), excluded_perturbations.end());
  std::vector<int32_t> out;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (!test_batches.count(meta.batch[i])) continue;
    if (excluded.count(meta.perturbation[i])) continue;
    out.push_back(static_cast<int32_t>(i));
  }
  return out;
}

}  // namespace pbench
