#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "perturbench/preprocess.hpp"
#include "test_support.hpp"

using namespace pbench;

namespace {

ExpressionMatrix counts_matrix(const std::vector<std::vector<float>>& rows) {
  ExpressionMatrix e;
  e.layout = ExprLayout::raw_counts;
  e.values.resize(int64_t(rows.size()), int64_t(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) e.values(int64_t(i), int64_t(j)) = rows[i][j];
  }
  for (size_t j = 0; j < rows[0].size(); ++j) e.gene_ids.push_back("g" + std::to_string(j));
  return e;
}

Metadata batch_meta(const std::vector<std::pair<std::string, int>>& batch_sizes,
                    const std::vector<std::string>& label_cycle) {
  std::vector<std::string> perts, batches;
  size_t li = 0;
  for (const auto& [name, count] : batch_sizes) {
    for (int i = 0; i < count; ++i) {
      batches.push_back(name);
      perts.push_back(label_cycle[li++ % label_cycle.size()]);
    }
  }
  return testsup::make_meta(perts, batches);
}

}  // namespace

TEST_CASE("filter keeps rows strictly above the threshold") {
  auto e = counts_matrix({{999, 0}, {1000, 0}, {1000, 1}});
  auto keep = filter_min_counts(e, 1000.0);
  CHECK(keep == std::vector<uint8_t>{0, 0, 1});

  e.layout = ExprLayout::lognorm;
  CHECK_THROWS_WITH_AS((void)filter_min_counts(e, 1000.0), doctest::Contains("raw_counts"),
                       Error);
}

TEST_CASE("apply_row_mask drops rows from every payload") {
  Dataset ds;
  ds.meta = testsup::make_meta({"non-targeting", "a", "b"}, {"b1", "b1", "b2"});
  ds.expression = counts_matrix({{1, 2}, {3, 4}, {5, 6}});
  EmbeddingMatrix emb;
  emb.values.resize(3, 2);
  emb.values << 0, 1, 2, 3, 4, 5;
  ds.embeddings.emplace("e", emb);

  Dataset out = apply_row_mask(ds, {1, 0, 1});
  CHECK(out.n_samples() == 2);
  CHECK(out.meta.perturbation == std::vector<std::string>{"non-targeting", "b"});
  CHECK(out.expression->values(1, 0) == 5.0f);
  CHECK(out.embeddings.at("e").values(1, 1) == 5.0f);
  CHECK(out.meta.batch_names == std::vector<std::string>{"b1", "b2"});

  CHECK_THROWS_AS((void)apply_row_mask(ds, {0, 0, 0}), Error);
  CHECK_THROWS_AS((void)apply_row_mask(ds, {1, 1}), Error);
}

TEST_CASE("normalize_log1p scales rows to the target then log1p") {
  auto e = counts_matrix({{1, 3}, {0, 0}, {10, 0}});
  testsup::WarnCapture warns;
  auto out = normalize_log1p(e, 100.0);
  CHECK(out.layout == ExprLayout::lognorm);
  CHECK(out.values(0, 0) == float(std::log1p(1.0 * 25.0)));
  CHECK(out.values(0, 1) == float(std::log1p(3.0 * 25.0)));
  CHECK(out.values(1, 0) == 0.0f);
  CHECK(out.values(1, 1) == 0.0f);
  CHECK(out.values(2, 0) == float(std::log1p(100.0)));
  CHECK(warns.any_contains("zero-total"));

  // Normalized values invert back to the original proportions.
  double back0 = std::expm1(double(out.values(0, 0)));
  double back1 = std::expm1(double(out.values(0, 1)));
  CHECK(back1 / back0 == doctest::Approx(3.0).epsilon(1e-5));

  CHECK_THROWS_AS((void)normalize_log1p(out, 100.0), Error);      // already lognorm
  CHECK_THROWS_AS((void)normalize_log1p(e, 0.0), Error);          // bad target
}

TEST_CASE("probe split: disjoint batch cover with at least one test batch") {
  auto meta = batch_meta({{"b1", 40}, {"b2", 30}, {"b3", 30}},
                         {"non-targeting", "a", "b", "c"});
  SplitSpec s = make_probe_split(meta, 0.7, 0);
  CHECK(s.kind == "probe");
  CHECK(s.train_batches.size() + s.test_batches.size() == 3);
  for (const auto& b : s.train_batches) CHECK(s.test_batches.count(b) == 0);
  CHECK(!s.test_batches.empty());
  CHECK(!s.train_batches.empty());
  CHECK(s.train_fraction_actual == doctest::Approx(0.7));
  // Every label occurs in every batch here, so nothing is excluded.
  CHECK(s.excluded_perturbations.empty());

  // Deterministic per seed.
  SplitSpec again = make_probe_split(meta, 0.7, 0);
  CHECK(again.train_batches == s.train_batches);
  CHECK(again.test_batches == s.test_batches);
}

TEST_CASE("probe split: seed changes assignment among equal-size batches") {
  auto meta = batch_meta({{"b1", 10}, {"b2", 10}, {"b3", 10}, {"b4", 10}},
                         {"non-targeting", "a"});
  std::set<std::set<std::string>> seen;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    seen.insert(make_probe_split(meta, 0.5, seed).train_batches);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("probe split: one-sided labels are excluded and rows respect it") {
  // "rare" occurs only in b1; b1 is the biggest batch so it lands in train.
  std::vector<std::string> perts, batches;
  for (int i = 0; i < 50; ++i) {
    perts.push_back(i % 2 ? "a" : "non-targeting");
    batches.push_back("b1");
  }
  perts.push_back("rare");
  batches.push_back("b1");
  for (int i = 0; i < 20; ++i) {
    perts.push_back(i % 2 ? "a" : "non-targeting");
    batches.push_back("b2");
  }
  auto meta = testsup::make_meta(perts, batches);
  testsup::WarnCapture warns;
  SplitSpec s = make_probe_split(meta, 0.6, 1);
  REQUIRE(s.train_batches.count("b1") == 1);
  CHECK(s.excluded_perturbations == std::vector<std::string>{"rare"});
  CHECK(warns.any_contains("excluded"));

  auto train = s.train_rows(meta);
  auto test = s.test_rows(meta);
  CHECK(train.size() == 50);  // the rare row is gone
  CHECK(test.size() == 20);
  for (int32_t r : train) CHECK(meta.perturbation[r] != "rare");
  for (int32_t r : train) CHECK(s.train_batches.count(meta.batch[r]) == 1);
  for (int32_t r : test) CHECK(s.test_batches.count(meta.batch[r]) == 1);
}

TEST_CASE("probe split: degenerate target still populates both sides") {
  auto meta = batch_meta({{"big", 60}, {"small", 40}}, {"non-targeting", "a"});
  testsup::WarnCapture warns;
  SplitSpec s = make_probe_split(meta, 0.001, 3);
  CHECK(!s.train_batches.empty());
  CHECK(!s.test_batches.empty());
  CHECK(warns.any_contains("deviates"));

  auto one_batch = batch_meta({{"only", 10}}, {"non-targeting", "a"});
  CHECK_THROWS_WITH_AS((void)make_probe_split(one_batch, 0.5, 0),
                       doctest::Contains("at least 2 batches"), Error);
  CHECK_THROWS_AS((void)make_probe_split(meta, 1.5, 0), Error);
}

TEST_CASE("reconstruction split holds out labels but never controls") {
  std::vector<std::string> cycle = {"non-targeting", "g1", "g2", "g3", "g4",
                                    "g5",            "g6", "g7", "g8", "g9", "g10"};
  auto meta = batch_meta({{"b1", 55}, {"b2", 55}}, cycle);
  SplitSpec s = make_recon_split(meta, 0.5, 0.5, 7);
  CHECK(s.kind == "reconstruction");
  CHECK(s.held_out_perturbations.size() == 5);  // round(0.5 * 10)
  CHECK(s.held_out_perturbations.count("non-targeting") == 0);

  auto train = s.train_rows(meta);
  auto test = s.test_rows(meta);
  for (int32_t r : train) CHECK(s.held_out_perturbations.count(meta.perturbation[r]) == 0);
  // Held-out labels remain on the test side.
  std::set<std::string> test_labels;
  for (int32_t r : test) test_labels.insert(meta.perturbation[r]);
  for (const auto& h : s.held_out_perturbations) CHECK(test_labels.count(h) == 1);

  SplitSpec s3 = make_recon_split(meta, 0.5, 0.3, 7);
  CHECK(s3.held_out_perturbations.size() == 3);
  CHECK_THROWS_AS((void)make_recon_split(meta, 0.5, 1.0, 7), Error);
}

TEST_CASE("split json round-trips and rejects inconsistent specs") {
  auto meta = batch_meta({{"b1", 30}, {"b2", 20}, {"b3", 10}}, {"non-targeting", "a", "b"});
  SplitSpec s = make_recon_split(meta, 0.5, 0.5, 11);
  SplitSpec back = SplitSpec::from_json(s.to_json());
  CHECK(back.kind == s.kind);
  CHECK(back.train_batches == s.train_batches);
  CHECK(back.test_batches == s.test_batches);
  CHECK(back.held_out_perturbations == s.held_out_perturbations);
  CHECK(back.excluded_perturbations == s.excluded_perturbations);
  CHECK(back.seed == s.seed);
  CHECK(back.train_fraction_actual == doctest::Approx(s.train_fraction_actual));

  CHECK_THROWS_WITH_AS(
      (void)SplitSpec::from_json(
          R"({"kind":"probe","train_batches":["b1"],"test_batches":["b1"]})"),
      doctest::Contains("both sides"), Error);
  CHECK_THROWS_WITH_AS(
      (void)SplitSpec::from_json(
          R"({"kind":"probe","train_batches":[],"test_batches":["b1"]})"),
      doctest::Contains("non-empty"), Error);
  CHECK_THROWS_WITH_AS(
      (void)SplitSpec::from_json(
          R"({"kind":"nope","train_batches":["a"],"test_batches":["b"]})"),
      doctest::Contains("kind"), Error);
  CHECK_THROWS_AS((void)SplitSpec::from_json("{oops"), Error);
}

TEST_CASE("shuffle_labels permutes labels in place") {
  auto meta = batch_meta({{"b1", 20}, {"b2", 20}}, {"non-targeting", "a", "b", "c"});
  Metadata shuffled = shuffle_labels(meta, 5);
  CHECK(shuffled.sample_id == meta.sample_id);
  CHECK(shuffled.batch == meta.batch);
  auto sorted_labels = [](const Metadata& m) {
    auto v = m.perturbation;
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(sorted_labels(shuffled) == sorted_labels(meta));
  CHECK(shuffled.perturbation != meta.perturbation);  // 40 rows: identity is (1/40!)-unlikely
  for (size_t i = 0; i < shuffled.n_samples(); ++i) {
    CHECK((shuffled.perturbation[i] == "non-targeting") == (shuffled.is_control[i] == 1));
  }
  Metadata again = shuffle_labels(meta, 5);
  CHECK(again.perturbation == shuffled.perturbation);
}
