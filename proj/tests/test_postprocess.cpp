#include <doctest.h>

#include <cmath>
#include <vector>

#include "perturbench/postprocess.hpp"
#include "perturbench/rng.hpp"
#include "test_support.hpp"

using namespace pbench;

namespace {

MatD sample_cov(const MatF& x) {
  MatD a = x.cast<double>();
  a.rowwise() -= a.colwise().mean();
  return a.transpose() * a / double(a.rows() - 1);
}

}  // namespace

TEST_CASE("center: per-batch control means go to zero") {
  // b1 controls: (0,0) and (2,4) -> mean (1,2); b2 control: (3,3).
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "a", "non-targeting", "a"},
      {"b1", "b1", "b1", "b2", "b2"});
  MatF emb(5, 2);
  emb << 0, 0, 2, 4, 10, 10, 3, 3, 7, 1;

  MatF per_batch = center_embedding(emb, meta, CenterMode::per_batch_control);
  CHECK(per_batch(0, 0) == -1.0f);
  CHECK(per_batch(0, 1) == -2.0f);
  CHECK(per_batch(1, 0) == 1.0f);
  CHECK(per_batch(2, 0) == 9.0f);   // 10 - 1
  CHECK(per_batch(2, 1) == 8.0f);   // 10 - 2
  CHECK(per_batch(3, 0) == 0.0f);   // b2 control at its own mean
  CHECK(per_batch(4, 0) == 4.0f);   // 7 - 3

  MatF global = center_embedding(emb, meta, CenterMode::global_control);
  // pooled control mean = (5/3, 7/3)
  CHECK(global(2, 0) == doctest::Approx(10.0 - 5.0 / 3.0));
  CHECK(global(4, 1) == doctest::Approx(1.0 - 7.0 / 3.0));
}

TEST_CASE("center: batch without controls falls back to the pooled mean") {
  auto meta = testsup::make_meta({"non-targeting", "a", "b"}, {"b1", "b1", "b2"});
  MatF emb(3, 2);
  emb << 2, 2, 5, 5, 9, 9;
  testsup::WarnCapture warns;
  MatF out = center_embedding(emb, meta, CenterMode::per_batch_control);
  CHECK(warns.any_contains("no controls"));
  CHECK(out(2, 0) == 7.0f);  // 9 - pooled control mean 2

  auto no_ctl = testsup::make_meta({"a", "b"}, {"b1", "b2"});
  MatF e2(2, 2);
  e2.setZero();
  CHECK_THROWS_WITH_AS((void)center_embedding(e2, no_ctl, CenterMode::per_batch_control),
                       doctest::Contains("no control samples"), Error);
}

TEST_CASE("center_scale: unit control variance, constant dims zeroed") {
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "non-targeting", "a"},
      {"b1", "b1", "b1", "b1"});
  MatF emb(4, 2);
  emb << 0, 7, 2, 7, 4, 7, 6, 12;  // dim1 is constant over controls
  testsup::WarnCapture warns;
  MatF out = center_scale_embedding(emb, meta, CenterMode::per_batch_control);
  CHECK(warns.any_contains("zeroed"));
  CHECK(out(3, 0) == 2.0f);   // (6 - 2) / std 2
  CHECK(out(3, 1) == 0.0f);   // constant dim: zeroed, not amplified
  CHECK(out(0, 0) == -1.0f);
  CHECK(out(1, 0) == 0.0f);

  // Control rows end up with unit sample variance on live dims.
  MatF ctl = out.topRows(3);
  CHECK(sample_cov(ctl)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("center_scale: single-control batch uses pooled spread") {
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "non-targeting", "non-targeting", "a"},
      {"b1", "b1", "b1", "b2", "b2"});
  MatF emb(5, 1);
  emb << 0, 2, 4, 10, 13;
  MatF out = center_scale_embedding(emb, meta, CenterMode::per_batch_control);
  // b2 has one control: centered by it, scaled by pooled control std.
  double pooled_sd = std::sqrt((16.0 + 4.0 + 0.0 + 36.0) / 3.0);  // pooled ctl mean is 4
  CHECK(out(4, 0) == doctest::Approx((13.0 - 10.0) / pooled_sd));
}

TEST_CASE("tvn: exactly-white controls produce an identity transform") {
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "non-targeting", "non-targeting", "a"},
      {"b1", "b1", "b1", "b1", "b1"});
  MatF emb(5, 2);
  // Control block: orthogonal zero-mean columns => correlation exactly I.
  emb << 1, 1, 1, -1, -1, 1, -1, -1, 3, 5;
  TvnTransform t = fit_tvn(emb, meta);
  CHECK((t.whiten - MatD::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(t.mean(0) == 0.0);
  CHECK(t.scale(0) == doctest::Approx(std::sqrt(4.0 / 3.0)));

  MatF out = apply_tvn(t, emb);
  CHECK(out(4, 0) == doctest::Approx(3.0 / t.scale(0)).epsilon(1e-6));
}

TEST_CASE("tvn: whitens correlated controls to identity covariance") {
  const int n_ctl = 500, d = 6;
  Rng rng(17);
  MatD mixing(d, d);
  for (int i = 0; i < d * d; ++i) mixing.data()[i] = rng.normal();
  std::vector<std::string> perts, batches;
  MatF emb(n_ctl + 100, d);
  for (int i = 0; i < n_ctl + 100; ++i) {
    VecD z(d);
    for (int j = 0; j < d; ++j) z(j) = rng.normal();
    bool is_ctl = i < n_ctl;
    VecD v = mixing * z;
    if (!is_ctl) v.array() += 3.0;
    emb.row(i) = v.transpose().cast<float>();
    perts.push_back(is_ctl ? "non-targeting" : "a");
    batches.push_back("b1");
  }
  auto meta = testsup::make_meta(perts, batches);
  TvnTransform t = fit_tvn(emb, meta);
  MatF ctl_out = apply_tvn(t, emb.topRows(n_ctl));
  MatD cov = sample_cov(ctl_out);
  // Algebraically exact on the fit data; slack covers the float32 round trip.
  CHECK((cov - MatD::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-4);
  // Whitening is symmetric by construction.
  CHECK((t.whiten - t.whiten.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tvn: rank-deficient controls stay finite via the eigenvalue floor") {
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "non-targeting", "a"},
      {"b1", "b1", "b1", "b1"});
  MatF emb(4, 2);
  emb << 0, 0, 1, 2, 2, 4, 5, 5;  // controls on the line y = 2x
  testsup::WarnCapture warns;
  TvnTransform t = fit_tvn(emb, meta);
  MatF out = apply_tvn(t, emb);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(std::isfinite(out.data()[i]));

  auto small_meta = testsup::make_meta({"non-targeting", "a"}, {"b1", "b1"});
  MatF tiny(2, 2);
  tiny.setZero();
  CHECK_THROWS_WITH_AS((void)fit_tvn(tiny, small_meta), doctest::Contains("at least 2"), Error);
}

TEST_CASE("tvn: warns when controls cannot support the dimension") {
  auto meta = testsup::make_meta(
      {"non-targeting", "non-targeting", "non-targeting", "a"},
      {"b1", "b1", "b1", "b1"});
  MatF emb(4, 3);
  Rng rng(5);
  for (int64_t i = 0; i < emb.size(); ++i) emb.data()[i] = float(rng.normal());
  testsup::WarnCapture warns;
  (void)fit_tvn(emb, meta);
  CHECK(warns.any_contains("rank-deficient"));

  TvnTransform t = fit_tvn(emb, meta);
  MatF wrong(2, 2);
  wrong.setZero();
  CHECK_THROWS_AS((void)apply_tvn(t, wrong), Error);
}
