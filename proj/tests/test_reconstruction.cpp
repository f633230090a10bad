#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "perturbench/reconstruction.hpp"
#include "perturbench/rng.hpp"
#include "perturbench/types.hpp"
#include "test_support.hpp"

using namespace pbench;
using testsup::WarnCapture;
using testsup::make_meta;

namespace {

MatD rows_from(const std::vector<std::vector<double>>& data) {
  MatD m(static_cast<int64_t>(data.size()), static_cast<int64_t>(data[0].size()));
  for (size_t i = 0; i < data.size(); ++i) {
    for (size_t j = 0; j < data[i].size(); ++j) m(static_cast<int64_t>(i), static_cast<int64_t>(j)) = data[i][j];
  }
  return m;
}

DecoderModel identity_model(int64_t dim, bool relu) {
  DecoderModel m;
  m.w1 = MatD::Identity(dim, dim);
  m.b1 = VecD::Zero(dim);
  m.w2 = MatD::Identity(dim, dim);
  m.b2 = VecD::Zero(dim);
  m.relu = relu;
  return m;
}

}  // namespace

TEST_CASE("spearman_score hand-computed pairs") {
  // Ranks (1,3,2) vs (1,2,3): r = 0.5.
  CHECK(spearman_score(rows_from({{1.0, 3.0, 2.0}}), rows_from({{10.0, 20.0, 30.0}}), false) ==
        doctest::Approx(0.5));
  // Tie in the prediction: ranks (1.5, 1.5, 3) vs (1, 2, 3) -> 1.5/sqrt(3).
  CHECK(spearman_score(rows_from({{1.0, 1.0, 2.0}}), rows_from({{10.0, 20.0, 30.0}}), false) ==
        doctest::Approx(1.5 / std::sqrt(3.0)));
  // Monotone nonlinear map is rank-perfect.
  CHECK(spearman_score(rows_from({{1.0, 2.0, 3.0, 4.0}}),
                       rows_from({{1.0, 4.0, 9.0, 16.0}}), false) == doctest::Approx(1.0));
  // Reversal.
  CHECK(spearman_score(rows_from({{1.0, 2.0, 3.0}}), rows_from({{3.0, 2.0, 1.0}}), false) ==
        doctest::Approx(-1.0));
}

TEST_CASE("spearman_score averages rows and zeroes constant ones") {
  WarnCapture warns;
  MatD pred = rows_from({{1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}});
  MatD actual = rows_from({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
  CHECK(spearman_score(pred, actual, false) == doctest::Approx(0.5));
  CHECK(warns.any_contains("1 constant rows"));
}

TEST_CASE("spearman_score per-gene mode correlates columns") {
  MatD m = rows_from({{1.0, 9.0}, {2.0, 7.0}, {3.0, 8.0}});
  CHECK(spearman_score(m, m, true) == doctest::Approx(1.0));
  // Column 0 agrees, column 1 is rank-reversed: mean of 1 and -1.
  MatD flipped = m;
  flipped(0, 1) = 7.0;
  flipped(1, 1) = 9.0;
  flipped(2, 1) = 8.0;
  CHECK(spearman_score(m, flipped, true) == doctest::Approx(0.0));
}

TEST_CASE("spearman_score error cases") {
  CHECK_THROWS_WITH_AS(spearman_score(MatD::Zero(2, 3), MatD::Zero(3, 3), false),
                       doctest::Contains("shape mismatch"), Error);
  CHECK_THROWS_WITH_AS(spearman_score(MatD::Zero(2, 1), MatD::Zero(2, 1), false),
                       doctest::Contains("2 columns"), Error);
  CHECK_THROWS_WITH_AS(spearman_score(MatD::Zero(1, 3), MatD::Zero(1, 3), true),
                       doctest::Contains(">= 2 samples"), Error);
}

namespace {

// One batch: control pair at +v/-v (control means are exactly zero on both
// sides), two perturbed rows.
struct StructFixture {
  Metadata meta;
  MatD actual;
};

StructFixture make_struct_fixture() {
  StructFixture f;
  f.meta = make_meta({"non-targeting", "non-targeting", "pA", "pB"}, {"b0"});
  f.actual = rows_from({{1.0, 2.0},    //
                        {-1.0, -2.0},  //
                        {3.0, -4.0},   //
                        {0.5, 8.0}});
  return f;
}

}  // namespace

TEST_CASE("structural_integrity anchors are exact") {
  StructFixture f = make_struct_fixture();

  SUBCASE("perfect prediction") {
    StructuralResult res = structural_integrity(f.actual, f.actual, f.meta);
    CHECK(res.distance == 0.0);
    CHECK(res.integrity == 1.0);
    CHECK(res.integrity_unclamped == 1.0);
  }
  SUBCASE("control collapse scores one half") {
    // Prediction maps everything onto the (zero) control mean: the centered
    // difference equals the centered actual, so distance is exactly half of
    // distance_max.
    MatD pred = MatD::Zero(4, 2);
    StructuralResult res = structural_integrity(pred, f.actual, f.meta);
    CHECK(res.integrity == 0.5);
    CHECK(res.distance == doctest::Approx(res.distance_max / 2.0));
  }
  SUBCASE("antipodal prediction scores zero") {
    MatD pred = -f.actual;
    StructuralResult res = structural_integrity(pred, f.actual, f.meta);
    // sqrt(4 s) = 2 sqrt(s) exactly in IEEE arithmetic.
    CHECK(res.distance == res.distance_max);
    CHECK(res.integrity == 0.0);
    CHECK(res.integrity_unclamped == 0.0);
  }
  SUBCASE("worse than antipodal clamps at zero") {
    MatD pred = -3.0 * f.actual;
    StructuralResult res = structural_integrity(pred, f.actual, f.meta);
    CHECK(res.integrity == 0.0);
    CHECK(res.integrity_unclamped == doctest::Approx(-1.0));
  }
}

TEST_CASE("structural_integrity centers by each side's own controls") {
  StructFixture f = make_struct_fixture();
  // Shift the whole prediction by a constant: its control mean shifts with
  // it, so centered rows and the score are unchanged.
  MatD pred = f.actual;
  pred.array() += 17.0;
  StructuralResult res = structural_integrity(pred, f.actual, f.meta);
  CHECK(res.integrity == doctest::Approx(1.0));
}

TEST_CASE("structural_integrity averages per-batch normalized distances") {
  Metadata meta = make_meta({"non-targeting", "pA", "non-targeting", "pB"},
                            {"b0", "b0", "b1", "b1"});
  MatD actual = rows_from({{0.0, 0.0},  //
                           {3.0, 4.0},  // batch b0: ||ca|| = 5
                           {0.0, 0.0},  //
                           {0.0, 2.0}});  // batch b1: ||ca|| = 2
  MatD pred = actual;
  pred.row(1) << 0.0, 0.0;  // collapse only the b0 perturbation
  StructuralResult res = structural_integrity(pred, actual, meta);
  // distance = (5 + 0)/2, max = 2*(5 + 2)/2.
  CHECK(res.distance == doctest::Approx(2.5));
  CHECK(res.distance_max == doctest::Approx(7.0));
  CHECK(res.integrity == doctest::Approx(1.0 - 2.5 / 7.0));
}

TEST_CASE("structural_integrity skips one-sided batches with a warning") {
  Metadata meta = make_meta({"non-targeting", "pA", "non-targeting", "non-targeting"},
                            {"b0", "b0", "b1", "b1"});
  MatD actual = rows_from({{0.0}, {2.0}, {1.0}, {1.0}});
  WarnCapture warns;
  StructuralResult res = structural_integrity(actual, actual, meta);
  CHECK(res.integrity == 1.0);
  CHECK(warns.any_contains("skipped"));
}

TEST_CASE("structural_integrity error cases") {
  StructFixture f = make_struct_fixture();
  SUBCASE("shape mismatch") {
    CHECK_THROWS_WITH_AS(structural_integrity(MatD::Zero(4, 3), f.actual, f.meta),
                         doctest::Contains("shape mismatch"), Error);
  }
  SUBCASE("metadata mismatch") {
    CHECK_THROWS_WITH_AS(structural_integrity(MatD::Zero(3, 2), MatD::Zero(3, 2), f.meta),
                         doctest::Contains("rows disagree"), Error);
  }
  SUBCASE("no usable batch") {
    Metadata ctl_only = make_meta({"non-targeting", "non-targeting"}, {"b0"});
    WarnCapture warns;
    CHECK_THROWS_WITH_AS(structural_integrity(MatD::Zero(2, 2), MatD::Zero(2, 2), ctl_only),
                         doctest::Contains("no batch"), Error);
  }
  SUBCASE("actual identical to controls") {
    MatD flat = MatD::Ones(4, 2);
    CHECK_THROWS_WITH_AS(structural_integrity(flat, flat, f.meta),
                         doctest::Contains("identical to controls"), Error);
  }
}

TEST_CASE("decode applies the stacked linear maps") {
  MatD x = rows_from({{1.0, -2.0}, {-3.0, 4.0}});
  DecoderModel lin = identity_model(2, false);
  CHECK((decode(lin, x) - x).cwiseAbs().maxCoeff() == 0.0);

  DecoderModel rect = identity_model(2, true);
  MatD y = decode(rect, x);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 4.0);

  lin.b1 = VecD::Constant(2, 1.0);
  lin.b2 = VecD::Constant(2, 10.0);
  CHECK(decode(lin, x)(0, 0) == doctest::Approx(12.0));

  CHECK_THROWS_WITH_AS(decode(lin, MatD::Zero(2, 3)),
                       doctest::Contains("dimension disagrees"), Error);
}

TEST_CASE("train_decoder fits a linear map") {
  Rng rng(11);
  int64_t n = 96, d = 4, g = 6;
  MatD x(n, d);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  MatD w_true(d, g);
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j < g; ++j) w_true(i, j) = rng.normal();
  }
  MatD y = x * w_true;
  y.array().rowwise() += Eigen::Array<double, 1, Eigen::Dynamic>::LinSpaced(g, -1.0, 1.0);

  DecoderOptions opts;
  opts.epochs = 200;
  opts.batch_size = 32;
  opts.lr = 1e-2;
  opts.seed = 3;
  DecoderModel model = train_decoder(x, y, opts);
  REQUIRE(model.loss_per_epoch.size() == 200);
  CHECK(model.loss_per_epoch.front() > model.loss_per_epoch.back());
  CHECK(model.loss_per_epoch.back() < 1e-2);
  CHECK(spearman_score(decode(model, x), y, false) > 0.95);
}

TEST_CASE("train_decoder honors hidden width and stays deterministic") {
  Rng rng(5);
  MatD x(20, 3), y(20, 4);
  for (int64_t i = 0; i < 20; ++i) {
    for (int64_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
    for (int64_t j = 0; j < 4; ++j) y(i, j) = rng.normal();
  }
  DecoderOptions opts;
  opts.epochs = 3;
  opts.batch_size = 8;
  opts.hidden = 7;
  opts.seed = 42;
  DecoderModel a = train_decoder(x, y, opts);
  CHECK(a.w1.rows() == 3);
  CHECK(a.w1.cols() == 7);
  CHECK(a.w2.rows() == 7);
  CHECK(a.w2.cols() == 4);

  DecoderModel b = train_decoder(x, y, opts);
  CHECK((a.w1 - b.w1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w2 - b.w2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.b2 - b.b2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.loss_per_epoch == b.loss_per_epoch);

  opts.seed = 43;
  DecoderModel c = train_decoder(x, y, opts);
  CHECK((a.w1 - c.w1).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("train_decoder error cases") {
  MatD x = MatD::Ones(4, 2), y = MatD::Ones(4, 3);
  SUBCASE("empty input") {
    CHECK_THROWS_WITH_AS(train_decoder(MatD(0, 2), MatD(0, 3), {}),
                         doctest::Contains("empty input"), Error);
  }
  SUBCASE("row mismatch") {
    CHECK_THROWS_WITH_AS(train_decoder(x, MatD::Ones(5, 3), {}),
                         doctest::Contains("target rows disagree"), Error);
  }
  SUBCASE("bad options") {
    DecoderOptions opts;
    opts.epochs = 0;
    CHECK_THROWS_WITH_AS(train_decoder(x, y, opts), doctest::Contains("positive"), Error);
    opts.epochs = 1;
    opts.batch_size = 0;
    CHECK_THROWS_WITH_AS(train_decoder(x, y, opts), doctest::Contains("positive"), Error);
  }
  SUBCASE("divergence is reported") {
    DecoderOptions opts;
    opts.epochs = 5;
    opts.lr = 1e200;
    CHECK_THROWS_WITH_AS(train_decoder(x, y, opts), doctest::Contains("non-finite loss"),
                         Error);
  }
}
