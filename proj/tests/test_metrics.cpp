#include <doctest.h>

#include "twinflow/metrics.hpp"

using namespace twinflow;
using namespace twinflow::metrics;

TEST_CASE("exact 1-D squared W2") {
  CHECK(w2_squared_1d({0, 1, 2}, {3, 4, 5}) == doctest::Approx(9.0));
  CHECK(w2_squared_1d({2, 0, 1}, {0, 1, 2}) == 0.0);
  // Half the mass moves by 1.
  CHECK(w2_squared_1d({0}, {0, 1}) == doctest::Approx(0.5));
  // Quantile pieces [0,1/3): 0, [1/3,1/2): 1, [1/2,2/3): 0, [2/3,1): 1.
  CHECK(w2_squared_1d({0, 1}, {0, 1, 2}) == doctest::Approx(1.0 / 6 + 1.0 / 3));
  CHECK_THROWS_AS(w2_squared_1d({}, {1}), InvalidArgument);
}

TEST_CASE("sliced W2 of a translation is |m|^2 / d") {
  Rng rng(1);
  const Matrix a = rng.normal_matrix(500, 2);
  Matrix b = a;
  b.col(0).array() += 2.0;
  Rng proj(2);
  // E[(w . m)^2] over uniform unit w in 2-D is |m|^2 / 2.
  CHECK(sliced_w2(a, b, 4000, proj) == doctest::Approx(2.0).epsilon(0.05));
  Rng p2(3);
  CHECK(sliced_w2(a, a, 16, p2) == 0.0);
  CHECK_THROWS_AS(sliced_w2(a, Matrix::Zero(3, 3), 4, p2), InvalidArgument);
}

TEST_CASE("energy distance") {
  Rng rng(4);
  const Matrix a = rng.normal_matrix(50, 2);
  CHECK(energy_distance(a, a) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  const Matrix zero = Matrix::Zero(3, 2);
  Matrix one = Matrix::Zero(4, 2);
  one.col(0).setOnes();
  CHECK(energy_distance(zero, one) == doctest::Approx(2.0));
  CHECK(energy_distance(zero, one) == energy_distance(one, zero));
}

TEST_CASE("mode coverage") {
  data::DatasetSpec spec;
  const Matrix c = data::ring_centers(spec);
  Matrix all(800, 2);
  for (Eigen::Index i = 0; i < 800; ++i) all.row(i) = c.row(i % 8);
  CHECK(mode_coverage(all, spec, default_radius_tol(spec)).modes_recovered == 8);

  Matrix three(300, 2);
  for (Eigen::Index i = 0; i < 300; ++i) three.row(i) = c.row(i % 3);
  const auto cov = mode_coverage(three, spec, 0.45);
  CHECK(cov.modes_recovered == 3);
  CHECK(cov.counts[0] == 100);
  CHECK(cov.counts[5] == 0);

  // Far from every center: nothing counts.
  CHECK(mode_coverage(Matrix::Zero(100, 2), spec, 0.45).modes_recovered == 0);

  // A mode with fewer than 1% of the samples is not recovered.
  Matrix sparse = Matrix::Zero(1000, 2);
  for (int i = 0; i < 5; ++i) sparse.row(i) = c.row(1);
  CHECK(mode_coverage(sparse, spec, 0.45).modes_recovered == 0);
  CHECK_THROWS_AS(mode_coverage(sparse, data::DatasetSpec{data::DatasetId::two_moons}, 0.45), InvalidArgument);
}

TEST_CASE("diversity") {
  Rng rng(5);
  Matrix pts(3, 1);
  pts << 0, 1, 3;
  // Pairs: 1, 3, 2.
  CHECK(diversity(pts, 100, rng) == doctest::Approx(2.0));
  CHECK(diversity(Matrix::Zero(10, 2), 5, rng) == 0.0);
  const Matrix big = rng.normal_matrix(1000, 2);
  Rng r1(6);
  // Mean distance between independent N(0, I_2) points is sqrt(pi).
  CHECK(diversity(big, 20000, r1) == doctest::Approx(std::sqrt(M_PI)).epsilon(0.03));
  CHECK_THROWS_AS(diversity(Matrix::Zero(1, 2), 5, rng), InvalidArgument);
}

TEST_CASE("evaluate reports -1 modes off the ring") {
  Rng rng(7);
  const Matrix a = rng.normal_matrix(100, 2), b = rng.normal_matrix(100, 2);
  const auto r = evaluate(a, b, data::DatasetSpec{data::DatasetId::gauss_unit}, 4);
  CHECK(r.modes_recovered == -1);
  CHECK(r.nfe == 4);
  CHECK(r.sliced_w2 > 0.0);
  const auto again = evaluate(a, b, data::DatasetSpec{data::DatasetId::gauss_unit}, 4);
  CHECK(again.sliced_w2 == r.sliced_w2);
  CHECK(evaluate(a, b, data::DatasetSpec{}, 1).modes_recovered == 0);
}
