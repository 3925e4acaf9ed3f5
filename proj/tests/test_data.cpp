#include <doctest.h>

#include <cmath>

#include "twinflow/data.hpp"
#include "twinflow/transport.hpp"

using namespace twinflow;
using namespace twinflow::data;

TEST_CASE("dataset names round trip") {
  for (auto id : {DatasetId::ring8, DatasetId::checkerboard, DatasetId::two_moons, DatasetId::gauss_unit,
                  DatasetId::point_mass}) {
    CHECK(parse_dataset(dataset_name(id)) == id);
  }
  CHECK_THROWS_AS(parse_dataset("swiss_roll"), InvalidArgument);
}

TEST_CASE("ring8 centers and samples") {
  const DatasetSpec spec;
  const Matrix c = ring_centers(spec);
  CHECK(c(0, 0) == doctest::Approx(4.0));
  CHECK(c(0, 1) == doctest::Approx(0.0));
  CHECK(c(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c(2, 1) == doctest::Approx(4.0));
  CHECK(c(1, 0) == doctest::Approx(4.0 / std::sqrt(2.0)));

  Rng rng(1);
  const std::size_t n = 40000;
  const Samples s = sample_data(spec, n, rng);
  REQUIRE(s.labels.size() == n);
  std::vector<int> counts(8, 0);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = s.labels[i];
    ++counts[static_cast<std::size_t>(k)];
    for (int d = 0; d < 2; ++d) {
      const double e = s.x(static_cast<Eigen::Index>(i), d) - c(k, d);
      sum += e;
      sq += e * e;
    }
  }
  for (int k : counts) CHECK(std::abs(k / static_cast<double>(n) - 0.125) < 0.01);
  CHECK(std::abs(sum / (2.0 * n)) < 0.005);
  CHECK(std::sqrt(sq / (2.0 * n)) == doctest::Approx(0.15).epsilon(0.02));
}

TEST_CASE("checkerboard fills only even cells") {
  Rng rng(2);
  DatasetSpec spec{DatasetId::checkerboard};
  const Samples s = sample_data(spec, 5000, rng);
  CHECK(s.labels.empty());
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    REQUIRE(std::abs(s.x(i, 0)) <= 4.0);
    REQUIRE(std::abs(s.x(i, 1)) <= 4.0);
    const int col = static_cast<int>(std::floor((s.x(i, 0) + 4.0) / 2.0));
    const int row = static_cast<int>(std::floor((s.x(i, 1) + 4.0) / 2.0));
    REQUIRE((row + col) % 2 == 0);
  }
}

TEST_CASE("two moons are labelled by moon") {
  Rng rng(3);
  const Samples s = sample_data(DatasetSpec{DatasetId::two_moons}, 20000, rng);
  double mx[2] = {0, 0}, my[2] = {0, 0};
  int cnt[2] = {0, 0};
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    const int m = s.labels[static_cast<std::size_t>(i)];
    mx[m] += s.x(i, 0);
    my[m] += s.x(i, 1);
    ++cnt[m];
  }
  // Upper moon: mean (cos, sin) over a half circle is (0, 2/pi), then mapped by 2(p - (0.5, 0.25)).
  const double upper_y = 2.0 * (2.0 / M_PI - 0.25);
  CHECK(mx[0] / cnt[0] == doctest::Approx(-1.0).epsilon(0.03));
  CHECK(my[0] / cnt[0] == doctest::Approx(upper_y).epsilon(0.03));
  CHECK(mx[1] / cnt[1] == doctest::Approx(1.0).epsilon(0.03));
  CHECK(my[1] / cnt[1] == doctest::Approx(-upper_y).epsilon(0.03));
}

TEST_CASE("gauss_unit and point_mass samples") {
  Rng rng(4);
  DatasetSpec g{DatasetId::gauss_unit};
  g.dim = 3;
  const Samples s = sample_data(g, 50000, rng);
  CHECK(s.x.cols() == 3);
  CHECK(s.x.mean() == doctest::Approx(0.0).scale(1.0).epsilon(0.01));
  CHECK(s.x.array().square().mean() == doctest::Approx(1.0).epsilon(0.02));

  DatasetSpec p{DatasetId::point_mass};
  p.center = {1.0, 2.0};
  const Samples q = sample_data(p, 4, rng);
  CHECK((q.x.col(0).array() == 1.0).all());
  CHECK((q.x.col(1).array() == 2.0).all());
  DatasetSpec bad = p;
  bad.center = {1.0};
  CHECK_THROWS_AS(sample_data(bad, 1, rng), InvalidArgument);
  CHECK_THROWS_AS(sample_data(p, 0, rng), InvalidArgument);
}

TEST_CASE("class counts") {
  DatasetSpec ring;
  CHECK(ring.n_classes() == 0);
  ring.conditional = true;
  CHECK(ring.n_classes() == 8);
  CHECK(DatasetSpec{DatasetId::two_moons}.n_classes() == 0);
}

TEST_CASE("gauss_unit velocity oracle agrees with a Monte Carlo posterior mean") {
  // E[u | x_t] = (x_t - E[x | x_t]) / t, with E[x | x_t] estimated by
  // weighting prior draws by the Gaussian likelihood of x_t given x.
  Rng rng(5);
  DatasetSpec g{DatasetId::gauss_unit};
  const std::size_t m = 200000;
  const Matrix prior = rng.normal_matrix(m, 2);
  for (double t : {0.3, 0.6, 0.9}) {
    const Matrix xt = rng.normal_matrix(4, 2);
    const Matrix oracle = oracle_velocity(g, xt, t);
    for (Eigen::Index i = 0; i < xt.rows(); ++i) {
      double wsum = 0.0;
      Eigen::RowVector2d acc = Eigen::RowVector2d::Zero();
      for (Eigen::Index j = 0; j < prior.rows(); ++j) {
        const double d2 = (xt.row(i) - (1 - t) * prior.row(j)).squaredNorm();
        const double w = std::exp(-d2 / (2 * t * t));
        wsum += w;
        acc += w * prior.row(j);
      }
      const Eigen::RowVector2d post = acc / wsum;
      const Eigen::RowVector2d mc = (xt.row(i) - post) / t;
      CHECK((mc - oracle.row(i)).cwiseAbs().maxCoeff() < 0.03 / t);
    }
  }
}

TEST_CASE("point_mass velocity oracle") {
  DatasetSpec p{DatasetId::point_mass};
  p.center = {0.5, -1.0};
  Rng rng(6);
  const Matrix z = rng.normal_matrix(5, 2);
  const double t = 0.4;
  Matrix x = Matrix::Zero(5, 2);
  x.col(0).setConstant(0.5);
  x.col(1).setConstant(-1.0);
  const std::vector<double> ts(5, t);
  const Matrix xt = transport::interpolate_rows(x, z, ts);
  CHECK((oracle_velocity(p, xt, t) - (z - x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(oracle_velocity(DatasetSpec{}, xt, t), InvalidArgument);
  CHECK_THROWS_AS(oracle_velocity(p, xt, 0.0), InvalidArgument);
}
