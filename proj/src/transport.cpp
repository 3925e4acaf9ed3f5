#include "twinflow/transport.hpp"

#include <cmath>

#include <fmt/format.h>

namespace twinflow::transport {

namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw InvalidArgument(fmt::format("{}: dimension mismatch ({} vs {})", what, a.size(), b.size()));
  }
}

void require_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InvalidArgument(fmt::format("{}: t={} outside [0, 1]", what, t));
  }
}

void require_positive_time(double t, const char* what) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw InvalidArgument(fmt::format("{}: t={} must lie in (0, 1] (score is singular at t=0)", what, t));
  }
}

}  // namespace

TimePoint::TimePoint(double t) : t_(t) {
  if (!(std::abs(t) <= 1.0)) throw InvalidArgument(fmt::format("time {} outside [-1, 1]", t));
}

TransportPoint interpolate(std::span<const double> x, std::span<const double> z, double t) {
  require_same_dim(x, z, "interpolate");
  require_unit_interval(t, "interpolate");
  std::vector<double> x_t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Exact endpoints: at t=0 the first term is 0*z and the second 1*x.
    x_t[i] = t * z[i] + (1.0 - t) * x[i];
  }
  return {std::move(x_t), TimePoint(t), {x.begin(), x.end()}, {z.begin(), z.end()}};
}

std::vector<double> true_velocity(std::span<const double> x, std::span<const double> z) {
  require_same_dim(x, z, "true_velocity");
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = z[i] - x[i];
  return u;
}

std::vector<double> velocity_to_score(std::span<const double> x_t, double t,
                                      std::span<const double> velocity) {
  require_same_dim(x_t, velocity, "velocity_to_score");
  require_positive_time(t, "velocity_to_score");
  std::vector<double> s(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) s[i] = -(x_t[i] + (1.0 - t) * velocity[i]) / t;
  return s;
}

Matrix interpolate_rows(const Matrix& x, const Matrix& z, std::span<const double> t) {
  if (x.rows() != z.rows() || x.cols() != z.cols() || static_cast<std::size_t>(x.rows()) != t.size()) {
    throw InvalidArgument("interpolate_rows: batch dimensions disagree");
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    require_unit_interval(ti, "interpolate_rows");
    out.row(i) = ti * z.row(i) + (1.0 - ti) * x.row(i);
  }
  return out;
}

Matrix velocity_to_score_rows(const Matrix& x_t, std::span<const double> t, const Matrix& velocity) {
  if (x_t.rows() != velocity.rows() || x_t.cols() != velocity.cols() ||
      static_cast<std::size_t>(x_t.rows()) != t.size()) {
    throw InvalidArgument("velocity_to_score_rows: batch dimensions disagree");
  }
  Matrix out(x_t.rows(), x_t.cols());
  for (Eigen::Index i = 0; i < x_t.rows(); ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    require_positive_time(ti, "velocity_to_score_rows");
    out.row(i) = -(x_t.row(i) + (1.0 - ti) * velocity.row(i)) / ti;
  }
  return out;
}

double sample_uniform_time(Rng& rng, double floor) { return floor + (1.0 - floor) * rng.uniform(); }

std::vector<double> sample_uniform_times(Rng& rng, std::size_t n, double floor) {
  std::vector<double> t(n);
  for (double& v : t) v = sample_uniform_time(rng, floor);
  return t;
}

TimeChain sample_chain_n2(Rng& rng, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument(fmt::format("sample_chain_n2: t={} not in (0, 1]", t));
  if (t < 2.0 * kMinLegGap) {
    throw InvalidArgument(fmt::format("sample_chain_n2: t={} too small for a chain", t));
  }
  TimeChain c{};
  do {
    c.t1 = t * rng.uniform();
  } while (t - c.t1 < kMinLegGap || c.t1 <= 0.0);
  do {
    c.t2 = c.t1 * rng.uniform();
  } while (!(c.t2 < c.t1) || c.t2 <= 0.0);
  do {
    c.t3 = c.t2 * rng.uniform();
  } while (!(c.t3 < c.t2));
  return c;
}

}  // namespace twinflow::transport
