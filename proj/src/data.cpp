#include "twinflow/data.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace twinflow::data {

DatasetId parse_dataset(std::string_view name) {
  if (name == "ring8") return DatasetId::ring8;
  if (name == "checkerboard") return DatasetId::checkerboard;
  if (name == "two_moons") return DatasetId::two_moons;
  if (name == "gauss_unit") return DatasetId::gauss_unit;
  if (name == "point_mass") return DatasetId::point_mass;
  throw InvalidArgument(fmt::format("unknown dataset '{}'", name));
}

std::string_view dataset_name(DatasetId id) {
  switch (id) {
    case DatasetId::ring8: return "ring8";
    case DatasetId::checkerboard: return "checkerboard";
    case DatasetId::two_moons: return "two_moons";
    case DatasetId::gauss_unit: return "gauss_unit";
    case DatasetId::point_mass: return "point_mass";
  }
  return "unknown";
}

std::size_t DatasetSpec::data_dim() const {
  if (id == DatasetId::gauss_unit || id == DatasetId::point_mass) return dim;
  return 2;
}

std::size_t DatasetSpec::n_classes() const {
  return id == DatasetId::ring8 && conditional ? kRingModes : 0;
}

std::vector<double> DatasetSpec::point_mass_center() const {
  if (center.empty()) return std::vector<double>(dim, 0.0);
  if (center.size() != dim) {
    throw InvalidArgument(fmt::format("point_mass center has {} entries for dim {}", center.size(), dim));
  }
  return center;
}

Matrix ring_centers(const DatasetSpec& spec) {
  Matrix c(kRingModes, 2);
  for (int k = 0; k < kRingModes; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kRingModes;
    c(k, 0) = spec.radius * std::cos(a);
    c(k, 1) = spec.radius * std::sin(a);
  }
  return c;
}

Samples sample_data(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("sample_data: n must be at least 1");
  const auto rows = static_cast<Eigen::Index>(n);
  Samples out;
  out.x.resize(rows, static_cast<Eigen::Index>(spec.data_dim()));
  switch (spec.id) {
    case DatasetId::ring8: {
      const Matrix centers = ring_centers(spec);
      out.labels.resize(n);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto k = static_cast<int>(rng.index(kRingModes));
        out.labels[static_cast<std::size_t>(i)] = k;
        out.x(i, 0) = centers(k, 0) + spec.sigma * rng.normal();
        out.x(i, 1) = centers(k, 1) + spec.sigma * rng.normal();
      }
      break;
    }
    case DatasetId::checkerboard: {
      // 4x4 board on [-4, 4]^2, the 8 cells with even (row + col) are filled.
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto cell = static_cast<int>(rng.index(8));
        const int row = cell / 2;
        const int col = 2 * (cell % 2) + (row % 2);
        out.x(i, 0) = -4.0 + 2.0 * col + 2.0 * rng.uniform();
        out.x(i, 1) = -4.0 + 2.0 * row + 2.0 * rng.uniform();
      }
      break;
    }
    case DatasetId::two_moons: {
      out.labels.resize(n);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const int moon = static_cast<int>(rng.index(2));
        const double a = std::numbers::pi * rng.uniform();
        double px = moon == 0 ? std::cos(a) : 1.0 - std::cos(a);
        double py = moon == 0 ? std::sin(a) : 0.5 - std::sin(a);
        px += 0.1 * rng.normal();
        py += 0.1 * rng.normal();
        out.labels[static_cast<std::size_t>(i)] = moon;
        out.x(i, 0) = 2.0 * (px - 0.5);
        out.x(i, 1) = 2.0 * (py - 0.25);
      }
      break;
    }
    case DatasetId::gauss_unit:
      for (Eigen::Index i = 0; i < out.x.size(); ++i) out.x.data()[i] = rng.normal();
      break;
    case DatasetId::point_mass: {
      const auto c = spec.point_mass_center();
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < out.x.cols(); ++j) out.x(i, j) = c[static_cast<std::size_t>(j)];
      }
      break;
    }
  }
  return out;
}

Matrix oracle_velocity(const DatasetSpec& spec, const Matrix& x_t, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument(fmt::format("oracle_velocity: t={} outside (0, 1]", t));
  if (static_cast<std::size_t>(x_t.cols()) != spec.data_dim()) {
    throw InvalidArgument("oracle_velocity: dimension mismatch");
  }
  switch (spec.id) {
    case DatasetId::gauss_unit: {
      // (x_t, u) jointly Gaussian: Cov(u, x_t) = (2t - 1) I, Var(x_t) = (t^2 + (1-t)^2) I.
      const double var = t * t + (1.0 - t) * (1.0 - t);
      return ((2.0 * t - 1.0) / var) * x_t;
    }
    case DatasetId::point_mass: {
      // z = (x_t - (1 - t) c) / t exactly, so u = z - c = (x_t - c) / t.
      const auto c = spec.point_mass_center();
      Matrix out = x_t;
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = (x_t(i, j) - c[static_cast<std::size_t>(j)]) / t;
      }
      return out;
    }
    default:
      throw InvalidArgument(
          fmt::format("oracle_velocity: no closed form for dataset {}", dataset_name(spec.id)));
  }
}

}  // namespace twinflow::data
