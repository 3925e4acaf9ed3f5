#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "twinflow/autodiff.hpp"
#include "twinflow/rng.hpp"

namespace twinflow::data {

enum class DatasetId { ring8, checkerboard, two_moons, gauss_unit, point_mass };

DatasetId parse_dataset(std::string_view name);
std::string_view dataset_name(DatasetId id);

struct DatasetSpec {
  DatasetId id = DatasetId::ring8;
  std::size_t dim = 2;      // gauss_unit and point_mass only; the others are 2-D
  double radius = 4.0;      // ring8
  double sigma = 0.15;      // ring8 per-mode std
  std::vector<double> center;  // point_mass; zeros when empty
  bool conditional = false;    // ring8 labels fed to the network

  std::size_t data_dim() const;
  // Classes the network is conditioned on: 8 for conditional ring8, else 0.
  std::size_t n_classes() const;
  std::vector<double> point_mass_center() const;
};

inline constexpr int kRingModes = 8;

struct Samples {
  Matrix x;
  std::vector<int> labels;  // mode index for ring8, moon index for two_moons, empty otherwise
};

Samples sample_data(const DatasetSpec& spec, std::size_t n, Rng& rng);

// Mode centers of ring8, one per row.
Matrix ring_centers(const DatasetSpec& spec);

// Closed-form E[z - x | x_t] under linear transport (gauss_unit, point_mass).
Matrix oracle_velocity(const DatasetSpec& spec, const Matrix& x_t, double t);

}  // namespace twinflow::data
