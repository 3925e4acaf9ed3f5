#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "twinflow/autodiff.hpp"
#include "twinflow/data.hpp"
#include "twinflow/rng.hpp"

namespace twinflow::metrics {

inline constexpr std::size_t kDefaultProjections = 256;

// Mean over random unit directions of the exact 1-D squared W2 between the
// projected empirical distributions. Unequal sizes use the exact quantile
// coupling of the two empirical CDFs.
double sliced_w2(const Matrix& a, const Matrix& b, std::size_t n_proj, Rng& rng);

// Squared W2 between two 1-D empirical distributions.
double w2_squared_1d(std::vector<double> a, std::vector<double> b);

// V-statistic energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| (non-negative).
double energy_distance(const Matrix& a, const Matrix& b);

struct ModeCoverage {
  int modes_recovered = 0;
  std::array<std::size_t, data::kRingModes> counts{};
};

// Each sample goes to its nearest ring center; it counts toward that mode
// when within `radius_tol`. A mode is recovered with at least 1% of samples.
ModeCoverage mode_coverage(const Matrix& samples, const data::DatasetSpec& spec, double radius_tol);
inline double default_radius_tol(const data::DatasetSpec& spec) { return 3.0 * spec.sigma; }

// Mean Euclidean distance over up to `max_pairs` random unordered pairs of
// distinct samples. All pairs are enumerated when there are few enough.
double diversity(const Matrix& samples, std::size_t max_pairs, Rng& rng);

struct MetricsReport {
  double sliced_w2 = 0.0;
  double energy_dist = 0.0;
  int modes_recovered = -1;  // -1 when not applicable
  double diversity = 0.0;
  int nfe = 0;
};

struct EvalOptions {
  std::size_t n_proj = kDefaultProjections;
  std::size_t max_pairs = 20000;
  std::uint64_t seed = 0;
};

MetricsReport evaluate(const Matrix& generated, const Matrix& reference, const data::DatasetSpec& spec, int nfe,
                       const EvalOptions& opts = {});

}  // namespace twinflow::metrics
