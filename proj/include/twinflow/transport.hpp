#pragma once

// Linear transport between data x (t = 0) and Gaussian noise z (t = 1):
//   x_t = t * z + (1 - t) * x,   u = dx_t/dt = z - x.
// Times live in [-1, 1]; the sign selects the real (t > 0) or fake (t < 0)
// trajectory and only ever enters the network as a conditioning label.

#include <cstddef>
#include <span>
#include <vector>

#include "twinflow/autodiff.hpp"
#include "twinflow/rng.hpp"

namespace twinflow::transport {

// Lower clamp for sampled training times.
inline constexpr double kTimeFloor = 1e-3;
// Minimum gap t - t1 accepted by the N = 2 base loss.
inline constexpr double kMinLegGap = 1e-6;

class TimePoint {
 public:
  explicit TimePoint(double t);
  double value() const noexcept { return t_; }
  bool fake() const noexcept { return t_ < 0.0; }
  double magnitude() const noexcept { return t_ < 0.0 ? -t_ : t_; }
  TimePoint twin() const { return TimePoint(-t_); }

 private:
  double t_;
};

struct TransportPoint {
  std::vector<double> x_t;
  TimePoint t;
  std::vector<double> x;
  std::vector<double> z;
};

TransportPoint interpolate(std::span<const double> x, std::span<const double> z, double t);
std::vector<double> true_velocity(std::span<const double> x, std::span<const double> z);

// Score of p_t at x_t implied by a velocity prediction F (targeting z - x):
//   s(x_t) = -(x_t + (1 - t) F) / t.
std::vector<double> velocity_to_score(std::span<const double> x_t, double t,
                                      std::span<const double> velocity);

// Batched forms; row i uses t[i].
Matrix interpolate_rows(const Matrix& x, const Matrix& z, std::span<const double> t);
Matrix velocity_to_score_rows(const Matrix& x_t, std::span<const double> t, const Matrix& velocity);

// (t1, t2, t3) with t > t1 > t2 > t3 >= 0, each uniform below its predecessor.
struct TimeChain {
  double t1;
  double t2;
  double t3;
};

// t ~ U(floor, 1).
double sample_uniform_time(Rng& rng, double floor = kTimeFloor);
std::vector<double> sample_uniform_times(Rng& rng, std::size_t n, double floor = kTimeFloor);
// Draws are redrawn until the chain is strictly decreasing and t - t1 >= kMinLegGap.
TimeChain sample_chain_n2(Rng& rng, double t);

}  // namespace twinflow::transport
