#pragma once

// Training objectives on twin trajectories.
//
// Conventions: the network predicts the average velocity A(x_t, t, r) whose
// jump x_t + (r - t) A lands on x_r; on the straight path A = u = z - x.
// Negative times select the fake trajectory and only enter as conditioning.
//
// Metric d(a, b) = (1/B) sum_i ||a_i - b_i||^2 (squared norm per sample,
// averaged over the batch).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "twinflow/autodiff.hpp"
#include "twinflow/model.hpp"
#include "twinflow/rng.hpp"
#include "twinflow/transport.hpp"

namespace twinflow::losses {

// A velocity field that can be evaluated with gradients (live parameters)
// or without (the stop-gradient copy).
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual std::size_t data_dim() const = 0;
  virtual ad::DiffValue live(const Matrix& x, std::span<const double> t, std::span<const double> r,
                             std::span<const int> labels) const = 0;
  virtual Matrix frozen(const Matrix& x, std::span<const double> t, std::span<const double> r,
                        std::span<const int> labels) const = 0;
};

// VelocityNet adapter. With a tape, live() records onto it; without one,
// live() returns constants and no gradients exist.
class NetworkModel final : public VelocityModel {
 public:
  NetworkModel(const VelocityNet& net, ad::Tape& tape);
  explicit NetworkModel(const VelocityNet& net);

  std::size_t data_dim() const override { return net_.config().data_dim; }
  ad::DiffValue live(const Matrix& x, std::span<const double> t, std::span<const double> r,
                     std::span<const int> labels) const override;
  Matrix frozen(const Matrix& x, std::span<const double> t, std::span<const double> r,
                std::span<const int> labels) const override;

  const ParamBinding& live_params() const noexcept { return live_; }

 private:
  const VelocityNet& net_;
  ParamBinding live_;
  ParamBinding frozen_;
};

enum class RectifyWeighting { none, kl_weight };

// Target time used for fake/real instantaneous-velocity evaluations in the
// adversarial loss and the velocity difference.
enum class FakeTarget {
  current_time,  // A(x, +-t', +-t')
  zero,          // A(x, +-t', 0)
};

struct MixConfig {
  double lambda = 1.0 / 3.0;
  RectifyWeighting rectify_weighting = RectifyWeighting::none;
  FakeTarget fake_target = FakeTarget::current_time;
  double time_floor = transport::kTimeFloor;
};

struct LossBreakdown {
  double base = 0.0;
  double adv = 0.0;
  double rectify = 0.0;
  double total = 0.0;
  std::size_t twin_count = 0;
  std::size_t base_count = 0;
};

struct Batch {
  Matrix x;
  Matrix z;
  std::vector<int> labels;  // empty for unconditional data

  std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
};

struct MixedLoss {
  ad::DiffValue total;
  LossBreakdown breakdown;
};

ad::DiffValue squared_l2(const ad::DiffValue& a, const ad::DiffValue& b);
// Per-sample weighted form: (1/B) sum_i w_i ||a_i - b_i||^2.
ad::DiffValue weighted_squared_l2(const ad::DiffValue& a, const ad::DiffValue& b,
                                  std::span<const double> weights);

// Any-step objective with two teacher legs:
//   g  = (t3 - t)  A(x_t,  t,  t3)      (live)
//   h1 = (t2 - t1) A(x_t1, t1, t2)      (frozen)
//   h2 = (t3 - t2) A(x_t2, t2, t3)      (frozen)
//   d(u, (g - h1 - h2) / (t1 - t))
ad::DiffValue base_loss_n2(const VelocityModel& model, const Matrix& x, const Matrix& z,
                           std::span<const int> labels, std::span<const double> t,
                           std::span<const transport::TimeChain> chains);

// One-jump prediction of the clean point: x_t - t A(x_t, t, 0).
ad::DiffValue make_fake(const VelocityModel& model, const Matrix& x, const Matrix& z,
                        std::span<const int> labels, std::span<const double> t, bool grad);

// Flow matching on the fake trajectory, conditioned on -t'.
ad::DiffValue adv_loss(const VelocityModel& model, const Matrix& x_fake, const Matrix& z_fake,
                       std::span<const int> labels, std::span<const double> t_prime,
                       FakeTarget target = FakeTarget::current_time);

// A(x, -t', .) - A(x, t', .), both without gradients.
Matrix velocity_diff(const VelocityModel& model, const Matrix& x, std::span<const double> t_prime,
                     std::span<const int> labels, FakeTarget target = FakeTarget::current_time);

// d(F, sg(dv + F)) with F = A(x_t, t, 0) live and dv the velocity difference
// at the re-noised fake sample. Gradient: -(2/B) sum_i dv_i^T dF_i/dtheta.
ad::DiffValue rectify_loss(const VelocityModel& model, const Matrix& x, const Matrix& z,
                           std::span<const int> labels, std::span<const double> t,
                           const Matrix& z_fake, std::span<const double> t_prime,
                           RectifyWeighting weighting = RectifyWeighting::none,
                           FakeTarget target = FakeTarget::current_time,
                           double time_floor = transport::kTimeFloor);

// Size of the TwinFlow subset: ceil(lambda * B).
std::size_t twin_subset_size(double lambda, std::size_t batch);

// Splits the batch: the first twin_subset_size rows train adv + rectify with
// target time 0, the rest train the base loss. Each loss is a mean over its
// own subset; total = base + adv + rectify.
MixedLoss mixed_step_loss(const VelocityModel& model, const Batch& batch, const MixConfig& cfg, Rng& rng);

}  // namespace twinflow::losses
